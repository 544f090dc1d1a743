"""Fast backward induction for wealth-lattice frontiers.

Applies when wealth lives on a consecutive integer grid, payoffs and disbursements are
integers, and the stage premium has the form

    [z +] E[ V'(f(s, a, xi), clip(w + lam * r - kappa * z)) - rho * r ]

with a feasibility floor ``z >= need(s, a, w)`` and an action mask.  Steps opt in by
providing ``lattice_terms(model)``.  Values and tie-breaks match :func:`gcr.dp_solver.solve`
bit for bit.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .dp_solver import Decision, Policy, SolveResult, ValueTable
from .mdp_core import MdpModel
from .risk_frontier import ACCEPT_TOL, INFEASIBLE, InfoStateSpace, reachable_states


@dataclass(frozen=True)
class LatticeTerms:
    wealth: np.ndarray                               # consecutive integers, ascending
    zs: np.ndarray                                   # disbursement grid (integers >= 0)
    lam: int                                         # payoff enters next wealth
    kappa: int                                       # disbursement leaves next wealth
    zcost: bool                                      # z is part of the premium
    rho: int                                         # -r is part of the premium
    need: Callable[[int], np.ndarray]                # t -> (S, A, W) floor on z
    allowed: Callable[[int], np.ndarray]             # t -> (S, A, W) action mask
    terminal: np.ndarray                             # (S, W)
    endowment: bool = False                          # t = 0 picks w0 from the wealth grid


def _check(model: MdpModel, terms: LatticeTerms) -> None:
    w = terms.wealth
    if w.size < 2 or not np.all(np.diff(w) == 1) or not np.all(w == np.round(w)):
        raise ValueError("lattice solver needs a consecutive integer wealth grid")
    if not np.all(model.payoff == np.round(model.payoff)):
        raise ValueError("lattice solver needs integer payoffs")
    if not np.all(terms.zs == np.round(terms.zs)) or terms.zs.min() < 0:
        raise ValueError("lattice solver needs nonnegative integer disbursements")


def _row(S: int, wealth: np.ndarray, vals: np.ndarray) -> dict:
    return {(s, float(w)): float(vals[s, i]) for s in range(S) for i, w in enumerate(wealth)}


def _policy_row(S, wealth, best, act, zi, zs) -> dict:
    out = {}
    for s in range(S):
        for i, w in enumerate(wealth):
            a = int(act[s, i])
            out[(s, float(w))] = None if a < 0 or best[s, i] == INFEASIBLE else \
                Decision(a, float(zs[zi[s, i]]), None)
    return out


def _endowment_stage(terms: LatticeTerms, U: np.ndarray, need: np.ndarray, s: int, iy: int):
    """Lexicographic (a, z, w0) minimum of w0 + U[s, a, clip(iy + w0 - z)] at t = 0."""
    wealth, zs = terms.wealth, terms.zs
    W = wealth.size
    A = U.shape[1]
    M = np.full((A, zs.size, W), INFEASIBLE)
    idx = np.clip(iy + wealth[None, :].astype(np.int64) - zs[:, None].astype(np.int64), 0, W - 1)
    for a in range(A):
        if not terms.allowed(0)[s, a, iy]:
            continue
        feas = zs >= need[s, a, iy] - ACCEPT_TOL
        M[a, feas] = wealth[None, :] + U[s, a][idx[feas]]
    k = int(np.argmin(M))
    if M.flat[k] == INFEASIBLE:
        return INFEASIBLE, None
    a, kz, j = np.unravel_index(k, M.shape)
    return float(M.flat[k]), Decision(int(a), float(zs[kz]), float(wealth[j]))


def solve_lattice(model: MdpModel, step, space: InfoStateSpace | None = None) -> SolveResult:
    if space is None:
        space = step.info_space(model)
    terms: LatticeTerms = step.lattice_terms(model)
    _check(model, terms)
    clock = time.perf_counter()
    T, S = model.horizon, model.num_states
    wealth = terms.wealth.astype(float)
    zs = terms.zs.astype(float)
    lo = int(wealth[0])
    rows = [dict() for _ in range(T + 2)]
    prow = [dict() for _ in range(T + 1)]
    V = np.ascontiguousarray(terms.terminal, dtype=float)
    rows[T + 1] = _row(S, wealth, V)
    counts = {}
    witness = None
    for t in range(T, -1, -1):
        shift = np.ascontiguousarray(terms.lam * model.payoff[t].astype(np.int64))
        U = kernels.accumulate_next(V, np.ascontiguousarray(model.next_state[t]), shift,
                                    np.ascontiguousarray(model.payoff[t]),
                                    np.ascontiguousarray(model.probs[t]), terms.rho)
        need = np.ascontiguousarray(terms.need(t), dtype=float)
        if t == 0:
            n_bad = 0
            for y in space.grids[0]:
                s, iy = y[0], int(round(y[1])) - lo
                if terms.endowment:
                    v, d = _endowment_stage(terms, U, need, s, iy)
                else:
                    best, act, zi = kernels.sweep(
                        U[s:s + 1], need[s:s + 1], terms.allowed(0)[s:s + 1].astype(np.uint8),
                        zs, terms.kappa, int(terms.zcost), ACCEPT_TOL)
                    v = float(best[0, iy])
                    d = None if act[0, iy] < 0 or v == INFEASIBLE else \
                        Decision(int(act[0, iy]), float(zs[zi[0, iy]]), None)
                rows[0][y] = v
                prow[0][y] = d
                n_bad += d is None
            counts[0] = {"states": len(space.grids[0]), "infeasible": n_bad}
        else:
            allowed = np.ascontiguousarray(terms.allowed(t), dtype=np.uint8)
            best, act, zi = kernels.sweep(U, need, allowed, zs, terms.kappa,
                                          int(terms.zcost), ACCEPT_TOL)
            rows[t] = _row(S, wealth, best)
            prow[t] = _policy_row(S, wealth, best, act, zi, zs)
            n_bad = int(np.count_nonzero(act < 0))
            counts[t] = {"states": S * wealth.size, "infeasible": n_bad}
            V = np.ascontiguousarray(best)
        if counts[t]["infeasible"] and witness is None:
            witness = t
    opt = rows[0][space.initial]
    diag = {"stage_counts": counts, "seconds": time.perf_counter() - clock,
            "backend": kernels.BACKEND}
    reach = reachable_states(space, lambda t, y: None if prow[t].get(y) is None
                             else tuple(prow[t][y]))
    diag["unreachable"] = {t: len(space.grids[t]) - len(reach[t] & set(space.grids[t]))
                           for t in range(T + 2)}
    if opt == INFEASIBLE:
        diag["infeasible_from"] = witness
    return SolveResult(ValueTable(rows), Policy(prow), opt, space.initial, diag)
