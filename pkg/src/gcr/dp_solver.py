"""Backward induction on information states, greedy policies, evaluation and rollouts."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .mdp_core import MdpModel, PolicyHoleError, Trajectory, simulate_trajectory
from .risk_frontier import (INFEASIBLE, InfoState, InfoStateSpace, RiskFrontierStep,
                            reachable_states, successors, terminal_row)


class Decision(NamedTuple):
    action: int
    z: float
    aux: Any = None


class ValueTable:
    """V_t per period t = 0..T+1, each a dict InfoState -> premium (inf = infeasible)."""

    def __init__(self, rows: list[dict]):
        self.rows = rows

    def __getitem__(self, key):
        t, y = key
        return self.rows[t][y]

    def __len__(self) -> int:
        return len(self.rows)

    def row(self, t: int) -> dict:
        return self.rows[t]


class Policy:
    """Decisions per period t = 0..T; ``None`` marks a state with no feasible decision."""

    def __init__(self, rows: list[dict]):
        self.rows = rows

    def get(self, t: int, y: InfoState) -> Decision | None:
        if y not in self.rows[t]:
            raise PolicyHoleError(t, y)
        return self.rows[t][y]

    def decide(self, t: int, y: InfoState) -> Decision:
        d = self.get(t, y)
        if d is None:
            raise PolicyHoleError(t, y, "state has no feasible decision")
        return d

    def with_decision(self, t: int, y: InfoState, d: Decision | None) -> "Policy":
        rows = [dict(r) for r in self.rows]
        rows[t][y] = d
        return Policy(rows)


@dataclass
class SolveResult:
    values: ValueTable
    policy: Policy
    optimum: float
    initial: InfoState
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return not math.isinf(self.optimum)


def stage_candidates(step: RiskFrontierStep, space: InfoStateSpace, t: int, y: InfoState,
                     next_row: dict, actions=None):
    """Yield (phi, Decision) for every candidate in tie-break order (a, z, aux)."""
    model = space.model
    probs = model.probs[t]
    for a in range(model.num_actions) if actions is None else actions:
        if not step.action_allowed(t, y, a):
            continue
        payoffs = model.payoff[t, y[0], a]
        for z, aux in step.decision_grid(t, y).candidates():
            nxt = successors(space, t, y, a, z, aux, next_row)
            yield step.min_premium(t, y, probs, payoffs, z, aux, nxt), Decision(a, z, aux)


def solve_stage(step: RiskFrontierStep, space: InfoStateSpace, model: MdpModel, t: int,
                y: InfoState, next_row: dict) -> tuple[float, Decision | None]:
    """Least stage premium at (t, y) and its minimiser; (INFEASIBLE, None) if none exists."""
    if model is not space.model:
        raise ValueError("information-state space was built for a different model")
    best, arg = INFEASIBLE, None
    for phi, d in stage_candidates(step, space, t, y, next_row):
        if phi < best:
            best, arg = phi, d
    return best, arg


def solve(model: MdpModel, step: RiskFrontierStep, space: InfoStateSpace | None = None,
          start: int = 0) -> SolveResult:
    """Backward pass T..start over every grid state of every period."""
    if space is None:
        space = step.info_space(model)
    T = model.horizon
    clock = time.perf_counter()
    rows: list[dict] = [dict() for _ in range(T + 2)]
    prow: list[dict] = [dict() for _ in range(T + 1)]
    rows[T + 1] = terminal_row(step, space)
    counts = {}
    witness = None
    for t in range(T, start - 1, -1):
        nrow = rows[t + 1]
        n_bad = 0
        for y in space.grids[t]:
            v, d = solve_stage(step, space, model, t, y, nrow)
            rows[t][y] = v
            prow[t][y] = d
            if d is None:
                n_bad += 1
        counts[t] = {"states": len(space.grids[t]), "infeasible": n_bad}
        if n_bad and witness is None:
            witness = t
    values = ValueTable(rows)
    opt = rows[start][space.initial] if start == 0 else math.nan
    diag = {"stage_counts": counts, "seconds": time.perf_counter() - clock}
    if start == 0:
        reach = reachable_states(space, lambda t, y: _as_triple(prow[t].get(y)))
        diag["unreachable"] = {t: len(space.grids[t]) - len(reach[t] & set(space.grids[t]))
                               for t in range(T + 2)}
        if math.isinf(opt):
            diag["infeasible_from"] = witness
    return SolveResult(values, Policy(prow), opt, space.initial, diag)


def _as_triple(d: Decision | None):
    return None if d is None else (d.action, d.z, d.aux)


def evaluate_policy(model: MdpModel, step: RiskFrontierStep, space: InfoStateSpace,
                    policy: Policy, states: list | None = None) -> ValueTable:
    """Backward pass with decisions fixed by ``policy``.

    By default every grid state is evaluated; states marked infeasible in the policy
    evaluate to INFEASIBLE.  ``states`` restricts the pass to given per-period sets.
    """
    T = model.horizon
    rows: list[dict] = [dict() for _ in range(T + 2)]
    rows[T + 1] = terminal_row(step, space)
    for t in range(T, -1, -1):
        probs = model.probs[t]
        todo = space.grids[t] if states is None else states[t]
        for y in todo:
            d = policy.get(t, y)
            if d is None:
                rows[t][y] = INFEASIBLE
                continue
            nxt = successors(space, t, y, d.action, d.z, d.aux, rows[t + 1])
            rows[t][y] = step.min_premium(t, y, probs, model.payoff[t, y[0], d.action],
                                          d.z, d.aux, nxt)
    return ValueTable(rows)


@dataclass
class MonteCarloReport:
    trajectories: list[Trajectory]
    cumulative: np.ndarray
    payoffs: np.ndarray          # (n, T+1)
    wealth: np.ndarray           # (n, T+2)

    @property
    def summary(self) -> dict:
        c = self.cumulative
        return {"mean": float(np.mean(c)),
                "sigma": float(np.std(c, ddof=1)) if c.size > 1 else 0.0,
                "min": float(np.min(c)), "max": float(np.max(c))}


def wealth_path(traj: Trajectory, space: InfoStateSpace) -> list[float]:
    """Wealth coordinate of each info state, or the running payoff sum if there is none."""
    if "wealth" in space.coord_names:
        k = 1 + space.coord_names.index("wealth")
        return [float(y[k]) for y in traj.info_states]
    out, acc = [0.0], 0.0
    for r in traj.payoffs:
        acc += r
        out.append(acc)
    return out


def monte_carlo(model: MdpModel, policy: Policy, space: InfoStateSpace, n: int,
                seed: int) -> MonteCarloReport:
    """Trajectory k is simulated with the seed sequence (seed, k)."""
    if n < 1:
        raise ValueError("need at least one trajectory")
    trajs = [simulate_trajectory(model, policy, space, [seed, k]) for k in range(n)]
    cum = np.array([tr.cumulative_payoff for tr in trajs])
    pay = np.array([tr.payoffs for tr in trajs])
    wealth = np.array([wealth_path(tr, space) for tr in trajs])
    return MonteCarloReport(trajs, cum, pay, wealth)
