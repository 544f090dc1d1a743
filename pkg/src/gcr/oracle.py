"""Brute-force ground truth for tiny instances.

Nothing here uses information states: objectives are computed on the full history tree so
that the compressed recursions in :mod:`gcr.risk_models` are tested against the
definitions they are meant to reproduce.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .dp_solver import Decision, Policy, evaluate_policy, solve
from .mdp_core import (EnumerationSizeError, History, MdpModel, enumerate_histories,
                       make_distribution)
from .risk_frontier import (INFEASIBLE, InfoStateSpace, RiskFrontierStep, check_membership,
                            reachable_states, successors, tail_risk_evaluate, terminal_row)
from . import risk_models as rm

KINDS = ("neg_expected_total", "entropic", "nested", "expected_utility_of_shortfall",
         "cvar_of_shortfall", "quantile_of_shortfall", "worst_case_shortfall", "max_shortfall")
SHORTFALL_KINDS = KINDS[3:]


@dataclass(frozen=True)
class ObjectiveSpec:
    """Closed-form objective evaluated on the full outcome tree.

    ``alpha`` is the tail mass for ``cvar_of_shortfall`` (mean of the worst alpha share),
    ``tau`` the level of the upper quantile sup{y : P(total >= y) >= tau}.
    """

    kind: str
    gamma: float = 1.0
    specs: Any = None
    utility: Any = None
    alpha: float = 0.5
    tau: float = 0.5
    budget: float = 0.0
    budget_step: float = 0.5
    initial_wealth: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")


@dataclass(frozen=True)
class EnumerationBudget:
    max_policies: int = 10**7


# ----------------------------------------------------------------- policy counting


def policy_count(model: MdpModel, z_grid, reduced: bool = False) -> int:
    """Number of deterministic history-dependent policies.

    ``reduced`` counts decision trees over the histories each policy can actually reach,
    one representative per distinct behaviour.
    """
    d = model.num_actions * len(z_grid)
    T = model.horizon
    if reduced:
        nodes = sum(model.num_outcomes ** t for t in range(T + 1))
    else:
        nodes = sum((model.num_actions * model.num_outcomes) ** t for t in range(T + 1))
    return d ** nodes


def _decisions(model: MdpModel, z_grid) -> list[tuple[int, float]]:
    return [(a, float(z)) for a in range(model.num_actions) for z in z_grid]


def enumerate_policies(model: MdpModel, z_grid, budget: EnumerationBudget | None = None,
                       reduced: bool = False) -> Iterator[dict]:
    """Lexicographic enumeration of policies as dicts: history steps -> (action, z).

    The full enumeration assigns a decision to every history; the reduced one only to
    histories consistent with the policy's own earlier actions.
    """
    budget = budget or EnumerationBudget()
    count = policy_count(model, z_grid, reduced)
    if count > budget.max_policies:
        raise EnumerationSizeError("policy count", count, budget.max_policies)
    dec = _decisions(model, z_grid)
    if not reduced:
        hists = [h.steps for t in range(model.horizon + 1) for h in enumerate_histories(model, t)]
        for choice in itertools.product(dec, repeat=len(hists)):
            yield dict(zip(hists, choice))
        return
    yield from _trees(model, dec, 0, ())


def _trees(model, dec, t, steps) -> Iterator[dict]:
    if t > model.horizon:
        yield {}
        return
    for a, z in dec:
        kids = [list(_trees(model, dec, t + 1, steps + ((a, xi),)))
                for xi in range(model.num_outcomes)]
        for combo in itertools.product(*kids):
            out = {steps: (a, z)}
            for sub in combo:
                out.update(sub)
            yield out


# ------------------------------------------------------------- closed-form pieces


def cvar_sorted_tail(probs, values, alpha: float, form: str = "cost") -> float:
    """CVaR as the mean of a sorted tail: worst (1 - alpha) share of a cost (``cost``),
    lowest alpha share of a payoff (``payoff``)."""
    p = np.asarray(probs, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = p > 0
    p, v = p[keep], v[keep]
    if form == "cost":
        mass, order = 1.0 - alpha, np.argsort(-v, kind="stable")
    else:
        mass, order = alpha, np.argsort(v, kind="stable")
    acc, left = 0.0, mass
    for i in order:
        take = min(p[i], left)
        if take <= 0:
            break
        acc += take * v[i]
        left -= take
    return acc / mass


def _tail_mean_rows(P, V, mass, worst_high: bool) -> np.ndarray:
    """Row-wise mean of the worst ``mass`` share (highest values if worst_high)."""
    order = np.argsort(-V if worst_high else V, axis=1, kind="stable")
    vs = np.take_along_axis(V, order, axis=1)
    ps = P[order]
    before = np.cumsum(ps, axis=1) - ps
    take = np.clip(mass - before, 0.0, ps)
    with np.errstate(invalid="ignore"):
        contrib = np.where(take > 0, take * vs, 0.0)
    return contrib.sum(axis=1) / mass


def _upper_quantile_rows(P, V, tau) -> np.ndarray:
    order = np.argsort(-V, axis=1, kind="stable")
    vs = np.take_along_axis(V, order, axis=1)
    cum = np.cumsum(P[order], axis=1)
    first = np.argmax(cum >= tau - 1e-12, axis=1)
    return vs[np.arange(len(V)), first]


def _tv_sup_rows(P, V, radius) -> np.ndarray:
    """Row-wise sup of E_Q[V] over the total-variation ball of ``radius`` around P > 0."""
    order = np.argsort(V, axis=1, kind="stable")
    vs = np.take_along_axis(V, order, axis=1)
    q = P[order].astype(float)
    move = np.minimum(radius, 1.0 - q[:, -1])
    before = np.cumsum(q[:, :-1], axis=1) - q[:, :-1]
    removed = np.clip(move[:, None] - before, 0.0, q[:, :-1])
    q[:, :-1] -= removed
    q[:, -1] += move
    with np.errstate(invalid="ignore"):
        out = np.where(q > 0, q * vs, 0.0).sum(axis=1)
    return np.where(np.isinf(V).any(axis=1), INFEASIBLE, out)


def _expect_rows(P, V) -> np.ndarray:
    keep = P > 0
    return V[:, keep] @ P[keep]


# --------------------------------------------------------------- tree expansion


def _acceptance(acceptance, t):
    if acceptance is None:
        return rm.NO_ACCEPTANCE
    return acceptance[t] if isinstance(acceptance, (list, tuple)) else acceptance


def _feasible(model, spec, acceptance, t, s, a, z, w) -> bool:
    acc = _acceptance(acceptance, t)
    x = model.payoff[t, s, a]
    if spec.kind == "max_shortfall":
        x = x + w
    return acc.admits(model.probs[t], x, z)


def _rho(spec: ObjectiveSpec, t: int):
    specs = spec.specs if isinstance(spec.specs, (list, tuple)) else [spec.specs]
    return specs[t] if len(specs) > 1 else specs[0]


def _budget_levels(spec: ObjectiveSpec) -> int:
    return int(round(spec.budget / spec.budget_step)) if spec.budget > 0 else 0


def direct_objective(model: MdpModel, policy: dict, spec: ObjectiveSpec,
                     acceptance=None) -> float:
    """Objective of one history-dependent policy, by expanding the outcome tree."""
    T = model.horizon
    if spec.kind == "nested":
        return -_nested_value(model, policy, spec, 0, model.initial_state, ())
    if spec.kind == "worst_case_shortfall":
        return _worst_value(model, policy, spec, acceptance, 0, model.initial_state, (),
                            _budget_levels(spec))
    paths = []  # (prob, sumX, sumZ, maxZ, feasible)

    def walk(t, s, steps, w, prob, sx, sz, mz, ok):
        if t > T:
            paths.append((prob, sx, sz, mz, ok))
            return
        a, z = policy[steps]
        ok = ok and _feasible(model, spec, acceptance, t, s, a, z, w)
        for xi in range(model.num_outcomes):
            p = model.probs[t, xi]
            if p <= 0:
                continue
            r = float(model.payoff[t, s, a, xi])
            walk(t + 1, int(model.next_state[t, s, a, xi]), steps + ((a, xi),), w + r,
                 prob * p, sx + r, sz + z, max(mz, z), ok)

    walk(0, model.initial_state, (), spec.initial_wealth, 1.0, 0.0, 0.0, 0.0, True)
    P = np.array([q[0] for q in paths])
    sx = np.array([q[1] for q in paths])
    sz = np.array([q[2] for q in paths])
    mz = np.array([q[3] for q in paths])
    if spec.kind in SHORTFALL_KINDS and not all(q[4] for q in paths):
        return INFEASIBLE
    k = spec.kind
    if k == "neg_expected_total":
        return -float(P @ sx)
    if k == "entropic":
        return float(P @ np.exp(-spec.gamma * sx))
    if k == "expected_utility_of_shortfall":
        return float(P @ np.array([spec.utility(v) for v in sz], dtype=float))
    if k == "cvar_of_shortfall":
        return float(_tail_mean_rows(P, sz[None, :], spec.alpha, True)[0])
    if k == "quantile_of_shortfall":
        return float(_upper_quantile_rows(P, sz[None, :], spec.tau)[0])
    return float(mz.max())  # max_shortfall


def _nested_value(model, policy, spec, t, s, steps) -> float:
    """Nested payoff-form value rho_t(X_t + value_{t+1}); the caller negates it."""
    if t > model.horizon:
        return 0.0
    a, _ = policy[steps]
    ys = []
    for xi in range(model.num_outcomes):
        nxt = _nested_value(model, policy, spec, t + 1, int(model.next_state[t, s, a, xi]),
                            steps + ((a, xi),)) if model.probs[t, xi] > 0 else 0.0
        ys.append(float(model.payoff[t, s, a, xi]) + nxt)
    sp = _rho(spec, t)
    p = model.probs[t]
    if sp.kind == "expectation":
        return float(_expect_rows(p, np.array([ys]))[0])
    return cvar_sorted_tail(p, ys, sp.alpha, "payoff")


def _worst_value(model, policy, spec, acceptance, t, s, steps, budget_idx) -> float:
    """Adversarial expected shortfall with ``budget_idx`` grid units of TV budget left."""
    if t > model.horizon:
        return 0.0
    a, z = policy[steps]
    if not _feasible(model, spec, acceptance, t, s, a, z, 0.0):
        return INFEASIBLE
    p = model.probs[t]
    best = -math.inf
    kids = {}
    for spend in range(budget_idx + 1):
        left = budget_idx - spend
        if left not in kids:
            kids[left] = [_worst_value(model, policy, spec, acceptance, t + 1,
                                       int(model.next_state[t, s, a, xi]),
                                       steps + ((a, xi),), left)
                          for xi in range(model.num_outcomes)]
        vals = np.array([kids[left]])
        if np.isinf(vals).any():
            return INFEASIBLE
        best = max(best, float(_tv_sup_rows(p, vals, spend * spec.budget_step)[0]))
    return z + best


# ------------------------------------------------------- vectorised exhaustive search


class _Search:
    """Exhaustive evaluation of every reduced policy tree with numpy broadcasting.

    Options at a node are ordered (decision, child_0 option, child_1 option, ...), which is
    the lexicographic order of :func:`enumerate_policies` with ``reduced=True``.
    """

    def __init__(self, model, spec, z_grid, acceptance):
        self.model, self.spec, self.acceptance = model, spec, acceptance
        self.dec = _decisions(model, z_grid)
        self.memo = {}
        self.nb = _budget_levels(spec) + 1

    def node(self, t, s, w):
        key = (t, s, w)
        if key not in self.memo:
            self.memo[key] = self._node(t, s, w)
        return self.memo[key]

    def _leaf(self):
        k = self.spec.kind
        if k == "nested":
            return np.zeros(1)
        if k == "worst_case_shortfall":
            return np.zeros((1, self.nb))
        return np.zeros((1, 1))

    def _node(self, t, s, w):
        m, spec = self.model, self.spec
        if t > m.horizon:
            return self._leaf()
        n_x = m.num_outcomes
        p = m.probs[t]
        blocks = []
        for a, z in self.dec:
            feas = _feasible(m, spec, self.acceptance, t, s, a, z, w)
            kids = []
            for xi in range(n_x):
                r = float(m.payoff[t, s, a, xi])
                w_next = w + r if spec.kind == "max_shortfall" else w
                kids.append((r, self.node(t + 1, int(m.next_state[t, s, a, xi]), w_next)))
            blocks.append(self._combine(p, z, feas, kids))
        return np.concatenate(blocks, axis=0)

    def _combine(self, p, z, feas, kids):
        k = self.spec.kind
        n_x = len(kids)
        n_c = kids[0][1].shape[0]
        shape = (n_c,) * n_x

        def spread(j, arr):
            # broadcast child j's option axis to position j of the combination grid
            idx = [None] * n_x
            idx[j] = slice(None)
            return arr[tuple(idx) + (Ellipsis,)]

        if k == "nested":
            cols = [np.broadcast_to(spread(j, r + c), shape).reshape(-1)
                    for j, (r, c) in enumerate(kids)]
            Y = np.stack(cols, axis=1)
            sp = _rho(self.spec, self._current_t)
            if sp.kind == "expectation":
                return _expect_rows(p, Y)
            return _tail_mean_rows(p, Y, sp.alpha, False)
        if k == "worst_case_shortfall":
            V = np.stack([np.broadcast_to(spread(j, c), shape + (self.nb,)).reshape(-1, self.nb)
                          for j, (_, c) in enumerate(kids)], axis=1)  # (combos, X, B)
            out = np.full((V.shape[0], self.nb), -math.inf)
            step = self.spec.budget_step
            for b in range(self.nb):
                for spend in range(b + 1):
                    out[:, b] = np.maximum(out[:, b],
                                           _tv_sup_rows(p, V[:, :, b - spend], spend * step))
            out = z + out
            if not feas:
                out[:] = INFEASIBLE
            return out
        parts = []
        for j, (r, c) in enumerate(kids):
            if k in ("neg_expected_total", "entropic"):
                c = c + r
            elif k == "max_shortfall":
                c = np.maximum(c, z)
            else:
                c = c + z
            parts.append(np.broadcast_to(spread(j, c), shape + (c.shape[1],))
                         .reshape(-1, c.shape[1]))
        out = np.concatenate(parts, axis=1)
        if not feas and k in SHORTFALL_KINDS:
            out = np.full_like(out, INFEASIBLE)
        return out

    def run(self):
        m = self.model
        # nested needs the period of each node; rebuild with the period tracked
        if self.spec.kind == "nested":
            return self._run_nested()
        root = self.node(0, m.initial_state, self.spec.initial_wealth)
        return self._objective(root)

    def _run_nested(self):
        memo = {}
        m = self.model

        def node(t, s):
            if (t, s) in memo:
                return memo[(t, s)]
            if t > m.horizon:
                out = np.zeros(1)
            else:
                blocks = []
                for a, z in self.dec:
                    kids = [(float(m.payoff[t, s, a, xi]), node(t + 1, int(m.next_state[t, s, a, xi])))
                            for xi in range(m.num_outcomes)]
                    self._current_t = t
                    blocks.append(self._combine(m.probs[t], z, True, kids))
                out = np.concatenate(blocks)
            memo[(t, s)] = out
            return out

        return -node(0, m.initial_state)

    def path_probs(self) -> np.ndarray:
        m = self.model
        P = np.ones(1)
        for t in range(m.horizon, -1, -1):
            P = np.concatenate([m.probs[t, xi] * P for xi in range(m.num_outcomes)])
        return P

    def _objective(self, root):
        k, spec = self.spec.kind, self.spec
        if k == "worst_case_shortfall":
            return root[:, -1]
        P = self.path_probs()
        keep = P > 0
        V, P = root[:, keep], P[keep]
        bad = np.isinf(V).any(axis=1)
        if k == "neg_expected_total":
            out = -(V @ P)
        elif k == "entropic":
            out = np.exp(-spec.gamma * V) @ P
        elif k == "expected_utility_of_shortfall":
            safe = np.where(bad[:, None], 0.0, V)
            if hasattr(spec.utility, "array"):
                U = spec.utility.array(safe)
            else:
                U = np.vectorize(lambda x: float(spec.utility(x)), otypes=[float])(safe)
            out = U @ P
        elif k == "cvar_of_shortfall":
            out = _tail_mean_rows(P, np.where(bad[:, None], 0.0, V), spec.alpha, True)
        elif k == "quantile_of_shortfall":
            out = _upper_quantile_rows(P, np.where(bad[:, None], 0.0, V), spec.tau)
        else:
            out = V.max(axis=1)
        if k in SHORTFALL_KINDS:
            out = np.where(bad, INFEASIBLE, out)
        return out


def _decode(model, dec, index: int) -> dict:
    T, n_x, D = model.horizon, model.num_outcomes, len(dec)
    sizes = [1] * (T + 2)
    for t in range(T, -1, -1):
        sizes[t] = D * sizes[t + 1] ** n_x
    policy = {}

    def walk(t, steps, idx):
        if t > T:
            return
        per = sizes[t + 1] ** n_x
        d, rest = divmod(idx, per)
        a, z = dec[d]
        policy[steps] = (a, z)
        digits = []
        for _ in range(n_x):
            rest, c = divmod(rest, sizes[t + 1])
            digits.append(c)
        for xi, c in enumerate(reversed(digits)):
            walk(t + 1, steps + ((a, xi),), c)

    walk(0, (), index)
    return policy


def brute_force_optimum(model: MdpModel, spec: ObjectiveSpec, z_grid=(0.0,), acceptance=None,
                        budget: EnumerationBudget | None = None, method: str = "vectorized"
                        ) -> tuple[float, dict]:
    """Minimum of the objective over all deterministic history-dependent policies.

    Ties go to the first policy in enumeration order.  ``method="loop"`` evaluates each
    enumerated policy with :func:`direct_objective` instead of the vectorised search.
    """
    budget = budget or EnumerationBudget()
    count = policy_count(model, z_grid, reduced=True)
    if count > budget.max_policies:
        raise EnumerationSizeError("policy count", count, budget.max_policies)
    if method == "loop":
        best, arg = math.inf, None
        for pol in enumerate_policies(model, z_grid, budget, reduced=True):
            v = direct_objective(model, pol, spec, acceptance)
            if arg is None or v < best:
                best, arg = v, pol
        return best, arg
    vals = _Search(model, spec, [float(z) for z in z_grid], acceptance).run()
    i = int(np.argmin(vals))
    return float(vals[i]), _decode(model, _decisions(model, z_grid), i)


# ------------------------------------------------------------------ classical DP


def classical_backward_induction(model: MdpModel) -> tuple[np.ndarray, np.ndarray]:
    """Max expected total payoff: values (T+2, S) and greedy actions (T+1, S)."""
    T, S = model.horizon, model.num_states
    V = np.zeros((T + 2, S))
    act = np.zeros((T + 1, S), dtype=int)
    for t in range(T, -1, -1):
        q = (model.payoff[t] + V[t + 1][model.next_state[t]]) @ model.probs[t]  # (S, A)
        act[t] = np.argmax(q, axis=1)
        V[t] = q.max(axis=1)
    return V, act


# ------------------------------------------------------------ instance generation


def random_instance(rng: np.random.Generator, horizon: int, n_states: int, n_actions: int,
                    n_outcomes: int, payoff_range=(-3, 3), integer: bool = True,
                    min_prob: float = 0.05) -> MdpModel:
    T = horizon
    shape = (T + 1, n_states, n_actions, n_outcomes)
    ns = rng.integers(0, n_states, size=shape)
    lo, hi = payoff_range
    if integer:
        r = rng.integers(lo, hi + 1, size=shape).astype(float)
    else:
        r = rng.uniform(lo, hi, size=shape)
    dists = []
    for _ in range(T + 1):
        w = rng.dirichlet(np.ones(n_outcomes))
        w = np.maximum(w, min_prob)
        dists.append(make_distribution(w))
    return MdpModel(ns, r, tuple(dists), int(rng.integers(n_states)), "random")


def step_for_spec(spec: ObjectiveSpec, model: MdpModel, z_grid, acceptance=None
                  ) -> RiskFrontierStep:
    """The compressed frontier whose DP optimum should equal the objective's optimum."""
    acc = acceptance if acceptance is not None else rm.NO_ACCEPTANCE
    k = spec.kind
    if k == "neg_expected_total":
        return rm.build_risk_neutral()
    if k == "entropic":
        return rm.build_entropic(spec.gamma)
    if k == "nested":
        return rm.build_nested(spec.specs)
    if k == "expected_utility_of_shortfall":
        return rm.build_expected_utility(spec.utility, acc, z_grid)
    if k == "cvar_of_shortfall":
        return rm.build_cvar_shortfall(spec.alpha, rm.tail_mass_levels(model), acc, z_grid)
    if k == "quantile_of_shortfall":
        return rm.build_quantile(spec.tau, rm.tail_mass_levels(model), acc, z_grid)
    if k == "worst_case_shortfall":
        n = _budget_levels(spec)
        grid = [i * spec.budget_step for i in range(n + 1)]
        return rm.build_worst_case(grid[-1], grid, acc, z_grid)
    T = model.horizon
    lo = spec.initial_wealth + (T + 1) * float(model.payoff.min())
    hi = spec.initial_wealth + (T + 1) * float(model.payoff.max())
    wealth = _span_grid(lo, hi, model.payoff, spec.initial_wealth)
    return rm.build_growth(acc, wealth, sorted({0.0, *map(float, z_grid)}), z_grid,
                           spec.initial_wealth)


def _span_grid(lo, hi, payoff, w0) -> list[float]:
    if np.all(payoff == np.round(payoff)) and float(w0).is_integer():
        return list(np.arange(math.floor(lo), math.ceil(hi) + 1, dtype=float))
    raise ValueError("exact wealth grids need integer payoffs")


# ------------------------------------------------------------------ checkers


@dataclass
class ConsistencyReport:
    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_time_consistency(model: MdpModel, step: RiskFrontierStep, space: InfoStateSpace,
                           policy: Policy, tol: float = 1e-9) -> ConsistencyReport:
    """Compare the policy's tail value with a fresh tail re-solve at every reachable state."""
    report = ConsistencyReport()
    reach = reachable_states(space, lambda t, y: None if policy.get(t, y) is None
                             else tuple(policy.get(t, y)))
    tail_of_policy = evaluate_policy(model, step, space, policy)
    for t in range(model.horizon + 1):
        if not reach[t]:
            continue
        fresh = solve(model, step, space, start=t).values
        for y in sorted(reach[t], key=repr):
            opt, got = fresh[t, y], tail_of_policy[t, y]
            report.checked += 1
            if math.isinf(opt) and math.isinf(got):
                continue
            if not got <= opt + tol:
                report.violations.append((t, y, got, opt))
    return report


@dataclass
class MonotonicityReport:
    trials: int
    max_violation: float
    violations: int


def check_monotonicity(step: RiskFrontierStep, info_space: InfoStateSpace | None,
                       base_model: MdpModel, n_trials: int, seed: int, max_increment: int = 2,
                       tol: float = 1e-12) -> MonotonicityReport:
    """Random X' >= X perturbations of a single-action stream; GCR(X') must not exceed GCR(X).

    ``info_space`` is used for the base stream; each perturbed stream gets its own space.
    """
    rng = np.random.default_rng(seed)
    space = info_space if info_space is not None else step.info_space(base_model)
    base = tail_risk_evaluate(step, space).risk
    worst, bad = -math.inf, 0
    for _ in range(n_trials):
        bump = rng.integers(0, max_increment + 1, size=base_model.payoff.shape)
        up = base_model.with_payoff(base_model.payoff + bump)
        v = tail_risk_evaluate(step, step.info_space(up)).risk
        if math.isinf(base):
            gap = -math.inf
        else:
            gap = v - base if not math.isinf(v) else math.inf
        worst = max(worst, gap)
        bad += gap > tol
    return MonotonicityReport(n_trials, worst, bad)


def joint_schedule_minimum(step: RiskFrontierStep, space: InfoStateSpace,
                           model: MdpModel) -> float:
    """Least root premium over every disbursement table on the reachable states.

    For each table the smallest premium schedule is built stage by stage and checked for
    membership; the minimum over tables must equal the backward-pass value.
    """
    T = model.horizon
    term = terminal_row(step, space)
    best = math.inf

    def tables(t, frontier, chosen):
        if t > T:
            yield chosen
            return
        states = sorted(frontier, key=repr)
        options = [list(step.decision_grid(t, y).candidates()) for y in states]
        for combo in itertools.product(*options):
            table = dict(zip(states, combo))
            nxt = set()
            for y, (z, aux) in table.items():
                for xi in np.flatnonzero(model.probs[t] > 0):
                    nxt.add(space.transition(t, y, 0, z, aux, int(xi)))
            yield from tables(t + 1, nxt, chosen + [table])

    for Z in tables(0, {space.initial}, []):
        phi = [dict() for _ in range(T + 2)]
        phi[T + 1] = dict(term)
        for t in range(T, -1, -1):
            for y, (z, aux) in Z[t].items():
                nxt = successors(space, t, y, 0, z, aux, phi[t + 1])
                phi[t][y] = step.min_premium(t, y, model.probs[t], model.payoff[t, y[0], 0],
                                             z, aux, nxt)
        root = phi[0][space.initial]
        if math.isinf(root):
            continue
        if not check_membership(step, space, model, Z, phi):
            raise AssertionError("stagewise-minimal schedule failed membership")
        best = min(best, root)
    return best


def consumption_lp_value(model: MdpModel, step: "rm.ConsumptionStep", decisions: dict,
                         initial_wealth: float = 0.0) -> tuple[float, float]:
    """Direct consumption cost of a fixed history-dependent z table, and the optimum of the
    dummy-shortfall linear program for the same table.

    Returns (direct, lp).  The program minimises E[sum c_t M_t - alpha_t z_t] subject to
    W' = W + X - z + M, M >= 0, W' >= 0.  With a constant unit cost both values agree.
    """
    from scipy.optimize import linprog

    if model.num_actions != 1:
        raise ValueError("single-action stream expected")
    T = model.horizon
    nodes = []  # (t, steps, prob, parent_var or None, payoff, z)

    direct = 0.0

    def walk(t, s, steps, w, prob, parent):
        nonlocal direct
        if t > T:
            return
        z = decisions[steps]
        for xi in range(model.num_outcomes):
            p = model.probs[t, xi]
            if p <= 0:
                continue
            r = float(model.payoff[t, s, 0, xi])
            a_t, c_t = rm._per_period(step.alpha, t), rm._per_period(step.cost, t)
            direct += prob * p * (c_t * max(z - w - r, 0.0) - a_t * z)
            idx = len(nodes)
            nodes.append((t, prob * p, parent, r, z, a_t, c_t))
            walk(t + 1, int(model.next_state[t, s, 0, xi]), steps + ((0, xi),),
                 max(w + r - z, 0.0), prob * p, idx)

    walk(0, model.initial_state, (), initial_wealth, 1.0, None)
    n = len(nodes)
    # variables: M_i (n) then W_i (n), W_i is wealth after node i
    cost = np.zeros(2 * n)
    A = np.zeros((n, 2 * n))
    b = np.zeros(n)
    const = 0.0
    for i, (t, prob, parent, r, z, a_t, c_t) in enumerate(nodes):
        cost[i] = prob * c_t
        const -= prob * a_t * z
        A[i, n + i] = 1.0
        A[i, i] = -1.0
        if parent is None:
            b[i] = initial_wealth + r - z
        else:
            A[i, n + parent] = -1.0
            b[i] = r - z
    res = linprog(cost, A_eq=A, b_eq=b, bounds=[(0, None)] * (2 * n), method="highs")
    if not res.success:
        raise RuntimeError(res.message)
    return direct, float(res.fun) + const


# ------------------------------------------------------------------ suite


CRITERION_KINDS = ("neg_expected_total", "entropic", "nested", "expected_utility_of_shortfall",
                   "cvar_of_shortfall", "max_shortfall")


@dataclass(frozen=True)
class CheckRow:
    check: str
    instance: int
    expected: float
    got: float
    tol: float

    @property
    def error(self) -> float:
        if self.expected == self.got:
            return 0.0
        return abs(self.expected - self.got)

    @property
    def passed(self) -> bool:
        return self.error <= self.tol


def suite_instance(seed: int, max_horizon: int = 2) -> tuple[MdpModel, list[float]]:
    """Seeded tiny instance: T <= max_horizon, |S| <= 3, |A| <= 2, |Xi| <= 2, |z| <= 3."""
    rng = np.random.default_rng([seed, 7])
    T = 1 + seed % max(max_horizon, 1) if max_horizon > 0 else 0
    S = int(rng.integers(1, 4))
    model = random_instance(rng, T, S, 2, 2)
    zs = sorted({0.0, *map(float, rng.choice([1, 2, 3], size=int(rng.integers(1, 3)),
                                               replace=False))})
    return model, zs


def default_specs(nested=None, utility=None) -> dict:
    return {
        "neg_expected_total": ObjectiveSpec("neg_expected_total"),
        "entropic": ObjectiveSpec("entropic", gamma=0.5),
        "nested": ObjectiveSpec("nested", specs=nested or rm.OneStepRiskSpec("cvar", 0.4)),
        "expected_utility_of_shortfall": ObjectiveSpec(
            "expected_utility_of_shortfall", utility=utility or rm.Utility("square")),
        "cvar_of_shortfall": ObjectiveSpec("cvar_of_shortfall", alpha=0.3),
        "quantile_of_shortfall": ObjectiveSpec("quantile_of_shortfall", tau=0.4),
        "worst_case_shortfall": ObjectiveSpec("worst_case_shortfall", budget=0.5,
                                              budget_step=0.25),
        "max_shortfall": ObjectiveSpec("max_shortfall", initial_wealth=1.0),
    }


def oracle_equivalence(n_instances: int, seed: int = 0, specs: dict | None = None,
                       acceptance=None, max_horizon: int = 2, tol: float = 1e-9
                       ) -> list[CheckRow]:
    """Brute-force optimum versus compressed DP optimum on seeded tiny instances."""
    specs = specs or {k: v for k, v in default_specs().items() if k in CRITERION_KINDS}
    acc = acceptance if acceptance is not None else rm.AcceptanceSpec("expectation_floor", 0.0)
    rows = []
    for i in range(n_instances):
        model, zs = suite_instance(seed + i, max_horizon)
        for name, spec in specs.items():
            bf, _ = brute_force_optimum(model, spec, zs, acc)
            dp = solve(model, step_for_spec(spec, model, zs, acc)).optimum
            rows.append(CheckRow(f"oracle/{name}", seed + i, bf, dp, tol))
    return rows


def classical_equivalence(n_instances: int, seed: int = 0, tol: float = 1e-12) -> list[CheckRow]:
    rows = []
    for i in range(n_instances):
        rng = np.random.default_rng([seed + i, 11])
        model = random_instance(rng, int(rng.integers(0, 4)), int(rng.integers(1, 4)),
                                int(rng.integers(1, 4)), int(rng.integers(1, 4)),
                                integer=False)
        V, _ = classical_backward_induction(model)
        dp = solve(model, rm.build_risk_neutral()).optimum
        rows.append(CheckRow("classical_dp", seed + i, -V[0, model.initial_state], dp, tol))
    return rows


def time_consistency_rows(n_instances: int, seed: int = 0, kinds=None,
                          max_horizon: int = 2) -> list[CheckRow]:
    """Violation counts of greedy policies (expected 0) on the tiny-instance suite."""
    specs = default_specs()
    kinds = kinds or CRITERION_KINDS
    acc = rm.AcceptanceSpec("expectation_floor", 0.0)
    rows = []
    for i in range(n_instances):
        model, zs = suite_instance(seed + i, max_horizon)
        for name in kinds:
            step = step_for_spec(specs[name], model, zs, acc)
            space = step.info_space(model)
            res = solve(model, step, space)
            rep = check_time_consistency(model, step, space, res.policy)
            rows.append(CheckRow(f"time_consistency/{name}", seed + i, 0.0,
                                 float(len(rep.violations)), 0.0))
    return rows
