"""Catalog of compressed risk frontiers.

Every builder returns a :class:`RiskFrontierStep`; its ``info_space(model)`` method is the
information-state recipe for a concrete model.  All steps are stated in minimisation
form: the stage premium is the least capital that makes the stage acceptable.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .mdp_core import MdpModel, expectation
from .risk_frontier import (ACCEPT_TOL, INFEASIBLE, CoordGrid, DecisionGrid, InfoState,
                            InfoStateSpace, RiskFrontierStep, Successors, product_grid)

# --------------------------------------------------------------------------- helpers


def _per_period(x, t: int):
    if isinstance(x, (list, tuple)):
        return x[t]
    return x


def _support(probs) -> np.ndarray:
    return np.flatnonzero(np.asarray(probs) > 0)


def _max_over_support(probs, values) -> float:
    return max(float(values[i]) for i in _support(probs))


def cvar_variational(probs, values, alpha: float, form: str = "cost",
                     eta_grid: Sequence[float] | None = None) -> float:
    """CVaR through its variational formula, scanned over candidate thresholds.

    ``cost`` form: min_eta eta + E[(X - eta)^+] / (1 - alpha), the mean of the worst
    (1 - alpha) share of a loss.  ``payoff`` form: max_eta eta - E[(eta - X)^+] / alpha,
    the mean of the lowest alpha share of a payoff.  The optimum sits at a support
    point, so the default candidates are the support values.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    p = np.asarray(probs, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = p > 0
    if not keep.any():
        raise ValueError("empty support")
    p, v = p[keep], v[keep]
    if form == "cost":
        if np.isposinf(v).any():
            return INFEASIBLE
        etas = v if eta_grid is None else np.asarray(eta_grid, dtype=float)
        excess = np.maximum(v[None, :] - etas[:, None], 0.0) @ p
        return float(np.min(etas + excess / (1.0 - alpha)))
    if form == "payoff":
        if np.isneginf(v).any():
            return -INFEASIBLE
        etas = v if eta_grid is None else np.asarray(eta_grid, dtype=float)
        short = np.maximum(etas[:, None] - v[None, :], 0.0) @ p
        return float(np.max(etas - short / alpha))
    raise ValueError(f"unknown CVaR form {form!r}")


@dataclass(frozen=True)
class AcceptanceSpec:
    """Per-period acceptance set for the augmented payoff X + z.

    kinds: ``expectation_floor`` (E >= floor), ``pointwise_floor`` (every outcome >=
    floor), ``cvar_floor`` (lower-tail CVaR at ``alpha`` >= floor) and ``none``.
    """

    kind: str = "none"
    floor: float = 0.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("expectation_floor", "pointwise_floor", "cvar_floor", "none"):
            raise ValueError(f"unknown acceptance kind {self.kind!r}")
        if self.kind == "cvar_floor" and not 0 < self.alpha < 1:
            raise ValueError("cvar_floor needs alpha in (0, 1)")

    def min_shift(self, probs, payoffs) -> float:
        """Smallest constant c with payoffs + c accepted (all kinds are cash-additive)."""
        if self.kind == "none":
            return -math.inf
        if self.kind == "expectation_floor":
            return self.floor - expectation(probs, payoffs)
        if self.kind == "pointwise_floor":
            return self.floor - min(float(payoffs[i]) for i in _support(probs))
        return self.floor - cvar_variational(probs, payoffs, self.alpha, "payoff")

    def accepts(self, probs, values) -> bool:
        return 0.0 >= self.min_shift(probs, values) - ACCEPT_TOL

    def admits(self, probs, payoffs, z: float) -> bool:
        return z >= self.min_shift(probs, payoffs) - ACCEPT_TOL


NO_ACCEPTANCE = AcceptanceSpec()


@dataclass(frozen=True)
class OneStepRiskSpec:
    """Coherent one-step risk measure on payoffs: ``expectation`` or ``cvar`` (lower tail)."""

    kind: str = "expectation"
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("expectation", "cvar"):
            raise ValueError(f"incoherent or unknown one-step risk {self.kind!r}")
        if self.kind == "cvar" and not 0 < self.alpha < 1:
            raise ValueError("cvar needs alpha in (0, 1)")

    def risk(self, probs, payoffs) -> float:
        """rho(Y) = min{c : Y + c acceptable}."""
        if self.kind == "expectation":
            return -expectation(probs, payoffs)
        return -cvar_variational(probs, payoffs, self.alpha, "payoff")


class Utility:
    """Named scalar utility / dis-utility; picklable so steps can cross process boundaries."""

    def __init__(self, kind: str = "linear", param: float = 1.0):
        if kind not in ("linear", "square", "power", "exp_loss", "exp_gain"):
            raise ValueError(f"unknown utility {kind!r}")
        self.kind = kind
        self.param = float(param)

    def __call__(self, x: float) -> float:
        k, c = self.kind, self.param
        if k == "linear":
            return c * x
        if k == "square":
            return x * x
        if k == "power":
            return math.copysign(abs(x) ** c, x)
        if k == "exp_loss":  # convex increasing: e^{c x} - 1
            return math.expm1(c * x)
        return -math.expm1(-c * x)  # concave increasing: 1 - e^{-c x}

    def array(self, x) -> np.ndarray:
        """Elementwise version of ``__call__`` for numpy arrays."""
        x = np.asarray(x, dtype=float)
        k, c = self.kind, self.param
        if k == "linear":
            return c * x
        if k == "square":
            return x * x
        if k == "power":
            return np.copysign(np.abs(x) ** c, x)
        if k == "exp_loss":
            return np.expm1(c * x)
        return -np.expm1(-c * x)

    def __repr__(self) -> str:
        return f"Utility({self.kind!r}, {self.param})"


def _z_grid(z_grid) -> tuple[float, ...]:
    zs = tuple(sorted(float(z) for z in z_grid))
    if not zs:
        raise ValueError("empty disbursement grid")
    return zs


def _as_coord(name: str, grid, mode: str = "nearest") -> CoordGrid:
    if isinstance(grid, CoordGrid):
        return grid
    return CoordGrid(name, grid, mode)


def _wealth_space(model: MdpModel, wealth: CoordGrid, w_init: float, update) -> InfoStateSpace:
    w0 = wealth.project(w_init)
    grids = [tuple((s, w0) for s in range(model.num_states))]
    grids += [product_grid(model.num_states, wealth.values)] * (model.horizon + 1)
    return InfoStateSpace(model, (wealth,), grids, (model.initial_state, w0), update)


# --------------------------------------------------------------- payoff-only models


class RiskNeutralStep(RiskFrontierStep):
    name = "risk_neutral"

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        return expectation(probs, nxt.values - payoffs)

    def premium_bound(self, model):
        return (model.horizon + 1) * model.r_max


def build_risk_neutral() -> RiskNeutralStep:
    return RiskNeutralStep()


class EntropicStep(RiskFrontierStep):
    """Premiums live in exponential units: the root value is E[exp(-gamma * total payoff)]."""

    name = "entropic"

    def __init__(self, gamma: float):
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        return expectation(probs, np.exp(-self.gamma * payoffs) * nxt.values)

    def terminal_premium(self, y):
        return 1.0

    def premium_bound(self, model):
        return math.exp(self.gamma * (model.horizon + 1) * model.r_max)


def build_entropic(gamma: float) -> EntropicStep:
    return EntropicStep(gamma)


def entropic_risk(value: float, gamma: float) -> float:
    """Convert an exponential-unit premium back to the entropic risk of the payoff sum."""
    return -math.log(value) / gamma


class NestedStep(RiskFrontierStep):
    name = "nested"

    def __init__(self, specs):
        specs = specs if isinstance(specs, (list, tuple)) else [specs]
        for sp in specs:
            if not isinstance(sp, OneStepRiskSpec):
                raise TypeError("nested composition needs OneStepRiskSpec entries")
        self.specs = tuple(specs)

    def spec(self, t: int) -> OneStepRiskSpec:
        return self.specs[t] if len(self.specs) > 1 else self.specs[0]

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        return self.spec(t).risk(probs, payoffs - nxt.values)

    def premium_bound(self, model):
        return (model.horizon + 1) * model.r_max


def build_nested(specs) -> NestedStep:
    return NestedStep(specs)


# ----------------------------------------------------------------- wealth models


class StandardCRStep(RiskFrontierStep):
    """Savings-account capital requirement: endowment at t = 0, wealth drawn down by z."""

    name = "standard_cr"

    def __init__(self, acceptance, wealth, z_grid, soft_penalty_beta: float | None = None):
        if wealth is None:
            raise ValueError("standard capital requirement needs a wealth grid")
        self.acceptance = acceptance
        self.wealth = _as_coord("wealth", wealth)
        self.z_grid = _z_grid(z_grid)
        if soft_penalty_beta is not None and not soft_penalty_beta > 1:
            raise ValueError("soft penalty needs beta > 1")
        self.beta = soft_penalty_beta
        self._initial = DecisionGrid(self.z_grid, self.wealth.values)
        self._interior = DecisionGrid(self.z_grid)

    def info_space(self, model):
        def update(t, y, a, z, aux, r):
            return (y[1] + aux - z,) if t == 0 else (y[1] - z,)
        return _wealth_space(model, self.wealth, 0.0, update)

    def decision_grid(self, t, y):
        return self._initial if t == 0 else self._interior

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        if not _per_period(self.acceptance, t).admits(probs, payoffs, z):
            return INFEASIBLE
        e = expectation(probs, nxt.values)
        return aux + e if t == 0 else e

    def terminal_premium(self, y):
        w = y[1]
        if self.beta is None:
            return 0.0 if w >= 0 else INFEASIBLE
        return self.beta * max(-w, 0.0)


def build_standard_cr(acceptance, wealth, z_grid, soft_penalty_beta=None) -> StandardCRStep:
    return StandardCRStep(acceptance, wealth, z_grid, soft_penalty_beta)


class ConsumptionStep(RiskFrontierStep):
    """Consumption z with unit utility alpha_t and unit cost c_t for consuming beyond cash."""

    name = "consumption"

    def __init__(self, alpha_utils, c_costs, wealth, z_grid, initial_wealth: float = 0.0):
        for t in range(max(len(np.atleast_1d(alpha_utils)), len(np.atleast_1d(c_costs)))):
            a = _per_period(alpha_utils, t)
            c = _per_period(c_costs, t)
            if not c > a > 0:
                raise ValueError("consumption needs c_t > alpha_t > 0")
        self.alpha = alpha_utils
        self.cost = c_costs
        self.wealth = _as_coord("wealth", wealth)
        self.z_grid = _z_grid(z_grid)
        self.initial_wealth = float(initial_wealth)
        self._grid = DecisionGrid(self.z_grid)

    def info_space(self, model):
        def update(t, y, a, z, aux, r):
            return (max(y[1] + r - z, 0.0),)
        return _wealth_space(model, self.wealth, self.initial_wealth, update)

    def decision_grid(self, t, y):
        return self._grid

    def stage_cost(self, t, w, payoffs, z) -> np.ndarray:
        a, c = _per_period(self.alpha, t), _per_period(self.cost, t)
        return c * np.maximum(z - w - payoffs, 0.0) - a * z

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        return expectation(probs, self.stage_cost(t, y[1], payoffs, z) + nxt.values)


def build_consumption(alpha_utils, c_costs, wealth, z_grid, initial_wealth=0.0) -> ConsumptionStep:
    return ConsumptionStep(alpha_utils, c_costs, wealth, z_grid, initial_wealth)


class ConsumptionExcessStep(RiskFrontierStep):
    """Consumption against targets with a perspective-utility constraint and a worst-case tail."""

    name = "consumption_excess"

    def __init__(self, utility: Callable[[float], float], targets, eps: float,
                 saving_rate: float, borrowing_rate: float, alpha_grid, wealth, z_grid,
                 initial_wealth: float = 0.0):
        if not eps > 0:
            raise ValueError("eps must be positive")
        if saving_rate > borrowing_rate:
            raise ValueError("saving rate must not exceed borrowing rate")
        alphas = tuple(sorted(float(a) for a in alpha_grid))
        if not alphas:
            raise ValueError("empty alpha grid")
        if alphas[0] < eps:
            raise ValueError("alpha grid must lie in [eps, alpha_max]")
        self.utility = utility
        self.targets = targets
        self.eps = float(eps)
        self.saving_rate = float(saving_rate)
        self.borrowing_rate = float(borrowing_rate)
        self.wealth = _as_coord("wealth", wealth)
        self.z_grid = _z_grid(z_grid)
        self.initial_wealth = float(initial_wealth)
        self._grid = DecisionGrid(self.z_grid, alphas)

    def target(self, t: int, s: int) -> float:
        tg = np.asarray(self.targets, dtype=float)
        if tg.ndim == 0:
            return float(tg)
        if tg.ndim == 1:
            return float(tg[s])
        return float(tg[t, s])

    def info_space(self, model):
        bs, bb = self.saving_rate, self.borrowing_rate

        def update(t, y, a, z, aux, r):
            w = y[1]
            return (min((1 + bs) * w - z, (1 + bb) * w - z),)
        return _wealth_space(model, self.wealth, self.initial_wealth, update)

    def decision_grid(self, t, y):
        return self._grid

    def perspective(self, t, s, probs, payoffs, z, alpha) -> float:
        zeta = self.target(t, s)
        u = [self.utility((x + z - zeta) / alpha) for x in payoffs]
        return alpha * expectation(probs, u)

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        if self.perspective(t, y[0], probs, payoffs, z, aux) < -ACCEPT_TOL:
            return INFEASIBLE
        return aux + _max_over_support(probs, nxt.values)

    def terminal_premium(self, y):
        return 0.0 if y[1] >= 0 else INFEASIBLE


def build_consumption_excess(utility, targets, eps, saving_rate, borrowing_rate, alpha_grid,
                             wealth, z_grid, initial_wealth=0.0) -> ConsumptionExcessStep:
    return ConsumptionExcessStep(utility, targets, eps, saving_rate, borrowing_rate,
                                 alpha_grid, wealth, z_grid, initial_wealth)


# ------------------------------------------------------------- shortfall models


class _ShortfallStep(RiskFrontierStep):
    """Common parts of the target-shortfall models: acceptance on X + z, z >= 0."""

    def __init__(self, acceptance, z_grid):
        self.acceptance = acceptance
        self.z_grid = _z_grid(z_grid)
        if self.z_grid[0] < 0:
            raise ValueError("shortfall grids must be nonnegative")
        self._grid = DecisionGrid(self.z_grid)

    def decision_grid(self, t, y):
        return self._grid

    def admits(self, t, probs, payoffs, z) -> bool:
        return _per_period(self.acceptance, t).admits(probs, payoffs, z)

    def premium_bound(self, model):
        return (model.horizon + 1) * self.z_grid[-1]


class ExpectedUtilityStep(_ShortfallStep):
    name = "expected_utility"

    def __init__(self, utility, acceptance, z_grid, shortfall_grid=None):
        super().__init__(acceptance, z_grid)
        self.utility = utility
        self.shortfall_grid = shortfall_grid

    def info_space(self, model):
        top = (model.horizon + 1) * self.z_grid[-1]
        grid = self.shortfall_grid
        if grid is None:
            grid = _additive_grid(self.z_grid, model.horizon + 1)
        grid = _as_coord("shortfall", grid)
        if grid.values[-1] < top:
            warnings.warn(f"cumulative-shortfall grid tops out at {grid.values[-1]} < {top}; "
                          "larger sums are clamped", stacklevel=2)
        grids = [tuple((s, 0.0) for s in range(model.num_states))]
        grids += [product_grid(model.num_states, grid.values)] * (model.horizon + 1)

        def update(t, y, a, z, aux, r):
            return (y[1] + z,)
        return InfoStateSpace(model, (grid,), grids, (model.initial_state, 0.0), update)

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        if not self.admits(t, probs, payoffs, z):
            return INFEASIBLE
        return expectation(probs, nxt.values)

    def terminal_premium(self, y):
        return float(self.utility(y[1]))

    def premium_bound(self, model):
        return float(self.utility((model.horizon + 1) * self.z_grid[-1]))


def _additive_grid(z_grid, periods: int) -> list[float]:
    sums = {0.0}
    for _ in range(periods):
        sums |= {s + z for s in sums for z in z_grid}
    return sorted(sums)


def build_expected_utility(utility, acceptance, z_grid, shortfall_grid=None) -> ExpectedUtilityStep:
    return ExpectedUtilityStep(utility, acceptance, z_grid, shortfall_grid)


def tv_worst_expectation(probs, values, radius: float) -> float:
    """sup E_Q[values] over Q with total-variation distance <= radius from P, Q << P.

    Mass ``radius`` (capped by what is available) moves from the lowest-valued outcomes to
    the highest-valued one.
    """
    p = np.asarray(probs, dtype=float)
    v = np.asarray(values, dtype=float)
    supp = [int(i) for i in _support(p)]
    order = sorted(supp, key=lambda i: (v[i], i))
    top = order[-1]
    q = {i: float(p[i]) for i in supp}
    move = min(max(radius, 0.0), 1.0 - q[top])
    q[top] += move
    left = move
    for i in order[:-1]:
        if left <= 0:
            break
        take = min(q[i], left)
        q[i] -= take
        left -= take
    acc = 0.0
    for i in supp:
        if q[i] > 0:
            acc += q[i] * float(v[i])
    return acc


class WorstCaseStep(_ShortfallStep):
    """Expected total shortfall under an adversary with a total-variation budget K."""

    name = "worst_case"

    def __init__(self, budget: float, budget_grid, acceptance, z_grid, metric: str = "tv"):
        if metric != "tv":
            raise ValueError(f"unsupported metric {metric!r}; only total variation is implemented")
        super().__init__(acceptance, z_grid)
        if budget < 0:
            raise ValueError("budget must be nonnegative")
        grid = _as_coord("budget", budget_grid)
        if float(budget) not in grid.values:
            raise ValueError("budget K must lie on the budget grid")
        self.budget = float(budget)
        self.grid = CoordGrid("budget", [b for b in grid.values if b <= self.budget])

    def info_space(self, model):
        grids = [tuple((s, self.budget) for s in range(model.num_states))]
        grids += [product_grid(model.num_states, self.grid.values)] * (model.horizon + 1)

        def update(t, y, a, z, aux, r):
            return (y[1],)
        return InfoStateSpace(model, (self.grid,), grids, (model.initial_state, self.budget), update)

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        if not self.admits(t, probs, payoffs, z):
            return INFEASIBLE
        eta = y[1]
        best = -math.inf
        n_x = len(probs)
        for delta in self.grid.values:
            if delta > eta + 1e-12:
                break
            vals = [nxt.at(xi, 0, eta - delta) if probs[xi] > 0 else 0.0 for xi in range(n_x)]
            best = max(best, tv_worst_expectation(probs, vals, delta))
        return z + best


def build_worst_case(budget, budget_grid, acceptance, z_grid, metric="tv") -> WorstCaseStep:
    return WorstCaseStep(budget, budget_grid, acceptance, z_grid, metric)


def tail_mass_levels(model: MdpModel, max_subsets: int = 1 << 16) -> list[list[float]]:
    """Per-period risk-level grids holding every conditional tail-path probability mass.

    Entry t (t = 1..T+1) lists the subset sums of the probabilities of the outcome
    sequences over periods t..T; entry 0 is left empty (the root level is fixed).
    These are exactly the breakpoints of the tail CVaR / quantile level functions, so
    level grids built from them make the level recursion exact.
    """
    T = model.horizon
    out: list[list[float]] = [[]]
    for t in range(1, T + 2):
        paths = [1.0]
        for k in range(t, T + 1):
            pk = [float(q) for q in model.probs[k] if q > 0]
            paths = [a * b for a in paths for b in pk]
        if 2 ** len(paths) > max_subsets:
            raise ValueError(f"too many tail paths ({len(paths)}) for an exact level grid")
        sums = [0.0]
        for q in paths:
            sums = sums + [s + q for s in sums]
        out.append(_merge_close(sums + [1.0]))
    return out


def _merge_close(vals, tol: float = 1e-12) -> list[float]:
    vals = sorted(min(max(v, 0.0), 1.0) for v in vals)
    merged = [vals[0]]
    for v in vals[1:]:
        if v - merged[-1] > tol:
            merged.append(v)
    merged[0] = 0.0
    if merged[-1] >= 1 - tol:
        merged[-1] = 1.0
    return merged


class _LevelStep(_ShortfallStep):
    """Shortfall models with a risk-level coordinate whose grid may vary by period."""

    coord_name = "level"
    coord_mode = "nearest"

    def __init__(self, root: float, levels, acceptance, z_grid):
        super().__init__(acceptance, z_grid)
        self.root = float(root)
        # the root level is on every grid so an unchanged level is always a grid state
        fixed = {0.0, 1.0, self.root}
        if levels and isinstance(levels[0], (list, tuple, np.ndarray)):
            self._levels = [tuple(sorted(set(map(float, lv)) | fixed)) for lv in levels]
        else:
            self._levels = [tuple(sorted(set(map(float, levels)) | fixed))]

    def levels(self, t: int) -> tuple[float, ...]:
        return self._levels[t] if len(self._levels) > 1 else self._levels[0]

    def info_space(self, model):
        T = model.horizon
        if len(self._levels) > 1 and len(self._levels) != T + 2:
            raise ValueError("per-period level grids need one entry per period 0..T+1")
        allv = {self.root}
        for t in range(1, T + 2):
            allv |= set(self.levels(t))
        coord = CoordGrid(self.coord_name, allv, self.coord_mode)
        grids = [tuple((s, self.root) for s in range(model.num_states))]
        grids += [product_grid(model.num_states, self.levels(t)) for t in range(1, T + 2)]

        nxt = [None] + [np.array(self.levels(t)) for t in range(1, T + 2)]

        def update(t, y, a, z, aux, r):
            # the successor level is picked inside min_premium; histories carry the level
            # unchanged when the next grid holds it (the root level always is)
            lv = nxt[t + 1]
            return (float(lv[np.argmin(np.abs(lv - y[1]))]),)
        return InfoStateSpace(model, (coord,), grids, (model.initial_state, self.root), update)


def _interp(xs: np.ndarray, ys: np.ndarray, x):
    return np.interp(x, xs, ys)


def _level_sup(p: np.ndarray, xs: np.ndarray, gs: list[np.ndarray], eta: float,
               max_vertices: int = 200_000) -> float:
    """max sum_i p_i G_i(x_i) s.t. sum_i p_i x_i = eta, x_i in [0, 1], G_i piecewise linear.

    Exact by vertex enumeration: an optimum has at most one coordinate strictly inside a
    linear piece, so every other coordinate sits on a breakpoint.
    """
    n, k = len(p), len(xs)
    if n == 1:
        return float(p[0] * _interp(xs, gs[0], eta / p[0]))
    if n * k ** (n - 1) > max_vertices:
        return _level_sup_greedy(p, xs, gs, eta)
    best = -math.inf
    grid_vals = np.stack(gs)
    for j in range(n):
        others = [i for i in range(n) if i != j]
        idx = np.array(list(itertools.product(range(k), repeat=n - 1)))
        x_o = xs[idx]
        used = x_o @ p[others]
        xj = (eta - used) / p[j]
        ok = (xj >= -1e-12) & (xj <= 1 + 1e-12)
        if not ok.any():
            continue
        xj = np.clip(xj[ok], 0.0, 1.0)
        val = p[j] * _interp(xs, gs[j], xj)
        for col, i in enumerate(others):
            val = val + p[i] * grid_vals[i][idx[ok, col]]
        best = max(best, float(val.max()))
    return best


def _level_sup_greedy(p, xs, gs, eta) -> float:
    # fill budget along the steepest segments; exact when every G_i is concave
    segs = []
    for i, g in enumerate(gs):
        for a in range(len(xs) - 1):
            w = xs[a + 1] - xs[a]
            segs.append(((g[a + 1] - g[a]) / w, i, w))
    segs.sort(key=lambda s: -s[0])
    total = sum(p[i] * g[0] for i, g in enumerate(gs))
    left = eta
    for slope, i, w in segs:
        if left <= 0:
            break
        take = min(p[i] * w, left)
        total += slope * take
        left -= take
    return float(total)


class CVaRShortfallStep(_LevelStep):
    """CVaR of the cumulative shortfall via a risk-level coordinate (tail mass eta).

    With ``level_update="product"`` an adversary density m (0 <= m <= 1/eta, E[m] = 1)
    sends the level to eta * m(xi); the inner supremum is solved exactly on the
    piecewise-linear level profile.  ``level_update="ratio"`` uses eta / m(xi) and
    enumerates ``density_grid`` for m.
    """

    name = "cvar_shortfall"
    coord_mode = "linear"

    def __init__(self, alpha: float, levels, acceptance, z_grid, level_update: str = "product",
                 density_grid: Sequence[float] | None = None):
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if level_update not in ("product", "ratio"):
            raise ValueError(f"unknown level update {level_update!r}")
        if level_update == "ratio" and not density_grid:
            raise ValueError("ratio update needs a density grid")
        super().__init__(alpha, levels, acceptance, z_grid)
        self.alpha = float(alpha)
        self.level_update = level_update
        self.density_grid = tuple(sorted(float(m) for m in density_grid or ()))

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        if not self.admits(t, probs, payoffs, z):
            return INFEASIBLE
        eta = y[1]
        supp = _support(probs)
        if eta <= 0.0:
            return z + max(nxt.at(int(i), 0, 0.0) for i in supp)
        if self.level_update == "ratio":
            return z + self._ratio_sup(probs, nxt, eta)
        xs = np.array(self.levels(t + 1))
        gs = []
        for i in supp:
            _, v = nxt.profile(int(i), 0, xs)
            if np.isinf(v).any():
                return INFEASIBLE
            gs.append(xs * v)
        return z + _level_sup(np.asarray(probs)[supp], xs, gs, eta) / eta

    def _ratio_sup(self, probs, nxt, eta) -> float:
        supp = [int(i) for i in _support(probs)]
        p = np.asarray(probs)[supp]
        cand = [m for m in self.density_grid if 0 <= m <= 1 / eta + 1e-12]
        best = -math.inf
        for ms in itertools.product(cand, repeat=len(supp)):
            if abs(float(np.dot(p, ms)) - 1.0) > 1e-9:
                continue
            acc = 0.0
            for pi, m, xi in zip(p, ms, supp):
                if m > 0:
                    acc += pi * m * nxt.at(xi, 0, min(eta / m, 1.0))
            best = max(best, acc)
        return best


def build_cvar_shortfall(alpha, levels, acceptance, z_grid, level_update="product",
                         density_grid=None) -> CVaRShortfallStep:
    return CVaRShortfallStep(alpha, levels, acceptance, z_grid, level_update, density_grid)


class QuantileStep(_LevelStep):
    """Upper tau-quantile of the cumulative shortfall via an exclusion budget.

    The decision maker excludes outcomes (m(xi) = 1) or passes a conditional exclusion
    budget m(xi) < 1 down to them; the excluded mass must stay strictly below tau at the
    root and within the inherited budget below it.  ``exclusions="binary"`` restricts m
    to {0, 1}.
    """

    name = "quantile"

    def __init__(self, tau: float, levels, acceptance, z_grid, exclusions: str = "grid",
                 max_choices: int = 10**6):
        if not 0 < tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if exclusions not in ("grid", "binary"):
            raise ValueError(f"unknown exclusion mode {exclusions!r}")
        super().__init__(tau, levels, acceptance, z_grid)
        self.tau = float(tau)
        self.exclusions = exclusions
        self.max_choices = max_choices

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        if not self.admits(t, probs, payoffs, z):
            return INFEASIBLE
        eta = y[1]
        supp = [int(i) for i in _support(probs)]
        p = np.asarray(probs)[supp]
        choices = (0.0, 1.0) if self.exclusions == "binary" else self.levels(t + 1)
        if len(choices) ** len(supp) > self.max_choices:
            raise ValueError("exclusion enumeration too large")
        table = np.array([[nxt.at(xi, 0, m) for m in choices] for xi in supp])
        if np.isinf(table).any():
            # acceptance must hold on every positive-probability branch, excluded or not
            return INFEASIBLE
        ms = np.array(list(itertools.product(range(len(choices)), repeat=len(supp))))
        mval = np.asarray(choices)[ms]
        mass = mval @ p
        ok = mass < eta - 1e-12 if t == 0 else mass <= eta + 1e-12
        ok &= ~(mval >= 1.0).all(axis=1)
        if not ok.any():
            return INFEASIBLE
        vals = table[np.arange(len(supp))[None, :], ms]
        vals = np.where(mval >= 1.0, -math.inf, vals)
        return z + float(vals.max(axis=1)[ok].min())


def build_quantile(tau, levels, acceptance, z_grid, exclusions="grid") -> QuantileStep:
    return QuantileStep(tau, levels, acceptance, z_grid, exclusions)


class GrowthStep(_ShortfallStep):
    """Worst-case running maximum of the shortfall with wealth-dependent acceptance."""

    name = "growth"

    def __init__(self, acceptance, wealth, shortfall_grid, z_grid, initial_wealth: float = 0.0):
        super().__init__(acceptance, z_grid)
        self.wealth = _as_coord("wealth", wealth)
        self.shortfall = _as_coord("max_shortfall", shortfall_grid)
        self.initial_wealth = float(initial_wealth)

    def info_space(self, model):
        w0 = self.wealth.project(self.initial_wealth)
        h0 = self.shortfall.project(0.0)
        grids = [tuple((s, w0, h0) for s in range(model.num_states))]
        grids += [product_grid(model.num_states, self.wealth.values, self.shortfall.values)
                  ] * (model.horizon + 1)

        def update(t, y, a, z, aux, r):
            return (y[1] + r, max(y[2], z))
        return InfoStateSpace(model, (self.wealth, self.shortfall), grids,
                              (model.initial_state, w0, h0), update)

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        if not self.admits(t, probs, payoffs + y[1], z):
            return INFEASIBLE
        return _max_over_support(probs, nxt.values)

    def terminal_premium(self, y):
        return y[2]

    def premium_bound(self, model):
        return self.z_grid[-1]


def build_growth(acceptance, wealth, shortfall_grid, z_grid, initial_wealth=0.0) -> GrowthStep:
    return GrowthStep(acceptance, wealth, shortfall_grid, z_grid, initial_wealth)
