"""Dynamic newsvendor: model, the five ordering policies and the zeta-sweep benchmark.

Policies:
  SC  savings-account capital requirement (endowment w0, disbursements drawn from wealth,
      soft penalty on negative terminal wealth, per-period income floor zeta)
  WR  wealth reserve (target shortfall z keeps E[w + R + z] >= zeta every period)
  CO  cash orders (c * a <= w + zeta), maximising expected total payoff
  RN  risk-neutral expected total payoff
  N   nested one-step CVaR of the payoff stream
"""
from __future__ import annotations

import dataclasses
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dp_solver import MonteCarloReport, SolveResult, monte_carlo, solve
from .lattice import LatticeTerms, solve_lattice
from .mdp_core import FiniteDistribution, MdpModel, expectation, make_distribution, \
    truncated_gaussian_pmf
from .risk_frontier import (ACCEPT_TOL, INFEASIBLE, CoordGrid, DecisionGrid, InfoStateSpace,
                            RiskFrontierStep, NO_DISBURSEMENT, integer_grid)
from . import risk_models as rm

POLICIES = ("SC", "WR", "CO", "RN", "N")
ZETA_POLICIES = ("SC", "WR", "CO")


class GridError(ValueError):
    """Wealth or disbursement grid cannot represent the reachable values."""


@dataclass(frozen=True)
class NewsvendorParams:
    s_max: int = 9
    a_max: int = 9
    xi_max: int = 9
    horizon: int = 10
    price: float = 3.0
    cost: float = 2.0
    holding: float = 1.0
    demand_mean: float = 4.0
    demand_var: float = 1.2
    pmf_mode: str = "density"
    demand_weights: tuple | None = None      # overrides the truncated Gaussian
    w_min: int = -540
    w_max: int = 539
    z_max: int = 1079
    beta: float = 4.0
    zeta: float = 15.0
    alpha: float = 0.4
    initial_wealth: float = 0.0

    def __post_init__(self):
        if not self.price > self.cost > self.holding >= 0:
            raise ValueError("p > c > h >= 0 required")
        if not 0 <= self.a_max <= self.s_max:
            raise ValueError("0 <= a_max <= s_max required")
        if self.xi_max < 0 or self.horizon < 0:
            raise ValueError("xi_max and horizon must be nonnegative")
        if not self.w_min < 0 < self.w_max:
            raise ValueError("w_min < 0 < w_max required")
        if self.z_max < 0:
            raise ValueError("z_max must be nonnegative")
        if not self.beta > 1:
            raise ValueError("beta > 1 required")
        if self.zeta < 0:
            raise ValueError("zeta must be nonnegative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.demand_weights is not None and len(self.demand_weights) != self.xi_max + 1:
            raise ValueError("demand weights need one entry per demand level 0..xi_max")

    @property
    def demand(self) -> FiniteDistribution:
        if self.demand_weights is not None:
            return make_distribution(self.demand_weights)
        return truncated_gaussian_pmf(self.demand_mean, self.demand_var, self.xi_max,
                                      self.pmf_mode)

    def replace(self, **kw) -> "NewsvendorParams":
        return dataclasses.replace(self, **kw)


def newsvendor_payoff(p, c, h, s, a, xi) -> float:
    return p * min(s + a, xi) - c * a - h * max(s + a - xi, 0)


def newsvendor_next(s_max, s, a, xi) -> int:
    return min(max(s + a - xi, 0), s_max)


def build_newsvendor(params: NewsvendorParams) -> MdpModel:
    """Inventory s in 0..s_max, orders a in 0..a_max, demand xi in 0..xi_max; lost sales."""
    P = params
    return MdpModel.from_functions(
        P.horizon, P.s_max + 1, P.a_max + 1, P.demand,
        lambda t, s, a, xi: newsvendor_next(P.s_max, s, a, xi),
        lambda t, s, a, xi: newsvendor_payoff(P.price, P.cost, P.holding, s, a, xi),
        initial_state=0, name="newsvendor")


def _wealth_grid(params: NewsvendorParams, model: MdpModel) -> CoordGrid:
    span = (model.horizon + 1) * model.r_max
    if params.initial_wealth - span < params.w_min or params.initial_wealth + span > params.w_max:
        raise GridError(f"wealth grid [{params.w_min}, {params.w_max}] cannot hold cumulative "
                        f"payoffs of magnitude {span:g}")
    return integer_grid("wealth", params.w_min, params.w_max)


def _z_values(params) -> list[float]:
    return [float(z) for z in range(params.z_max + 1)]


def _mean_payoff(model: MdpModel, t: int) -> np.ndarray:
    """(S, A) expected stage payoffs, accumulated like :func:`expectation`."""
    p = model.probs[t]
    return np.array([[expectation(p, model.payoff[t, s, a]) for a in range(model.num_actions)]
                     for s in range(model.num_states)])


# -------------------------------------------------------------------- frontiers


class WealthReserveStep(RiskFrontierStep):
    """Least expected total target shortfall keeping E[w + R + z] >= zeta each period."""

    name = "wealth_reserve"

    def __init__(self, zeta: float, wealth: CoordGrid, z_grid, initial_wealth: float = 0.0):
        self.zeta = float(zeta)
        self.wealth = wealth
        self.z_grid = tuple(sorted(float(z) for z in z_grid))
        self.initial_wealth = float(initial_wealth)
        self._grid = DecisionGrid(self.z_grid)

    def info_space(self, model):
        def update(t, y, a, z, aux, r):
            return (y[1] + r,)
        return rm._wealth_space(model, self.wealth, self.initial_wealth, update)

    def decision_grid(self, t, y):
        return self._grid

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        need = self.zeta - y[1] - expectation(probs, payoffs)
        if not z >= need - ACCEPT_TOL:
            return INFEASIBLE
        return z + expectation(probs, nxt.values)

    def lattice_terms(self, model):
        S, A = model.num_states, model.num_actions
        w = np.array(self.wealth.values)

        def need(t):
            return (self.zeta - w)[None, None, :] - _mean_payoff(model, t)[:, :, None]
        return LatticeTerms(w, np.array(self.z_grid), 1, 0, True, 0, need,
                            lambda t: np.ones((S, A, w.size), dtype=bool),
                            np.zeros((S, w.size)))


class CashOrderStep(RiskFrontierStep):
    """Expected total payoff (as the premium -E[sum R]) with orders capped by c * a <= w + zeta."""

    name = "cash_orders"

    def __init__(self, zeta: float, unit_cost: float, wealth: CoordGrid,
                 initial_wealth: float = 0.0):
        self.zeta = float(zeta)
        self.unit_cost = float(unit_cost)
        self.wealth = wealth
        self.initial_wealth = float(initial_wealth)

    def info_space(self, model):
        def update(t, y, a, z, aux, r):
            return (y[1] + r,)
        return rm._wealth_space(model, self.wealth, self.initial_wealth, update)

    def action_allowed(self, t, y, a):
        return self.unit_cost * a <= y[1] + self.zeta + ACCEPT_TOL

    def min_premium(self, t, y, probs, payoffs, z, aux, nxt):
        return expectation(probs, nxt.values - payoffs)

    def lattice_terms(self, model):
        S, A = model.num_states, model.num_actions
        w = np.array(self.wealth.values)
        acts = np.arange(A, dtype=float)
        mask = self.unit_cost * acts[:, None] <= w[None, :] + self.zeta + ACCEPT_TOL
        allowed = np.broadcast_to(mask[None], (S, A, w.size))
        return LatticeTerms(w, np.zeros(1), 1, 0, False, 1,
                            lambda t: np.full((S, A, w.size), -math.inf),
                            lambda t: allowed, np.zeros((S, w.size)))


def _sc_lattice_terms(step: rm.StandardCRStep, model: MdpModel) -> LatticeTerms:
    S, A = model.num_states, model.num_actions
    w = np.array(step.wealth.values)

    def need(t):
        acc = rm._per_period(step.acceptance, t)
        ms = np.array([[acc.min_shift(model.probs[t], model.payoff[t, s, a])
                        for a in range(A)] for s in range(S)])
        return np.broadcast_to(ms[:, :, None], (S, A, w.size))
    term = np.array([[step.terminal_premium((s, float(x))) for x in w] for s in range(S)])
    return LatticeTerms(w, np.array(step.z_grid), 0, 1, False, 0, need,
                        lambda t: np.ones((S, A, w.size), dtype=bool), term, endowment=True)


class NewsvendorSC(rm.StandardCRStep):
    def lattice_terms(self, model):
        return _sc_lattice_terms(self, model)


# ---------------------------------------------------------------- model wiring


def make_sc_model(params: NewsvendorParams):
    model = build_newsvendor(params)
    wealth = _wealth_grid(params, model)
    acc = rm.AcceptanceSpec("expectation_floor", params.zeta)
    step = NewsvendorSC(acc, wealth, _z_values(params), params.beta)
    return model, step, step.info_space(model)


def make_wr_model(params: NewsvendorParams):
    model = build_newsvendor(params)
    step = WealthReserveStep(params.zeta, _wealth_grid(params, model), _z_values(params),
                             params.initial_wealth)
    return model, step, step.info_space(model)


def make_co_model(params: NewsvendorParams):
    model = build_newsvendor(params)
    step = CashOrderStep(params.zeta, params.cost, _wealth_grid(params, model),
                         params.initial_wealth)
    return model, step, step.info_space(model)


def make_baselines(params: NewsvendorParams) -> dict:
    model = build_newsvendor(params)
    rn = rm.build_risk_neutral()
    n = rm.build_nested(rm.OneStepRiskSpec("cvar", params.alpha))
    return {"RN": (model, rn, rn.info_space(model)), "N": (model, n, n.info_space(model))}


def make_policy_model(name: str, params: NewsvendorParams):
    if name == "SC":
        return make_sc_model(params)
    if name == "WR":
        return make_wr_model(params)
    if name == "CO":
        return make_co_model(params)
    if name in ("RN", "N"):
        return make_baselines(params)[name]
    raise ValueError(f"unknown newsvendor policy {name!r}")


def solve_policy(name: str, params: NewsvendorParams, fast: bool = True) -> tuple:
    model, step, space = make_policy_model(name, params)
    if fast and hasattr(step, "lattice_terms"):
        return model, step, space, solve_lattice(model, step, space)
    return model, step, space, solve(model, step, space)


# ------------------------------------------------------------------- benchmark


@dataclass
class CellResult:
    policy: str
    zeta: float
    optimum: float
    seconds: float
    cumulative: np.ndarray | None = None      # (n,)
    payoffs: np.ndarray | None = None         # (n, T+1)
    wealth: np.ndarray | None = None          # (n, T+2)
    actions: np.ndarray | None = None         # (n, T+1)
    states: np.ndarray | None = None          # (n, T+2)
    demand: np.ndarray | None = None          # (n, T+1)
    disbursements: np.ndarray | None = None   # (n, T+1)
    error: str | None = None

    @property
    def summary(self) -> dict | None:
        if self.cumulative is None:
            return None
        return MonteCarloReport([], self.cumulative, self.payoffs, self.wealth).summary


@dataclass
class BenchReport:
    params: NewsvendorParams
    zetas: tuple
    n: int
    seed: int
    cells: dict = field(default_factory=dict)      # (policy, zeta) -> CellResult
    timings: dict = field(default_factory=dict)

    def cell(self, policy: str, zeta: float) -> CellResult:
        return self.cells[(policy, float(zeta))]


def _run_cell(name: str, params: NewsvendorParams, n: int, seed: int, fast: bool) -> CellResult:
    clock = time.perf_counter()
    try:
        model, step, space, res = solve_policy(name, params, fast)
    except GridError as exc:
        return CellResult(name, params.zeta, INFEASIBLE, time.perf_counter() - clock,
                          error=str(exc))
    secs = time.perf_counter() - clock
    if not res.feasible:
        return CellResult(name, params.zeta, res.optimum, secs, error="infeasible")
    try:
        mc = monte_carlo(model, res.policy, space, n, seed)
    except LookupError as exc:
        return CellResult(name, params.zeta, res.optimum, secs, error=str(exc))
    trajs = mc.trajectories
    return CellResult(
        name, params.zeta, res.optimum, secs, mc.cumulative, mc.payoffs, mc.wealth,
        np.array([[a for a, _ in tr.history.steps] for tr in trajs]),
        np.array([tr.states for tr in trajs]),
        np.array([[xi for _, xi in tr.history.steps] for tr in trajs]),
        np.array([tr.disbursements for tr in trajs]))


def worker_count(requested: int | None, jobs: int) -> int:
    cap = os.environ.get("GCR_THREADS")
    n = requested if requested else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, min(n, jobs))


def run_benchmark(params: NewsvendorParams, zetas, n_trajectories: int, seed: int,
                  workers: int | None = None, fast: bool = True,
                  policies=POLICIES) -> BenchReport:
    """Solve every policy per zeta (baselines once) and roll out ``n_trajectories`` each.

    Trajectory k of every cell uses the seed sequence (seed, k), so all policies face the
    same demand draws.  Infeasible or failing cells are recorded and the run continues.
    """
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    zetas = tuple(float(z) for z in zetas)
    jobs = []
    for name in policies:
        if name in ZETA_POLICIES:
            jobs += [(name, params.replace(zeta=z)) for z in zetas]
        else:
            jobs.append((name, params))
    report = BenchReport(params, zetas, n_trajectories, seed)
    clock = time.perf_counter()
    k = worker_count(workers, len(jobs))
    if k > 1:
        with ProcessPoolExecutor(max_workers=k) as pool:
            futs = [pool.submit(_run_cell, nm, p, n_trajectories, seed, fast) for nm, p in jobs]
            results = [f.result() for f in futs]
    else:
        results = [_run_cell(nm, p, n_trajectories, seed, fast) for nm, p in jobs]
    for (name, _), cell in zip(jobs, results):
        report.timings[(name, cell.zeta)] = cell.seconds
        if name in ZETA_POLICIES:
            report.cells[(name, cell.zeta)] = cell
        else:
            for z in zetas:
                report.cells[(name, z)] = dataclasses.replace(cell, zeta=z)
    report.timings["total"] = time.perf_counter() - clock
    return report


def nondecreasing_inversions(values, rel_tol: float = 0.0) -> int:
    """Count adjacent drops larger than ``rel_tol`` (relative to the earlier value)."""
    bad = 0
    for a, b in zip(values, values[1:]):
        if b < a - rel_tol * abs(a):
            bad += 1
    return bad
