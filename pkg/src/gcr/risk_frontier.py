"""Compressed one-step risk frontiers, information-state spaces and the tail-risk recursion."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .mdp_core import History, MdpModel

INFEASIBLE = math.inf

# slack used by every acceptance test "value >= floor"; shared with the compiled kernels
ACCEPT_TOL = 1e-9

InfoState = tuple


class StructuralError(LookupError):
    """A value table is missing an information state that the recursion needs."""


def is_infeasible(v: float) -> bool:
    return v == INFEASIBLE


class CoordGrid:
    """Sorted grid for one augmenting coordinate.

    ``mode`` controls how off-grid successor coordinates are read: ``nearest`` projects
    (ties go to the smaller grid value), ``linear`` interpolates the premium values.
    """

    def __init__(self, name: str, values: Sequence[float], mode: str = "nearest"):
        vals = sorted({float(v) for v in values})
        if not vals:
            raise ValueError(f"empty grid for {name}")
        if mode not in ("nearest", "linear"):
            raise ValueError(f"unknown projection mode {mode!r}")
        self.name = name
        self.values = tuple(vals)
        self.mode = mode
        self._index = {v: i for i, v in enumerate(vals)}

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"CoordGrid({self.name!r}, n={len(self.values)}, {self.values[0]}..{self.values[-1]})"

    def index(self, v: float) -> int:
        return self._index[v]

    def project(self, x: float) -> float:
        vals = self.values
        if x in self._index:
            return x
        i = bisect.bisect_left(vals, x)
        if i == 0:
            return vals[0]
        if i == len(vals):
            return vals[-1]
        lo, hi = vals[i - 1], vals[i]
        return lo if x - lo <= hi - x else hi

    def bracket(self, x: float) -> tuple[float, float, float]:
        """(lower, upper, weight on upper) for linear reads; clamps outside the grid."""
        vals = self.values
        if x <= vals[0]:
            return vals[0], vals[0], 0.0
        if x >= vals[-1]:
            return vals[-1], vals[-1], 0.0
        if x in self._index:
            return x, x, 0.0
        i = bisect.bisect_left(vals, x)
        lo, hi = vals[i - 1], vals[i]
        return lo, hi, (x - lo) / (hi - lo)


def integer_grid(name: str, lo: int, hi: int, mode: str = "nearest") -> CoordGrid:
    return CoordGrid(name, range(lo, hi + 1), mode)


@dataclass(frozen=True)
class DecisionGrid:
    disbursements: tuple[float, ...]
    auxiliaries: tuple[Any, ...] = (None,)

    def __post_init__(self):
        if not self.disbursements or not self.auxiliaries:
            raise ValueError("decision grid must be nonempty")
        if list(self.disbursements) != sorted(self.disbursements):
            raise ValueError("disbursements must be sorted ascending")

    def candidates(self) -> Iterator[tuple[float, Any]]:
        for z in self.disbursements:
            for aux in self.auxiliaries:
                yield z, aux


NO_DISBURSEMENT = DecisionGrid((0.0,))


# raw coordinate update: (t, y, a, z, aux, payoff) -> unprojected augmenting coordinates
CoordUpdate = Callable[[int, InfoState, int, float, Any, float], Sequence[float]]


class InfoStateSpace:
    """Per-period grids of information states y = (s, *coords) and the transition g_t."""

    def __init__(self, model: MdpModel, coords: Sequence[CoordGrid],
                 grids: Sequence[Sequence[InfoState]], initial: InfoState,
                 update: CoordUpdate | None = None):
        self.model = model
        self.coords = tuple(coords)
        if len(grids) != model.horizon + 2:
            raise ValueError("need one grid per period 0..T+1")
        self.grids = tuple(tuple(g) for g in grids)
        if any(not g for g in self.grids):
            raise ValueError("empty information-state grid")
        self.initial = tuple(initial)
        self._update = update
        if len(self.initial) != 1 + len(self.coords):
            raise ValueError("initial state does not match the coordinate layout")

    @property
    def coord_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.coords)

    def transition(self, t: int, y: InfoState, a: int, z: float, aux: Any, xi: int) -> InfoState:
        s = y[0]
        s_next = int(self.model.next_state[t, s, a, xi])
        if not self.coords:
            return (s_next,)
        raw = self._update(t, y, a, z, aux, float(self.model.payoff[t, s, a, xi]))
        return (s_next,) + tuple(c.project(v) for c, v in zip(self.coords, raw))


def product_grid(states: int, *coords: Sequence[float]) -> tuple[InfoState, ...]:
    out = [(s,) for s in range(states)]
    for vals in coords:
        out = [y + (v,) for y in out for v in vals]
    return tuple(out)


def compress_history(space: InfoStateSpace, t: int, h: History,
                     decisions: Sequence[tuple[float, Any]] | None = None) -> InfoState:
    """Replay g_t along a history; ``decisions`` gives the recorded (z, aux) per period."""
    if h.t != t:
        raise ValueError(f"history has length {h.t}, expected {t}")
    if decisions is None:
        decisions = [(0.0, None)] * t
    if len(decisions) < t:
        raise ValueError("need one recorded decision per period")
    y = space.initial
    if h.initial_state != y[0]:
        y = (h.initial_state,) + y[1:]
    for k, ((a, xi), (z, aux)) in enumerate(zip(h.steps, decisions)):
        y = space.transition(k, y, a, z, aux, xi)
    return y


class Successors:
    """Next-period premiums for one candidate decision, one entry per outcome.

    ``values[xi]`` is the premium at g_t(y, a, z, xi).  Steps whose adversary moves an
    augmenting coordinate read the successor row along that coordinate through ``at``
    or ``profile``.
    """

    def __init__(self, values: Sequence[float], states: Sequence[InfoState] | None = None,
                 row: dict | None = None, space: InfoStateSpace | None = None):
        self.values = np.asarray(values, dtype=float)
        self.states = states
        self._row = row
        self._space = space

    def _lookup(self, y):
        try:
            return self._row[y]
        except KeyError:
            raise StructuralError(f"no next-period premium stored at {y}") from None

    def at(self, xi: int, k: int, x: float) -> float:
        """Premium at the xi-successor with coordinate ``k`` replaced by ``x``."""
        if self._row is None:
            return float(self.values[xi])
        grid = self._space.coords[k]
        base = self.states[xi]

        def read(v):
            return self._lookup(base[:k + 1] + (v,) + base[k + 2:])

        if grid.mode == "nearest":
            return read(grid.project(x))
        lo, hi, w = grid.bracket(x)
        if w == 0.0:
            return read(lo)
        vlo, vhi = read(lo), read(hi)
        if math.isinf(vlo) or math.isinf(vhi):
            return INFEASIBLE
        return (1.0 - w) * vlo + w * vhi

    def profile(self, xi: int, k: int, xs: Sequence[float] | None = None
                ) -> tuple[np.ndarray, np.ndarray]:
        """Successor premiums along coordinate ``k`` at the points ``xs`` (default: its grid)."""
        if self._row is None:
            v = float(self.values[xi])
            pts = np.array([0.0, 1.0] if xs is None else xs, dtype=float)
            return pts, np.full(pts.shape, v)
        base = self.states[xi]
        if xs is None:
            xs = self._space.coords[k].values
        vals = [self._lookup(base[:k + 1] + (x,) + base[k + 2:]) for x in xs]
        return np.array(xs, dtype=float), np.array(vals)


class RiskFrontierStep:
    """Base class for compressed one-step risk frontiers (minimisation form).

    Subclasses implement ``min_premium`` and ``terminal_premium`` and usually
    ``info_space`` / ``decision_grid``.  Instances must be immutable.
    """

    name = "frontier"

    def info_space(self, model: MdpModel) -> InfoStateSpace:
        grids = [product_grid(model.num_states)] * (model.horizon + 2)
        return InfoStateSpace(model, (), grids, (model.initial_state,))

    def decision_grid(self, t: int, y: InfoState) -> DecisionGrid:
        return NO_DISBURSEMENT

    def action_allowed(self, t: int, y: InfoState, a: int) -> bool:
        return True

    def min_premium(self, t: int, y: InfoState, probs: np.ndarray, payoffs: np.ndarray,
                    z: float, aux: Any, nxt: Successors) -> float:
        raise NotImplementedError

    def terminal_premium(self, y: InfoState) -> float:
        return 0.0

    def premium_bound(self, model: MdpModel) -> float:
        """Upper bound on any finite stage premium (inf when none is known)."""
        return math.inf


def _as_successors(next_premiums) -> Successors:
    if isinstance(next_premiums, Successors):
        return next_premiums
    return Successors(next_premiums)


def min_stage_premium(step: RiskFrontierStep, t: int, y: InfoState, probs, payoffs, z: float,
                      aux: Any, next_premiums) -> float:
    payoffs = np.asarray(payoffs, dtype=float)
    nxt = _as_successors(next_premiums)
    if np.isnan(payoffs).any() or np.isnan(nxt.values).any() or (isinstance(z, float) and math.isnan(z)):
        raise ValueError("NaN in stage inputs")
    probs = np.asarray(probs, dtype=float)
    if not (len(probs) == len(payoffs) == len(nxt.values)):
        raise ValueError("per-outcome inputs have mismatched lengths")
    return step.min_premium(t, y, probs, payoffs, z, aux, nxt)


def successors(space: InfoStateSpace, t: int, y: InfoState, a: int, z: float, aux: Any,
               row: dict) -> Successors:
    n_x = space.model.num_outcomes
    states = [space.transition(t, y, a, z, aux, xi) for xi in range(n_x)]
    vals = []
    for ys in states:
        try:
            vals.append(row[ys])
        except KeyError:
            raise StructuralError(f"period {t + 1} table has no entry for {ys}") from None
    return Successors(vals, states, row, space)


def terminal_row(step: RiskFrontierStep, space: InfoStateSpace) -> dict:
    return {y: float(step.terminal_premium(y)) for y in space.grids[-1]}


@dataclass
class PremiumSchedule:
    """Premiums per period (t = 0..T+1) and the minimising (z, aux) per period (t = 0..T).

    ``first_infeasible`` is the first period, in backward-pass order, at which some grid
    state had no feasible decision; it is only set when the root is infeasible.
    """

    values: list[dict]
    disbursements: list[dict]
    initial: InfoState
    first_infeasible: int | None = None

    @property
    def risk(self) -> float:
        return self.values[0][self.initial]


def tail_risk_evaluate(step: RiskFrontierStep, space: InfoStateSpace,
                       stream_model: MdpModel | None = None) -> PremiumSchedule:
    """Backward pass of the recursive frontier for a pure payoff stream (one action)."""
    model = stream_model if stream_model is not None else space.model
    if model.num_actions != 1:
        raise ValueError("tail_risk_evaluate needs a single-action stream model")
    T = model.horizon
    values = [dict() for _ in range(T + 2)]
    decisions = [dict() for _ in range(T + 1)]
    values[T + 1] = terminal_row(step, space)
    first_bad = None
    for t in range(T, -1, -1):
        probs = model.probs[t]
        nrow = values[t + 1]
        for y in space.grids[t]:
            payoffs = model.payoff[t, y[0], 0]
            best, arg = INFEASIBLE, None
            for z, aux in step.decision_grid(t, y).candidates():
                nxt = successors(space, t, y, 0, z, aux, nrow)
                phi = step.min_premium(t, y, probs, payoffs, z, aux, nxt)
                if phi < best:
                    best, arg = phi, (z, aux)
            values[t][y] = best
            if arg is not None:
                decisions[t][y] = arg
            elif first_bad is None:
                first_bad = t
    sched = PremiumSchedule(values, decisions, space.initial)
    if math.isinf(sched.risk):
        sched.first_infeasible = first_bad
    return sched


def reachable_states(space: InfoStateSpace, decide: Callable[[int, InfoState], tuple | None]
                     ) -> list[set]:
    """Forward closure from y_0; ``decide(t, y)`` returns (a, z, aux) or None to stop."""
    model = space.model
    out = [set() for _ in range(model.horizon + 2)]
    out[0].add(space.initial)
    for t in range(model.horizon + 1):
        support = np.flatnonzero(model.probs[t] > 0)
        for y in sorted(out[t], key=repr):
            d = decide(t, y)
            if d is None:
                continue
            a, z, aux = d
            for xi in support:
                out[t + 1].add(space.transition(t, y, a, z, aux, int(xi)))
    return out


def check_membership(step: RiskFrontierStep, space: InfoStateSpace, model: MdpModel,
                     disbursements: Sequence[dict], schedule: Sequence[dict],
                     tol: float = 1e-9) -> bool:
    """True iff every reachable stage inclusion holds for the given (Z, premium) tables."""
    if model.num_actions != 1:
        raise ValueError("membership is checked on single-action streams")
    T = model.horizon

    def decide(t, y):
        if y not in disbursements[t]:
            raise StructuralError(f"disbursement table has no entry at t={t}, y={y}")
        z, aux = disbursements[t][y]
        return 0, z, aux

    reach = reachable_states(space, decide)
    for y in reach[T + 1]:
        if schedule[T + 1].get(y, -math.inf) < step.terminal_premium(y) - tol:
            return False
    for t in range(T + 1):
        for y in reach[t]:
            z, aux = disbursements[t][y]
            nxt = successors(space, t, y, 0, z, aux, schedule[t + 1])
            need = step.min_premium(t, y, model.probs[t], model.payoff[t, y[0], 0], z, aux, nxt)
            if math.isinf(need):
                return False
            if y not in schedule[t] or schedule[t][y] < need - tol:
                return False
    return True
