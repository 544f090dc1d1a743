"""Finite-horizon controlled systems: distributions, dynamics, histories, rollouts."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

DEFAULT_HISTORY_CAP = 10**6


class PolicyHoleError(LookupError):
    """Raised when a policy has no usable decision at a visited information state."""

    def __init__(self, t: int, y: tuple, reason: str = "no decision stored"):
        self.t = t
        self.y = y
        super().__init__(f"policy hole at t={t}, y={y}: {reason}")


class EnumerationSizeError(ValueError):
    def __init__(self, what: str, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"{what}: {count} exceeds cap {cap}")


@dataclass(frozen=True)
class FiniteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("distribution needs a nonempty 1-D weight vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.probs > 0))

    def __len__(self) -> int:
        return self.probs.size


def make_distribution(weights: Sequence[float]) -> FiniteDistribution:
    w = [float(x) for x in weights]
    if not w:
        raise ValueError("degenerate distribution: no weights")
    for i, x in enumerate(w):
        if not math.isfinite(x) or x < 0:
            raise ValueError(f"invalid weight {x!r} at index {i}")
    total = math.fsum(w)
    if total <= 0:
        raise ValueError("degenerate distribution: all weights are zero")
    return FiniteDistribution(np.array(w) / total)


def point_mass(n_outcomes: int, at: int = 0) -> FiniteDistribution:
    p = np.zeros(n_outcomes)
    p[at] = 1.0
    return FiniteDistribution(p)


def expectation(probs, values) -> float:
    """Probability-weighted sum, accumulated left to right over positive-probability outcomes.

    Outcomes with zero probability are skipped, so an infeasible (+inf) value on a
    null outcome does not contaminate the result.  The fixed summation order keeps the
    result bit-identical to the compiled kernels.
    """
    p = probs.probs if isinstance(probs, FiniteDistribution) else probs
    if len(p) != len(values):
        raise ValueError(f"expected {len(p)} values, got {len(values)}")
    acc = 0.0
    for pi, v in zip(p, values):
        if pi > 0:
            acc += float(pi) * float(v)
    return acc


def truncated_gaussian_pmf(mean: float, variance: float, max_support: int,
                           pmf_mode: str = "density") -> FiniteDistribution:
    """Demand pmf on 0..max_support from a normal law.

    ``density`` renormalizes the density at the integers; ``cdf_bins`` renormalizes the
    mass of the unit bins centred at the integers.
    """
    if not variance > 0:
        raise ValueError("variance must be positive")
    if max_support < 0:
        raise ValueError("max_support must be nonnegative")
    nd = NormalDist(mean, math.sqrt(variance))
    ks = range(max_support + 1)
    if pmf_mode == "density":
        w = [nd.pdf(k) for k in ks]
    elif pmf_mode == "cdf_bins":
        w = [nd.cdf(k + 0.5) - nd.cdf(k - 0.5) for k in ks]
    else:
        raise ValueError(f"unknown pmf_mode {pmf_mode!r}")
    return make_distribution(w)


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MdpModel:
    """Finite MDP with per-period tables indexed ``[t, s, a, xi]``.

    ``noise`` holds one distribution per period (periods 0..horizon).
    """

    next_state: np.ndarray
    payoff: np.ndarray
    noise: tuple[FiniteDistribution, ...]
    initial_state: int = 0
    name: str = "mdp"

    def __post_init__(self):
        ns = _frozen(self.next_state, np.int64)
        r = _frozen(self.payoff, float)
        if ns.ndim != 4 or ns.shape != r.shape:
            raise ValueError("next_state and payoff must share shape (T+1, S, A, Xi)")
        n_t, n_s, n_a, n_x = ns.shape
        if min(ns.shape) < 1:
            raise ValueError("empty state, action or outcome space")
        if ns.min() < 0 or ns.max() >= n_s:
            raise ValueError("transition leaves the state space")
        if not np.all(np.isfinite(r)):
            raise ValueError("payoffs must be finite")
        noise = tuple(self.noise)
        if len(noise) != n_t or any(len(d) != n_x for d in noise):
            raise ValueError("need one noise distribution over all outcomes per period")
        if not 0 <= self.initial_state < n_s:
            raise ValueError(f"initial state {self.initial_state} out of range")
        object.__setattr__(self, "next_state", ns)
        object.__setattr__(self, "payoff", r)
        object.__setattr__(self, "noise", noise)
        probs = _frozen(np.stack([d.probs for d in noise]), float)
        object.__setattr__(self, "_probs", probs)

    @property
    def horizon(self) -> int:
        return self.next_state.shape[0] - 1

    @property
    def num_states(self) -> int:
        return self.next_state.shape[1]

    @property
    def num_actions(self) -> int:
        return self.next_state.shape[2]

    @property
    def num_outcomes(self) -> int:
        return self.next_state.shape[3]

    @property
    def probs(self) -> np.ndarray:
        """(T+1, Xi) array of per-period outcome probabilities."""
        return self._probs

    @property
    def r_max(self) -> float:
        return float(np.abs(self.payoff).max())

    def with_payoff(self, payoff) -> "MdpModel":
        return MdpModel(self.next_state, payoff, self.noise, self.initial_state, self.name)

    @classmethod
    def from_functions(cls, horizon: int, num_states: int, num_actions: int,
                       noise, transition: Callable, payoff: Callable,
                       initial_state: int = 0, name: str = "mdp") -> "MdpModel":
        """Tabulate ``transition(t, s, a, xi)`` and ``payoff(t, s, a, xi)``.

        ``noise`` is a single distribution (stationary) or one per period.
        """
        if isinstance(noise, FiniteDistribution):
            noise = [noise] * (horizon + 1)
        n_x = len(noise[0])
        shape = (horizon + 1, num_states, num_actions, n_x)
        ns = np.empty(shape, dtype=np.int64)
        r = np.empty(shape)
        for idx in itertools.product(*map(range, shape)):
            ns[idx] = transition(*idx)
            r[idx] = payoff(*idx)
        return cls(ns, r, tuple(noise), initial_state, name)


def check_indices(model: MdpModel, t: int, s: int, a: int, xi: int) -> None:
    limits = ((t, model.horizon + 1, "period"), (s, model.num_states, "state"),
              (a, model.num_actions, "action"), (xi, model.num_outcomes, "outcome"))
    for v, n, what in limits:
        if not 0 <= v < n:
            raise IndexError(f"{what} index {v} out of range 0..{n - 1}")


def step(model: MdpModel, t: int, s: int, a: int, xi: int) -> tuple[int, float]:
    check_indices(model, t, s, a, xi)
    return int(model.next_state[t, s, a, xi]), float(model.payoff[t, s, a, xi])


@dataclass(frozen=True)
class History:
    initial_state: int
    steps: tuple[tuple[int, int], ...] = ()

    @property
    def t(self) -> int:
        return len(self.steps)

    def states(self, model: MdpModel) -> list[int]:
        """Replay the state sequence s_0..s_t."""
        out = [self.initial_state]
        for k, (a, xi) in enumerate(self.steps):
            out.append(int(model.next_state[k, out[-1], a, xi]))
        return out

    def extend(self, a: int, xi: int) -> "History":
        return History(self.initial_state, self.steps + ((a, xi),))


def enumerate_histories(model: MdpModel, t: int, cap: int = DEFAULT_HISTORY_CAP) -> list[History]:
    if not 0 <= t <= model.horizon + 1:
        raise ValueError(f"period {t} outside 0..{model.horizon + 1}")
    count = (model.num_actions * model.num_outcomes) ** t
    if count > cap:
        raise EnumerationSizeError("history count", count, cap)
    pairs = list(itertools.product(range(model.num_actions), range(model.num_outcomes)))
    return [History(model.initial_state, steps) for steps in itertools.product(pairs, repeat=t)]


@dataclass(frozen=True)
class Trajectory:
    history: History
    payoffs: tuple[float, ...]
    disbursements: tuple[float, ...]
    info_states: tuple[tuple, ...]
    cumulative_payoff: float = field(init=False)

    def __post_init__(self):
        total = 0.0
        for r in self.payoffs:
            total += r
        object.__setattr__(self, "cumulative_payoff", total)

    @property
    def states(self) -> list[int]:
        return [y[0] for y in self.info_states]


def simulate_trajectory(model: MdpModel, policy, info_space, seed) -> Trajectory:
    """Roll the policy forward once; ``seed`` is anything ``numpy.random.default_rng`` takes."""
    rng = np.random.default_rng(seed)
    y = info_space.initial
    hist = History(y[0])
    payoffs, zs, ys = [], [], [y]
    for t in range(model.horizon + 1):
        d = policy.decide(t, y)
        xi = int(rng.choice(model.num_outcomes, p=model.probs[t]))
        payoffs.append(float(model.payoff[t, y[0], d.action, xi]))
        zs.append(float(d.z))
        y = info_space.transition(t, y, d.action, d.z, d.aux, xi)
        ys.append(y)
        hist = hist.extend(d.action, xi)
    return Trajectory(hist, tuple(payoffs), tuple(zs), tuple(ys))
