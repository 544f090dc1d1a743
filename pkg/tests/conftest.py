import numpy as np
import pytest

from gcr.mdp_core import MdpModel, make_distribution


def stream(payoffs, probs=None, states=1):
    """Single-action payoff stream: ``payoffs[t][xi]``, state never changes."""
    r = np.asarray(payoffs, dtype=float)
    T1, n_x = r.shape
    if probs is None:
        probs = [1.0] * n_x
    dist = make_distribution(probs)
    pay = np.broadcast_to(r[:, None, None, :], (T1, states, 1, n_x)).copy()
    ns = np.zeros((T1, states, 1, n_x), dtype=np.int64)
    for s in range(states):
        ns[:, s] = s
    return MdpModel(ns, pay, (dist,) * T1)


def bandit(means_by_action, horizon=0):
    """One state, deterministic payoffs per action (one outcome)."""
    m = np.asarray(means_by_action, dtype=float)
    pay = np.broadcast_to(m[None, None, :, None], (horizon + 1, 1, m.size, 1)).copy()
    ns = np.zeros_like(pay, dtype=np.int64)
    return MdpModel(ns, pay, (make_distribution([1.0]),) * (horizon + 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
