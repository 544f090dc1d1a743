import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcr.dp_solver import solve
from gcr.mdp_core import (EnumerationSizeError, History, MdpModel, enumerate_histories,
                          expectation, make_distribution, point_mass, simulate_trajectory,
                          step, truncated_gaussian_pmf)
from gcr.newsvendor import NewsvendorParams, build_newsvendor
from gcr.risk_models import build_risk_neutral
from conftest import stream


def test_make_distribution_normalizes():
    assert list(make_distribution([1, 1]).probs) == [0.5, 0.5]
    assert list(make_distribution([2, 0, 2]).probs) == [0.5, 0.0, 0.5]


def test_make_distribution_rejects_degenerate():
    with pytest.raises(ValueError, match="degenerate distribution"):
        make_distribution([0, 0])
    with pytest.raises(ValueError, match="index 1"):
        make_distribution([1, -1])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=8).filter(lambda w: sum(w) > 1e-6))
def test_distribution_sums_to_one(w):
    p = make_distribution(w).probs
    assert abs(p.sum() - 1) <= 1e-12
    assert (p >= 0).all()


def test_expectation_examples():
    assert expectation([0.5, 0.5], [0, 2]) == 1
    assert expectation(point_mass(2), [7, -1]) == 7
    assert expectation([0.3, 0.7], [10, 0]) == pytest.approx(3, abs=1e-15)


def test_expectation_skips_null_infinite_outcomes():
    assert expectation([1.0, 0.0], [2.0, math.inf]) == 2.0
    assert expectation([0.5, 0.5], [2.0, math.inf]) == math.inf


def test_truncated_gaussian_pmf():
    d = truncated_gaussian_pmf(4, 1.2, 9)
    assert abs(d.probs.sum() - 1) <= 1e-12
    assert int(np.argmax(d.probs)) == 4
    assert list(truncated_gaussian_pmf(0, 1, 0).probs) == [1.0]
    bins = truncated_gaussian_pmf(4, 1.2, 9, pmf_mode="cdf_bins")
    assert int(np.argmax(bins.probs)) == 4


def test_identity_dynamics_and_newsvendor_step():
    m = stream([[1.0, 2.0]], states=3)
    assert step(m, 0, 2, 0, 1) == (2, 2.0)
    nv = build_newsvendor(NewsvendorParams())
    assert step(nv, 0, 0, 4, 6) == (0, 4.0)
    assert step(nv, 0, 0, 4, 2) == (2, -4.0)
    assert step(nv, 0, 0, 0, 5) == (0, 0.0)
    assert step(nv, 0, 9, 9, 0) == (9, -36.0)
    with pytest.raises(IndexError):
        step(nv, 0, 10, 0, 0)


def test_model_validation():
    with pytest.raises(ValueError):
        MdpModel(np.zeros((1, 1, 1, 2), dtype=int), np.zeros((1, 1, 1, 3)),
                 (make_distribution([1, 1]),))
    with pytest.raises(ValueError):
        MdpModel(np.full((1, 1, 1, 1), 3), np.zeros((1, 1, 1, 1)), (make_distribution([1]),))


def test_enumerate_histories():
    m = MdpModel(np.zeros((3, 1, 2, 2), dtype=int), np.zeros((3, 1, 2, 2)),
                 (make_distribution([1, 1]),) * 3)
    assert enumerate_histories(m, 0) == [History(0)]
    assert len(enumerate_histories(m, 2)) == 16
    big = MdpModel(np.zeros((14, 1, 3, 3), dtype=int), np.zeros((14, 1, 3, 3)),
                   (make_distribution([1, 1, 1]),) * 14)
    with pytest.raises(EnumerationSizeError) as err:
        enumerate_histories(big, 13)
    assert str(9 ** 13) in str(err.value)


def test_simulate_is_deterministic_per_seed():
    nv = build_newsvendor(NewsvendorParams(horizon=2, s_max=3, a_max=3, xi_max=3,
                                           demand_mean=1.5, demand_var=1.0))
    res = solve(nv, build_risk_neutral())
    space = build_risk_neutral().info_space(nv)
    a = simulate_trajectory(nv, res.policy, space, [3, 1])
    b = simulate_trajectory(nv, res.policy, space, [3, 1])
    assert a == b
    assert len(a.payoffs) == 3
    assert a.cumulative_payoff == sum(a.payoffs)


def test_point_mass_rollout_is_deterministic():
    m = stream([[2.0, 9.0], [-1.0, 9.0]], probs=[1, 0])
    res = solve(m, build_risk_neutral())
    space = build_risk_neutral().info_space(m)
    tr = simulate_trajectory(m, res.policy, space, 0)
    assert tr.payoffs == (2.0, -1.0)
