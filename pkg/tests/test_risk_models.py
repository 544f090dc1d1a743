import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcr.dp_solver import solve
from gcr.mdp_core import MdpModel, make_distribution
from gcr.oracle import cvar_sorted_tail
from gcr.risk_frontier import INFEASIBLE, min_stage_premium, tail_risk_evaluate
from gcr.risk_models import (AcceptanceSpec, OneStepRiskSpec, Utility, build_consumption,
                             build_consumption_excess, build_cvar_shortfall, build_entropic,
                             build_expected_utility, build_growth, build_nested,
                             build_quantile, build_risk_neutral, build_standard_cr,
                             build_worst_case, cvar_variational, entropic_risk,
                             tail_mass_levels, tv_worst_expectation)
from conftest import stream

POINTWISE = AcceptanceSpec("pointwise_floor", 0.0)
ZS = [0.0, 1.0, 2.0]


def split_shortfall(gap=2.0):
    """T=1: the first outcome decides whether the second period needs ``gap`` of cover."""
    return MdpModel.from_functions(
        1, 2, 1, make_distribution([1, 1]),
        lambda t, s, a, xi: xi if t == 0 else s,
        lambda t, s, a, xi: -gap if (t == 1 and s == 1) else 0.0)


def gcr(step, model):
    return solve(model, step).optimum


# --- one-step premiums


def test_risk_neutral_examples():
    rn = build_risk_neutral()
    assert min_stage_premium(rn, 0, (0,), [1.0], [2.0], 0.0, None, [0.0]) == -2
    assert min_stage_premium(rn, 0, (0,), [0.5, 0.5], [0, 2], 0.0, None, [3, 3]) == 2
    assert tail_risk_evaluate(rn, rn.info_space(stream([[1], [1]]))).risk == -2


def test_entropic_examples():
    assert min_stage_premium(build_entropic(1), 0, (0,), [1.0], [0.0], 0, None, [1.0]) == 1
    v = min_stage_premium(build_entropic(1), 0, (0,), [0.5, 0.5], [0, math.log(2)], 0, None,
                          [1.0, 1.0])
    assert v == pytest.approx(0.75, abs=1e-15)
    v = min_stage_premium(build_entropic(2), 0, (0,), [1.0], [1.0], 0, None, [1.0])
    assert v == pytest.approx(math.exp(-2), rel=1e-15)
    assert entropic_risk(math.exp(-2), 2) == pytest.approx(1.0)


def test_nested_examples():
    exp_step = build_nested(OneStepRiskSpec("expectation"))
    assert min_stage_premium(exp_step, 0, (0,), [1.0], [4.0], 0, None, [1.5]) == -2.5
    cv = build_nested(OneStepRiskSpec("cvar", 0.4))
    assert min_stage_premium(cv, 0, (0,), [0.5, 0.5], [0, 2], 0, None, [0, 0]) == \
        pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        OneStepRiskSpec("variance")


def test_standard_cr_endowment():
    acc = AcceptanceSpec("expectation_floor", 0.0)
    step = build_standard_cr(acc, range(-10, 11), range(0, 11))
    res = solve(stream([[-5.0]]), step)
    assert res.optimum == 5
    d = res.policy.decide(0, res.initial)
    assert (d.z, d.aux) == (5.0, 5.0)
    res = solve(stream([[5.0]]), step)
    assert res.optimum == 0


def test_standard_cr_soft_terminal_penalty():
    step = build_standard_cr(AcceptanceSpec(), range(-3, 4), [0.0, 1.0], soft_penalty_beta=4)
    assert step.terminal_premium((0, -1.0)) == 4
    assert step.terminal_premium((0, 2.0)) == 0
    # terminal wealth -1 on a path of probability one half contributes 2
    assert min_stage_premium(step, 1, (0, 0.0), [0.5, 0.5], [0, 0], 0.0, None,
                             [step.terminal_premium((0, -1.0)), 0.0]) == 2
    with pytest.raises(ValueError):
        build_standard_cr(AcceptanceSpec(), range(3), [0], soft_penalty_beta=1)


def test_consumption_stage_cost():
    step = build_consumption(1.0, 2.0, range(0, 11), [0.0, 5.0])
    assert step.stage_cost(0, 10.0, np.array([0.0]), 5.0)[0] == -5
    assert step.stage_cost(0, 0.0, np.array([0.0]), 5.0)[0] == 5
    assert min_stage_premium(step, 0, (0, 10.0), [1.0], [0.0], 5.0, None, [0.0]) == -5
    assert min_stage_premium(step, 0, (0, 3.0), [1.0], [0.0], 0.0, None, [0.0]) == 0
    with pytest.raises(ValueError):
        build_consumption(2.0, 1.0, range(3), [0.0])


def test_consumption_excess_perspective():
    lin = Utility("linear")
    step = build_consumption_excess(lin, 1.0, 0.1, 0.0, 0.0, [0.1, 0.5], range(-3, 4), [0.0])
    assert step.perspective(0, 0, [1.0], [1.0], 0.0, 0.5) == 0
    assert min_stage_premium(step, 0, (0, 0.0), [1.0], [1.0], 0.0, 0.1, [0.0]) == 0.1
    for alpha in (0.1, 0.5):
        assert min_stage_premium(step, 0, (0, 0.0), [1.0], [0.0], 0.0, alpha, [0.0]) == INFEASIBLE
    v = min_stage_premium(step, 0, (0, 0.0), [0.5, 0.5], [1.0, 1.0], 0.0, 0.5, [1.0, 3.0])
    assert v >= 0.5 + 3


def test_expected_utility_of_shortfall():
    m = split_shortfall()
    assert gcr(build_expected_utility(Utility("square"), POINTWISE, ZS), m) == 2
    assert gcr(build_expected_utility(Utility("linear"), POINTWISE, ZS), m) == 1
    assert gcr(build_expected_utility(Utility("square"), POINTWISE, ZS), stream([[1], [0]])) == 0


def test_worst_case_tv():
    assert tv_worst_expectation([0.9, 0.1], [0, 10], 0.2) == pytest.approx(3.0, abs=1e-12)
    m = split_shortfall()
    grid = [0.0, 0.25, 0.5]
    k0 = build_worst_case(0.0, grid, POINTWISE, ZS)
    lin = build_expected_utility(Utility("linear"), POINTWISE, ZS)
    assert gcr(k0, m) == gcr(lin, m) == 1
    assert gcr(build_worst_case(0.5, grid, POINTWISE, ZS), m) == 2
    one = build_worst_case(1.0, [0.0, 0.5, 1.0], AcceptanceSpec(), ZS)
    assert min_stage_premium(one, 0, (0, 1.0), [0.5, 0.5], [0, 0], 2.0, None, [0, 0]) == 2
    with pytest.raises(ValueError, match="unsupported"):
        build_worst_case(0.0, grid, POINTWISE, ZS, metric="wasserstein")


def test_cvar_of_shortfall():
    m = split_shortfall()
    assert gcr(build_cvar_shortfall(0.5, tail_mass_levels(m), POINTWISE, ZS), m) == \
        pytest.approx(2, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.9])
def test_cvar_of_constant_shortfall(alpha):
    m = stream([[-1.0], [-1.0], [-1.0]])
    step = build_cvar_shortfall(alpha, tail_mass_levels(m), POINTWISE, ZS)
    assert gcr(step, m) == pytest.approx(3.0, abs=1e-12)


def test_quantile_of_shortfall():
    m = split_shortfall()
    assert gcr(build_quantile(0.5, tail_mass_levels(m), POINTWISE, ZS), m) == 2
    assert gcr(build_quantile(0.5, tail_mass_levels(stream([[-1.0], [-1.0]])), POINTWISE, ZS),
               stream([[-1.0], [-1.0]])) == 2
    # tau below every outcome probability: nothing can be excluded, worst case remains
    step = build_quantile(0.3, tail_mass_levels(m), POINTWISE, ZS)
    assert gcr(step, m) == 2


def test_max_shortfall():
    m = split_shortfall(gap=2.0)
    step = build_growth(POINTWISE, range(-4, 3), ZS, ZS)
    assert gcr(step, m) == 2
    assert gcr(build_growth(POINTWISE, range(0, 4), ZS, ZS), stream([[1], [0]])) == 0
    seq = stream([[-1.0], [-2.0], [1.0]])
    # wealth after t: 0 -> -1 -> ... the running need follows the cumulative payoff
    step = build_growth(POINTWISE, range(-3, 1), [0, 1, 2, 3], [0, 1, 2, 3])
    assert gcr(step, seq) == 3


def test_max_shortfall_is_worst_path_not_average():
    m = MdpModel.from_functions(
        1, 2, 1, make_distribution([1, 1]),
        lambda t, s, a, xi: xi if t == 0 else s,
        lambda t, s, a, xi: 0.0 if t == 0 else (-3.0 if s == 0 else -5.0))
    step = build_growth(POINTWISE, range(-5, 1), range(0, 6), range(0, 6))
    assert gcr(step, m) == 5


# --- CVaR formulas


def test_cvar_variational_examples():
    assert cvar_variational([0.5, 0.5], [0, 2], 0.5, "cost") == 2
    assert cvar_variational([0.5, 0.5], [0, 2], 0.4, "payoff") == pytest.approx(0, abs=1e-15)
    assert cvar_variational([0.5, 0.5], [0, 2], 1e-9, "cost") == pytest.approx(1, abs=1e-8)
    with pytest.raises(ValueError):
        cvar_variational([1.0], [1.0], 1.0)


dist = st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.01, 1), min_size=n, max_size=n),
    st.lists(st.floats(-50, 50), min_size=n, max_size=n)))


@given(dist, st.floats(0.01, 0.99))
def test_cvar_variational_matches_sorted_tail(pv, alpha):
    w, v = pv
    p = np.array(w) / sum(w)
    for form in ("cost", "payoff"):
        a = cvar_variational(p, v, alpha, form)
        b = cvar_sorted_tail(p, v, alpha, form)
        assert a == pytest.approx(b, abs=1e-9)


@given(dist, st.floats(0.01, 0.99))
def test_cvar_between_mean_and_extreme(pv, alpha):
    w, v = pv
    p = np.array(w) / sum(w)
    mean = float(p @ np.array(v))
    c = cvar_variational(p, v, alpha, "cost")
    assert mean - 1e-9 <= c <= max(v) + 1e-9


@given(dist, st.floats(0, 1))
def test_tv_worst_expectation_bounds(pv, radius):
    w, v = pv
    p = np.array(w) / sum(w)
    got = tv_worst_expectation(p, v, radius)
    assert float(p @ np.array(v)) - 1e-9 <= got <= max(v) + 1e-9


# --- acceptance sets


def test_acceptance_shifts():
    assert AcceptanceSpec("expectation_floor", 1.0).min_shift([0.5, 0.5], [0, 2]) == 0
    assert AcceptanceSpec("pointwise_floor", 0.0).min_shift([0.5, 0.5], [-3, 2]) == 3
    assert AcceptanceSpec("pointwise_floor", 0.0).min_shift([1.0, 0.0], [1, -9]) == -1
    assert AcceptanceSpec().min_shift([1.0], [0.0]) == -math.inf
    with pytest.raises(ValueError):
        AcceptanceSpec("var_floor")


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(-3, 3))
def test_acceptance_is_cash_additive(vals, c):
    p = [0.5, 0.5]
    for kind in ("expectation_floor", "pointwise_floor", "cvar_floor"):
        acc = AcceptanceSpec(kind, 0.0, 0.3)
        shifted = acc.min_shift(p, np.array(vals) + c)
        assert shifted == pytest.approx(acc.min_shift(p, vals) - c, abs=1e-9)


def test_utilities():
    assert Utility("square")(3.0) == 9
    assert Utility("power", 2.0)(-2.0) == -4
    assert Utility("exp_loss", 1.0)(0.0) == 0
    x = np.array([-1.0, 0.5, 2.0])
    for kind in ("linear", "square", "power", "exp_loss", "exp_gain"):
        u = Utility(kind, 1.5)
        np.testing.assert_allclose(u.array(x), [u(v) for v in x], rtol=1e-15)
