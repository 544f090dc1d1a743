import math

import numpy as np
import pytest

from gcr.dp_solver import solve
from gcr.mdp_core import History
from gcr.risk_frontier import (INFEASIBLE, CoordGrid, StructuralError, check_membership,
                               compress_history, integer_grid, min_stage_premium,
                               tail_risk_evaluate)
from gcr.risk_models import (AcceptanceSpec, build_cvar_shortfall, build_entropic,
                             build_risk_neutral, build_standard_cr, tail_mass_levels)
from conftest import stream


def test_risk_neutral_stage_premium():
    rn = build_risk_neutral()
    assert min_stage_premium(rn, 0, (0,), [0.5, 0.5], [0, 2], 0.0, None, [0, 0]) == -1
    assert min_stage_premium(rn, 0, (0,), [0.5, 0.5], [0, 2], 0.0, None, [5, 5]) == 4


def test_standard_cr_rejects_unacceptable_disbursement():
    step = build_standard_cr(AcceptanceSpec("expectation_floor", 0.0), range(-5, 6), [3])
    phi = min_stage_premium(step, 1, (0, 0.0), [1.0], [-5.0], 3.0, None, [0.0])
    assert phi == INFEASIBLE


def test_nan_inputs_rejected():
    with pytest.raises(ValueError):
        min_stage_premium(build_risk_neutral(), 0, (0,), [1.0], [math.nan], 0.0, None, [0.0])


def test_tail_risk_evaluate_examples():
    assert tail_risk_evaluate(build_risk_neutral(),
                              build_risk_neutral().info_space(stream([[1], [1]]))).risk == -2
    ent = build_entropic(1.0)
    m = stream([[0], [0], [0]])
    assert tail_risk_evaluate(ent, ent.info_space(m)).risk == 1
    m = stream([[0.0, math.log(2)]])
    assert tail_risk_evaluate(ent, ent.info_space(m)).risk == pytest.approx(0.75, abs=1e-15)


def test_infeasible_root_reports_first_stage():
    step = build_standard_cr(AcceptanceSpec("pointwise_floor", 0.0), range(0, 3), [0, 1])
    m = stream([[0], [-5]])
    sched = tail_risk_evaluate(step, step.info_space(m))
    assert sched.risk == INFEASIBLE
    assert sched.first_infeasible == 1


def test_compress_history():
    step = build_standard_cr(AcceptanceSpec("expectation_floor"), range(-5, 6), [0, 3])
    m = stream([[0], [0]])
    space = step.info_space(m)
    assert compress_history(space, 0, History(0)) == space.initial
    assert compress_history(space, 1, History(0, ((0, 0),)), [(3.0, 0.0)]) == (0, -3.0)


def test_cvar_level_is_constant_along_histories():
    m = stream([[0, 1], [2, 0], [1, 1]], probs=[0.3, 0.7])
    step = build_cvar_shortfall(0.4, tail_mass_levels(m), AcceptanceSpec(), [0, 1])
    space = step.info_space(m)
    for steps in [((0, 0), (0, 1)), ((0, 1), (0, 0))]:
        y = compress_history(space, 2, History(0, steps), [(0.0, 1.0), (1.0, 1.0)])
        assert y[1] == pytest.approx(0.4)


def test_membership_of_evaluated_schedule():
    rn = build_risk_neutral()
    m = stream([[0.0, 2.0], [1.0, -1.0]], probs=[0.25, 0.75])
    space = rn.info_space(m)
    sched = tail_risk_evaluate(rn, space)
    assert check_membership(rn, space, m, sched.disbursements, sched.values)
    lower = [dict(row) for row in sched.values]
    lower[0][space.initial] -= 1
    assert not check_membership(rn, space, m, sched.disbursements, lower)
    higher = [{y: v + 10 for y, v in row.items()} for row in sched.values]
    higher[-1] = sched.values[-1]
    assert check_membership(rn, space, m, sched.disbursements, higher)


def test_coord_grid_projection():
    g = CoordGrid("w", [0.0, 1.0, 3.0])
    assert g.project(1.9) == 1.0
    assert g.project(2.1) == 3.0
    assert g.project(-7) == 0.0
    assert integer_grid("w", -2, 2).values == (-2.0, -1.0, 0.0, 1.0, 2.0)
    lin = CoordGrid("x", [0.0, 1.0], mode="linear")
    assert lin.bracket(0.25) == (0.0, 1.0, 0.25)


def test_missing_successor_is_structural_error():
    rn = build_risk_neutral()
    m = stream([[1.0], [1.0]])
    space = rn.info_space(m)
    from gcr.risk_frontier import successors
    with pytest.raises(StructuralError, match="period 1"):
        successors(space, 0, (0,), 0, 0.0, None, {})
