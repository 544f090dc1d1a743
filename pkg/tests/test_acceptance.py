"""Acceptance criteria 1-9; each test prints one PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from gcr import oracle as O
from gcr import risk_models as rm
from gcr.cli import bundled_config, main
from gcr.config import parse_config, to_newsvendor_params
from gcr.dp_solver import solve
from gcr.mdp_core import MdpModel, make_distribution
from gcr.newsvendor import nondecreasing_inversions, run_benchmark
from gcr.risk_frontier import tail_risk_evaluate


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    return emit


def worst(rows):
    return max((r.error for r in rows), default=0.0)


def test_criterion_1_oracle_equivalence(report):
    clock = time.perf_counter()
    rows = O.oracle_equivalence(50, seed=0, tol=1e-9)
    secs = time.perf_counter() - clock
    kinds = {r.check for r in rows}
    failed = [r for r in rows if not r.passed]
    ok = not failed and secs <= 60 and len(kinds) == 6
    report(1, ok, f"{len(rows)} checks over {len(kinds)} objectives, max error "
                  f"{worst(rows):.2e}, {secs:.1f} s")
    assert not failed, failed[:5]
    assert len(kinds) == 6
    assert secs <= 60


def test_criterion_2_classical_dp(report):
    rows = O.classical_equivalence(100, seed=0, tol=1e-12)
    failed = [r for r in rows if not r.passed]
    report(2, not failed, f"100 instances, max error {worst(rows):.2e}")
    assert not failed, failed[:5]


def _greedy_tree(model, policy):
    """History-dependent dict of a Markov greedy policy (info state = state)."""
    out = {}

    def walk(t, s, steps):
        if t > model.horizon:
            return
        a = policy.decide(t, (s,)).action
        out[steps] = (a, 0.0)
        for xi in range(model.num_outcomes):
            walk(t + 1, int(model.next_state[t, s, a, xi]), steps + ((a, xi),))

    walk(0, model.initial_state, ())
    return out


def _path_totals(model, tree):
    probs, totals = [], []

    def walk(t, s, steps, p, acc):
        if t > model.horizon:
            probs.append(p)
            totals.append(acc)
            return
        a, _ = tree[steps]
        for xi in range(model.num_outcomes):
            q = model.probs[t, xi]
            if q > 0:
                walk(t + 1, int(model.next_state[t, s, a, xi]), steps + ((a, xi),), p * q,
                     acc + float(model.payoff[t, s, a, xi]))

    walk(0, model.initial_state, (), 1.0, 0.0)
    return np.array(probs), np.array(totals)


def test_criterion_3_entropic_closed_form(report):
    errs, defs = [], []
    for seed in range(30):
        rng = np.random.default_rng([seed, 3])
        model = O.random_instance(rng, int(rng.integers(0, 4)), 3, 2, 2, integer=False)
        for gamma in (0.25, 1.0, 2.0):
            res = solve(model, rm.build_entropic(gamma))
            tree = _greedy_tree(model, res.policy)
            direct = O.direct_objective(model, tree, O.ObjectiveSpec("entropic", gamma=gamma))
            p, total = _path_totals(model, tree)
            expanded = float(p @ np.exp(-gamma * total))
            errs.append(max(abs(res.optimum - direct), abs(res.optimum - expanded)))
            certainty = -math.log(expanded) / gamma
            defs.append(abs(rm.entropic_risk(res.optimum, gamma) - certainty))
    ok = max(errs) <= 1e-9 and max(defs) <= 1e-9
    report(3, ok, f"90 solves, value error {max(errs):.2e}, certainty-equivalent error "
                  f"{max(defs):.2e}")
    assert max(errs) <= 1e-9
    assert max(defs) <= 1e-9


def test_criterion_4_cvar_formula(report):
    rng = np.random.default_rng(2024)
    err = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        p = rng.dirichlet(np.ones(n))
        v = rng.normal(0, 5, size=n)
        if rng.random() < 0.3:
            v = np.round(v)
        alpha = float(rng.uniform(0.01, 0.99))
        for form in ("cost", "payoff"):
            err = max(err, abs(rm.cvar_variational(p, v, alpha, form)
                               - O.cvar_sorted_tail(p, v, alpha, form)))
    example = rm.cvar_variational([0.5, 0.5], [0.0, 2.0], 0.4, "payoff")
    ok = err <= 1e-12 and abs(example) <= 1e-12
    report(4, ok, f"1000 distributions x 2 forms, max error {err:.2e}; "
                  f"payoff-form example {example:g}")
    assert err <= 1e-12
    assert abs(example) <= 1e-12


def _monotonicity_models():
    rng = np.random.default_rng(5)
    base = O.random_instance(rng, 2, 2, 1, 2, payoff_range=(-2, 1))
    pw = rm.AcceptanceSpec("pointwise_floor", 0.0)
    ef = rm.AcceptanceSpec("expectation_floor", 0.0)
    zs = [0.0, 1.0, 2.0, 3.0]
    wealth = range(-12, 22)
    levels = rm.tail_mass_levels(base)
    from gcr.newsvendor import CashOrderStep, WealthReserveStep
    from gcr.risk_frontier import integer_grid
    wgrid = integer_grid("wealth", -12, 21)
    return base, {
        "risk_neutral": rm.build_risk_neutral(),
        "entropic": rm.build_entropic(0.7),
        "nested_cvar": rm.build_nested(rm.OneStepRiskSpec("cvar", 0.4)),
        "nested_expectation": rm.build_nested(rm.OneStepRiskSpec("expectation")),
        "standard_cr": rm.build_standard_cr(ef, wealth, zs),
        "standard_cr_soft": rm.build_standard_cr(pw, wealth, zs, soft_penalty_beta=4),
        "consumption": rm.build_consumption(1.0, 2.0, range(0, 22), zs),
        "consumption_excess": rm.build_consumption_excess(
            rm.Utility("exp_gain"), 0.0, 0.25, 0.0, 0.05, [0.25, 0.5, 1.0], wealth, zs, 8.0),
        "expected_utility": rm.build_expected_utility(rm.Utility("square"), pw, zs),
        "worst_case": rm.build_worst_case(0.5, [0.0, 0.25, 0.5], pw, zs),
        "cvar_shortfall": rm.build_cvar_shortfall(0.3, levels, pw, zs),
        "quantile": rm.build_quantile(0.4, levels, pw, zs),
        "max_shortfall": rm.build_growth(pw, range(-7, 10), range(0, 7), range(0, 7)),
        "wealth_reserve": WealthReserveStep(2.0, wgrid, range(0, 16)),
        "cash_orders": CashOrderStep(1.0, 2.0, wgrid),
    }


def test_criterion_5_monotonicity(report):
    base, models = _monotonicity_models()
    bad = {}
    for name, step in models.items():
        base_risk = tail_risk_evaluate(step, step.info_space(base)).risk
        assert not math.isinf(base_risk), f"{name} infeasible on the base stream"
        rep = O.check_monotonicity(step, None, base, 200, seed=17, tol=1e-12)
        if rep.violations:
            bad[name] = rep.violations
    report(5, not bad, f"{len(models)} models x 200 trials, violations {bad or 0}")
    assert not bad


def test_criterion_6_time_consistency(report):
    rows = O.time_consistency_rows(50, seed=0, kinds=O.KINDS)
    failed = [r for r in rows if not r.passed]
    report(6, not failed, f"{len(rows)} greedy policies over {len(O.KINDS)} objectives, "
                          f"{int(sum(r.got for r in rows))} violations")
    assert not failed, failed[:5]


def test_criterion_7_reductions(report):
    acc = rm.AcceptanceSpec("expectation_floor", 0.0)
    e_wc = e_nested = 0.0
    for seed in range(50):
        model, zs = O.suite_instance(seed)
        wc = solve(model, rm.build_worst_case(0.0, [0.0, 0.5], acc, zs)).optimum
        es = solve(model, rm.build_expected_utility(rm.Utility("linear"), acc, zs)).optimum
        e_wc = max(e_wc, abs(wc - es))
        rng = np.random.default_rng([seed, 9])
        m2 = O.random_instance(rng, 2, 3, 2, 3, integer=False)
        nested = solve(m2, rm.build_nested(rm.OneStepRiskSpec("expectation"))).optimum
        e_nested = max(e_nested, abs(nested - solve(m2, rm.build_risk_neutral()).optimum))
    e_alpha = 0.0
    pw = rm.AcceptanceSpec("pointwise_floor", 0.0)
    for seed in range(20):
        rng = np.random.default_rng([seed, 13])
        T = int(rng.integers(0, 4))
        pay = rng.integers(-3, 2, size=T + 1).astype(float)
        m = MdpModel(np.zeros((T + 1, 1, 1, 1), dtype=int), pay[:, None, None, None],
                     (make_distribution([1.0]),) * (T + 1))
        zs = [0.0, 1.0, 2.0, 3.0]
        vals = [solve(m, rm.build_cvar_shortfall(a, rm.tail_mass_levels(m), pw, zs)).optimum
                for a in (0.05, 0.3, 0.5, 0.8, 0.95)]
        e_alpha = max(e_alpha, max(vals) - min(vals))
        assert vals[0] == pytest.approx(float(np.maximum(-pay, 0).sum()), abs=1e-12)
    ok = max(e_wc, e_nested, e_alpha) <= 1e-12
    report(7, ok, f"worst-case K=0 vs expected shortfall {e_wc:.1e}, nested expectation vs "
                  f"risk-neutral {e_nested:.1e}, CVaR spread over alpha {e_alpha:.1e}")
    assert e_wc <= 1e-12 and e_nested <= 1e-12 and e_alpha <= 1e-12


def test_criterion_8_newsvendor(report):
    cfg = parse_config(bundled_config("newsvendor.ini"))
    params = to_newsvendor_params(cfg)
    assert (params.s_max, params.a_max, params.xi_max, params.horizon) == (9, 9, 9, 10)
    assert (params.price, params.cost, params.holding, params.beta, params.alpha) == \
        (3.0, 2.0, 1.0, 4.0, 0.4)
    assert (params.w_min, params.w_max, params.z_max) == (-540, 539, 1079)
    zetas = [10.0, 15.0, 20.0, 25.0]
    assert cfg["run"]["zeta_list"] == zetas and cfg["run"]["n_trajectories"] == 50
    clock = time.perf_counter()
    rep = run_benchmark(params, zetas, 50, cfg["run"]["seed"])
    secs = time.perf_counter() - clock
    wr = [rep.cell("WR", z).summary for z in zetas]
    co = [rep.cell("CO", z).summary for z in zetas]
    a = all(abs(s["mean"] - z) <= 0.1 * z for s, z in zip(wr, zetas))
    inv_wr = nondecreasing_inversions([s["sigma"] for s in wr])
    inv_co = nondecreasing_inversions([s["sigma"] for s in co])
    b = inv_wr <= 1 and inv_co <= 1
    c = nondecreasing_inversions([s["mean"] for s in co]) == 0
    d = secs <= 600
    detail = (f"(a) WR means {[round(s['mean'], 2) for s in wr]} "
              f"(b) sigma inversions WR {inv_wr} CO {inv_co} "
              f"(c) CO means {[round(s['mean'], 2) for s in co]} (d) {secs:.0f} s")
    report(8, a and b and c and d, detail)
    assert a, wr
    assert b, (wr, co)
    assert c, co
    assert d


SMALL = """
[model]
kind = newsvendor
s_max = 4
a_max = 4
xi_max = 4
horizon = 3
demand_mean = 2
demand_var = 1
[frontier]
kind = SC
zeta = 3
[grids]
w_min = -80
w_max = 79
z_max = 40
[run]
n_trajectories = 6
zeta_list = 1, 3
"""

RANDOM = """
[model]
kind = random
horizon = 2
states = 3
[frontier]
kind = quantile_of_shortfall
[run]
n_trajectories = 6
verify_instances = 4
"""


def test_criterion_9_determinism(report, tmp_path):
    small = tmp_path / "small.ini"
    small.write_text(SMALL)
    rand = tmp_path / "random.ini"
    rand.write_text(RANDOM)
    runs = [("solve", small), ("simulate", small), ("bench", small), ("solve", rand),
            ("simulate", rand), ("verify", rand)]
    mismatched, files = [], 0
    for k, (cmd, cfg) in enumerate(runs):
        outs = []
        for rep_i in range(2):
            d = tmp_path / f"{k}_{rep_i}"
            assert main([cmd, "-c", str(cfg), "-o", str(d), "--seed", "5"]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))})
        files += len(outs[0])
        if not outs[0] or outs[0] != outs[1]:
            mismatched.append(cmd)
    report(9, not mismatched, f"{len(runs)} command runs, {files} CSV files compared, "
                              f"mismatches {mismatched or 0}")
    assert not mismatched
