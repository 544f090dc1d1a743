import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcr.config import ConfigError, default_config, emit_config, parse_config, to_newsvendor_params
from gcr.cli import bundled_config

FULL_SCALE = """
[model]
kind = newsvendor
s_max = 9
a_max = 9
xi_max = 9
horizon = 10
price = 3
cost = 2
holding = 1
demand_mean = 4
demand_var = 1.2
[frontier]
kind = WR
beta = 4
alpha = 0.4
zeta = 15
[grids]
w_min = -540
w_max = 539
z_max = 1079
[run]
n_trajectories = 50
"""


def test_full_scale_parameters_accepted():
    cfg = parse_config(FULL_SCALE)
    p = to_newsvendor_params(cfg)
    assert (p.s_max, p.horizon, p.price, p.z_max) == (9, 10, 3.0, 1079)
    assert cfg["run"]["zeta_list"] == [10.0, 15.0, 20.0, 25.0]


def test_price_below_cost_rejected():
    with pytest.raises(ConfigError, match="p > c > h"):
        parse_config("[model]\nkind = newsvendor\nprice = 1\ncost = 2\n")


def test_unknown_key_names_section_and_line():
    with pytest.raises(ConfigError, match=r"model\.colour \(line 3\)"):
        parse_config("[model]\nkind = newsvendor\ncolour = red\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[extras]\nx = 1\n")


def test_bad_values_rejected():
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("[model]\nkind = newsvendor\nhorizon = ten\n")
    with pytest.raises(ConfigError, match="not one of"):
        parse_config("[model]\nkind = random\n[frontier]\nkind = variance\n")
    with pytest.raises(ConfigError, match="alpha"):
        parse_config("[model]\nkind = random\n[frontier]\nalpha = 1.5\n")


@pytest.mark.parametrize("name", ["newsvendor.ini", "tiny_suite.ini"])
def test_bundled_configs_round_trip(name):
    cfg = parse_config(bundled_config(name))
    again = parse_config(emit_config(cfg))
    assert again.values == cfg.values
    assert emit_config(again) == emit_config(cfg)


def test_digest_ignores_run_local_keys():
    a = default_config("newsvendor")
    b = parse_config(emit_config(a).replace("output_dir = gcr_out", "output_dir = elsewhere")
                     .replace("workers = 0", "workers = 3"))
    assert a.digest() == b.digest()
    c = parse_config(emit_config(a).replace("seed = 0", "seed = 1"))
    assert a.digest() != c.digest()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10), st.floats(0, 50, allow_nan=False), st.integers(1, 500),
       st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=5))
def test_round_trip_property(horizon, zeta, n, zetas):
    cfg = default_config("newsvendor")
    cfg["model"]["horizon"] = horizon
    cfg["frontier"]["zeta"] = zeta
    cfg["run"]["n_trajectories"] = n
    cfg["run"]["zeta_list"] = zetas
    again = parse_config(emit_config(cfg))
    assert again.values == cfg.values
