import numpy as np
import pytest

from gcr import _kernels_py, kernels
from gcr.lattice import solve_lattice
from gcr.newsvendor import NewsvendorParams, make_policy_model

compiled = pytest.importorskip("gcr._kernels")

PARAMS = NewsvendorParams(s_max=4, a_max=4, xi_max=4, horizon=2, demand_mean=2.0,
                          demand_var=1.0, w_min=-60, w_max=59, z_max=60, zeta=5.0)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.fixture
def use_backend(monkeypatch):
    def use(mod):
        monkeypatch.setattr(kernels, "accumulate_next", mod.accumulate_next)
        monkeypatch.setattr(kernels, "sweep", mod.sweep)
    return use


@pytest.mark.parametrize("name", ["SC", "WR", "CO"])
def test_backends_bit_identical(name, use_backend):
    model, step, space = make_policy_model(name, PARAMS)
    out = []
    for mod in (_kernels_py, compiled):
        use_backend(mod)
        out.append(solve_lattice(model, step, space))
    a, b = out
    assert a.optimum == b.optimum
    for t in range(model.horizon + 2):
        assert a.values.row(t) == b.values.row(t)
    for t in range(model.horizon + 1):
        for y in space.grids[t]:
            assert a.policy.get(t, y) == b.policy.get(t, y)


def test_sweep_kernels_agree_on_random_input():
    rng = np.random.default_rng(0)
    S, A, W = 2, 3, 7
    U = rng.normal(size=(S, A, W))
    U[0, 1, 2] = np.inf
    need = rng.integers(-1, 4, size=(S, A, W)).astype(float)
    allowed = (rng.random((S, A, W)) > 0.2).astype(np.uint8)
    zs = np.arange(5, dtype=float)
    for kappa, zcost in [(0, 1), (1, 0)]:
        r1 = _kernels_py.sweep(U, need, allowed, zs, kappa, zcost, 1e-9)
        r2 = compiled.sweep(U, need, allowed, zs, kappa, zcost, 1e-9)
        for x, y in zip(r1, r2):
            assert np.array_equal(np.asarray(x), np.asarray(y))


def test_pure_python_override():
    import os
    import subprocess
    import sys
    env = dict(os.environ, GCR_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from gcr import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
