"""Compiled vs numpy wealth-lattice kernels on the full-scale newsvendor solves.

    python benchmarks/bench_kernels.py [--policies SC WR CO] [--repeat 1]

Prints solve times per backend and checks that both backends give identical tables.
"""
import argparse
import time

import numpy as np

from gcr import _kernels_py, kernels
from gcr.lattice import solve_lattice
from gcr.newsvendor import NewsvendorParams, make_policy_model


def _use(mod):
    kernels.accumulate_next = mod.accumulate_next
    kernels.sweep = mod.sweep
    kernels.BACKEND = mod.__name__.rsplit(".", 1)[-1]


def run(policies, repeat):
    try:
        from gcr import _kernels as compiled
    except ImportError:
        compiled = None
    backends = [("numpy", _kernels_py)] + ([("cython", compiled)] if compiled else [])
    params = NewsvendorParams()
    rows = []
    for name in policies:
        model, step, space = make_policy_model(name, params)
        results = {}
        for label, mod in backends:
            _use(mod)
            best = float("inf")
            for _ in range(repeat):
                t0 = time.perf_counter()
                res = solve_lattice(model, step, space)
                best = min(best, time.perf_counter() - t0)
            results[label] = (best, res)
        ref = results["numpy"][1]
        same = all(r.values.rows == ref.values.rows and r.policy.rows == ref.policy.rows
                   for _, r in results.values())
        line = {"policy": name, "identical": same}
        line.update({f"{k}_s": round(v[0], 3) for k, v in results.items()})
        if "cython" in results:
            line["speedup"] = round(results["numpy"][0] / results["cython"][0], 1)
        rows.append(line)
        print(line)
    return rows


def kernels_only(repeat):
    """Time one backward stage (accumulate + sweep) on full-scale SC-shaped arrays."""
    try:
        from gcr import _kernels as compiled
    except ImportError:
        print("compiled kernels not built")
        return
    model, step, _ = make_policy_model("SC", NewsvendorParams())
    terms = step.lattice_terms(model)
    rng = np.random.default_rng(0)
    V = np.ascontiguousarray(rng.uniform(0, 100, (model.num_states, terms.wealth.size)))
    args = (V, np.ascontiguousarray(model.next_state[1]), np.zeros_like(model.next_state[1]),
            np.ascontiguousarray(model.payoff[1]), np.ascontiguousarray(model.probs[1]), 0)
    need = np.ascontiguousarray(terms.need(1))
    allowed = np.ones(need.shape, dtype=np.uint8)
    zs = terms.zs.astype(float)
    for label, mod in (("numpy", _kernels_py), ("cython", compiled)):
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            U = mod.accumulate_next(*args)
            mod.sweep(U, need, allowed, zs, 1, 0, 1e-9)
            best = min(best, time.perf_counter() - t0)
        print({"stage": "SC", "backend": label, "seconds": round(best, 3)})


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--policies", nargs="+", default=["SC", "WR", "CO"])
    ap.add_argument("--repeat", type=int, default=1)
    ap.add_argument("--kernels-only", action="store_true")
    args = ap.parse_args()
    if args.kernels_only:
        kernels_only(args.repeat)
    else:
        run(args.policies, args.repeat)
