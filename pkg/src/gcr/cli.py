"""Command line: solve, simulate, verify, bench, export.

Exit codes: 0 ok, 1 verification failure, 2 configuration error, 3 infeasible top-level solve.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import oracle as O
from . import risk_models as rm
from .config import Config, ConfigError, emit_config, parse_config, to_newsvendor_params
from .dp_solver import monte_carlo, solve
from .newsvendor import GridError

log = logging.getLogger("gcr")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3
COMMANDS = ("solve", "simulate", "verify", "bench", "export")


# ------------------------------------------------------------------ artifacts


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def manifest(cfg: Config, command: str) -> str:
    return f"# gcr {__version__} command={command} config_sha256={cfg.digest()}"


def write_csv(path: Path, header, rows, cfg: Config, command: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(manifest(cfg, command) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    """(manifest line, header, rows) of an artifact written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        rows = list(csv.reader(fh))
    return first, rows[0], rows[1:]


# ------------------------------------------------------------------ model wiring


def _acceptance(f: dict) -> rm.AcceptanceSpec:
    return rm.AcceptanceSpec(f["acceptance"], f["acceptance_floor"], f["acceptance_alpha"])


def objective_spec(cfg: Config) -> O.ObjectiveSpec:
    f, g = cfg["frontier"], cfg["grids"]
    nested = rm.OneStepRiskSpec(f["nested_measure"], f["alpha"] if f["nested_measure"] == "cvar"
                                else 0.5)
    return O.ObjectiveSpec(f["kind"], gamma=f["gamma"], specs=nested,
                           utility=rm.Utility(f["utility"], f["utility_param"]), alpha=f["alpha"],
                           tau=f["tau"], budget=f["budget"], budget_step=g["budget_step"],
                           initial_wealth=f["initial_wealth"])


def random_model(cfg: Config):
    m = cfg["model"]
    return O.random_instance(np.random.default_rng(m["instance_seed"]), m["horizon"],
                             m["states"], m["actions"], m["outcomes"],
                             (m["payoff_min"], m["payoff_max"]))


def build(cfg: Config):
    """(model, step, space, result) for the configured model and frontier."""
    if cfg.model_kind == "newsvendor":
        from .newsvendor import solve_policy

        params = to_newsvendor_params(cfg)
        return solve_policy(cfg["frontier"]["kind"], params, cfg["grids"]["fast"])
    model = random_model(cfg)
    zs = cfg["grids"]["z_grid"]
    spec = objective_spec(cfg)
    if spec.kind == "worst_case_shortfall" and not float(spec.budget / spec.budget_step).is_integer():
        raise ConfigError("frontier.budget must be a multiple of grids.budget_step")
    step = O.step_for_spec(spec, model, zs, _acceptance(cfg["frontier"]))
    space = step.info_space(model)
    return model, step, space, solve(model, step, space)


def _coord_header(space) -> list[str]:
    return ["t", "s", *space.coord_names]


# ------------------------------------------------------------------ commands


def cmd_solve(cfg: Config, out: Path) -> int:
    model, step, space, res = build(cfg)
    head = _coord_header(space)
    vrows, prows = [], []
    for t, row in enumerate(res.values.rows):
        for y in sorted(row):
            vrows.append([t, *y, row[y]])
    for t, row in enumerate(res.policy.rows):
        for y in sorted(row):
            d = row[y]
            prows.append([t, *y] + (["", "", ""] if d is None else [d.action, d.z, d.aux]))
    write_csv(out / "values.csv", head + ["value"], vrows, cfg, "solve")
    write_csv(out / "policy.csv", head + ["action", "z", "aux"], prows, cfg, "solve")
    print(f"optimum {fmt(res.optimum)}")
    if not res.feasible:
        print(f"infeasible: first all-infeasible period {res.diagnostics.get('infeasible_from')}",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _policy_label(cfg: Config) -> str:
    return cfg["frontier"]["kind"]


def _zeta(cfg: Config):
    return cfg["frontier"].get("zeta", "")


def cmd_simulate(cfg: Config, out: Path) -> int:
    model, step, space, res = build(cfg)
    if not res.feasible:
        print("infeasible top-level solve; nothing to simulate", file=sys.stderr)
        return EXIT_INFEASIBLE
    run = cfg["run"]
    mc = monte_carlo(model, res.policy, space, run["n_trajectories"], run["seed"])
    rows = []
    for k, tr in enumerate(mc.trajectories):
        for t, ((a, xi), r) in enumerate(zip(tr.history.steps, tr.payoffs)):
            rows.append([k, t, tr.states[t], a, xi, r, mc.wealth[k, t + 1]])
    write_csv(out / "trajectories.csv", ["run_id", "t", "s", "a", "xi", "payoff", "wealth"],
              rows, cfg, "simulate")
    s = mc.summary
    write_csv(out / "summary.csv", ["policy", "zeta", "mean", "sigma", "min", "max"],
              [[_policy_label(cfg), _zeta(cfg), s["mean"], s["sigma"], s["min"], s["max"]]],
              cfg, "simulate")
    print(f"mean {fmt(s['mean'])} sigma {fmt(s['sigma'])}")
    return EXIT_OK


def _verify_rows(cfg: Config) -> list[O.CheckRow]:
    run = cfg["run"]
    if cfg.model_kind == "random":
        n, seed, th = run["verify_instances"], run["seed"], run["verify_max_horizon"]
        rows = O.oracle_equivalence(n, seed, O.default_specs(), max_horizon=th)
        rows += O.classical_equivalence(2 * n, seed)
        rows += O.time_consistency_rows(max(1, n // 5), seed, max_horizon=th)
        return rows
    from .dp_solver import solve as generic
    from .lattice import solve_lattice
    from .newsvendor import make_policy_model

    params = to_newsvendor_params(cfg)
    rows = []
    model, step, space = make_policy_model("RN", params)
    V, _ = O.classical_backward_induction(model)
    rows.append(O.CheckRow("newsvendor/classical_dp", 0, -V[0, 0], solve(model, step).optimum,
                           1e-12))
    small = params.replace(s_max=2, a_max=2, xi_max=2, horizon=2, w_min=-25, w_max=24, z_max=12,
                           demand_weights=None)
    for i, name in enumerate(("SC", "WR", "CO")):
        m, st, sp = make_policy_model(name, small)
        a, b = solve_lattice(m, st, sp), generic(m, st, sp)
        same = all(a.values.rows[t] == b.values.rows[t] for t in range(len(b.values.rows))) and \
            all(a.policy.rows[t] == b.policy.rows[t] for t in range(len(b.policy.rows)))
        rows.append(O.CheckRow(f"newsvendor/lattice_vs_generic/{name}", i, 0.0,
                               0.0 if same else 1.0, 0.0))
    return rows


def cmd_verify(cfg: Config, out: Path) -> int:
    rows = _verify_rows(cfg)
    write_csv(out / "verify.csv", ["check", "instance", "expected", "got", "abs_error", "tol",
                                   "pass"],
              [[r.check, r.instance, r.expected, r.got, r.error, r.tol, r.passed] for r in rows],
              cfg, "verify")
    failed = [r for r in rows if not r.passed]
    groups: dict[str, list[bool]] = {}
    for r in rows:
        groups.setdefault(r.check, []).append(r.passed)
    for name, oks in groups.items():
        print(f"{'PASS' if all(oks) else 'FAIL'} {name} ({sum(oks)}/{len(oks)})")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_bench(cfg: Config, out: Path) -> int:
    from .newsvendor import run_benchmark

    if cfg.model_kind != "newsvendor":
        raise ConfigError("bench needs model kind newsvendor")
    run = cfg["run"]
    params = to_newsvendor_params(cfg)
    rep = run_benchmark(params, run["zeta_list"], run["n_trajectories"], run["seed"],
                        workers=run["workers"] or None, fast=cfg["grids"]["fast"])
    keys = sorted(rep.cells, key=lambda k: (k[0], k[1]))
    summ, optima, cum, traj = [], [], [], []
    for key in keys:
        c = rep.cells[key]
        optima.append([c.policy, c.zeta, c.optimum, c.error or "ok"])
        if c.cumulative is None:
            continue
        s = c.summary
        summ.append([c.policy, c.zeta, s["mean"], s["sigma"], s["min"], s["max"]])
        for k in range(len(c.cumulative)):
            cum.append([c.policy, c.zeta, k, c.cumulative[k], c.wealth[k, -1]])
            for t in range(c.payoffs.shape[1]):
                traj.append([c.policy, c.zeta, k, t, c.states[k, t], c.actions[k, t],
                             c.demand[k, t], c.payoffs[k, t], c.disbursements[k, t],
                             c.wealth[k, t + 1]])
    write_csv(out / "summary.csv", ["policy", "zeta", "mean", "sigma", "min", "max"], summ,
              cfg, "bench")
    write_csv(out / "optima.csv", ["policy", "zeta", "optimum", "status"], optima, cfg, "bench")
    write_csv(out / "cumulative.csv", ["policy", "zeta", "run_id", "cumulative",
                                       "terminal_wealth"], cum, cfg, "bench")
    write_csv(out / "trajectories.csv", ["policy", "zeta", "run_id", "t", "s", "a", "xi", "payoff",
                                         "z", "wealth"], traj, cfg, "bench")
    with open(out / "timings.txt", "w") as fh:
        for k, v in rep.timings.items():
            fh.write(f"{k}\t{v:.3f}\n")
    if run["plots"]:
        from .plots import bench_plots

        bench_plots(rep, out)
    for key in keys:
        c = rep.cells[key]
        s = c.summary
        tail = c.error if s is None else f"mean {s['mean']:.3f} sigma {s['sigma']:.3f}"
        print(f"{c.policy:>2} zeta={c.zeta:g}: {tail}")
    return EXIT_OK


def cmd_export(cfg: Config, out: Path | None) -> int:
    text = emit_config(cfg)
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(text)
    return EXIT_OK


# ------------------------------------------------------------------ entry point


def bundled_config(name: str) -> str:
    return resources.files("gcr").joinpath("data", name).read_text()


def load_config(path: str | None, command: str) -> Config:
    if path is None:
        text = bundled_config("tiny_suite.ini" if command == "verify" else "newsvendor.ini")
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def _override(cfg: Config, args) -> Config:
    run = cfg["run"]
    if args.seed is not None:
        run["seed"] = args.seed
    if args.n is not None:
        if args.n < 1:
            raise ConfigError("--n must be at least 1")
        run["n_trajectories"] = args.n
    if args.plots:
        run["plots"] = True
    if args.workers is not None:
        run["workers"] = args.workers
    if args.out is not None:
        run["output_dir"] = args.out
    # re-validate through the canonical text so overrides obey the schema
    return parse_config(emit_config(cfg))


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gcr {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("-c", "--config", help="INI config (default: bundled config)")
    p.add_argument("-o", "--out", help="output directory (overrides run.output_dir)")
    p.add_argument("--seed", type=int)
    p.add_argument("-n", "--n", type=int, help="trajectories per policy")
    p.add_argument("--plots", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _override(load_config(args.config, args.command), args)
        if args.command == "export":
            return cmd_export(cfg, Path(args.out) if args.out else None)
        out = Path(cfg["run"]["output_dir"])
        handler = {"solve": cmd_solve, "simulate": cmd_simulate, "verify": cmd_verify,
                   "bench": cmd_bench}[args.command]
        return handler(cfg, out)
    except (ConfigError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
