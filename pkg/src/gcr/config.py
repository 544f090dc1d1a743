"""INI run configuration: schema, validation, defaults and round-trip emission."""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field
from typing import Any

SECTIONS = ("model", "frontier", "grids", "run")
NEWSVENDOR_POLICIES = ("SC", "WR", "CO", "RN", "N")
ORACLE_KINDS = ("neg_expected_total", "entropic", "nested", "expected_utility_of_shortfall",
                "cvar_of_shortfall", "quantile_of_shortfall", "worst_case_shortfall",
                "max_shortfall")


LOCAL_KEYS = {("run", "output_dir"), ("run", "workers"), ("run", "plots")}


class ConfigError(ValueError):
    pass


# key -> (type, default); "choice:a|b" restricts strings
_COMMON_RUN = {
    "seed": ("int", 0),
    "n_trajectories": ("int", 50),
    "output_dir": ("str", "gcr_out"),
    "plots": ("bool", False),
    "workers": ("int", 0),
}

SCHEMA: dict[str, dict[str, dict[str, tuple[str, Any]]]] = {
    "newsvendor": {
        "model": {
            "kind": ("choice:newsvendor|random", "newsvendor"),
            "s_max": ("int", 9), "a_max": ("int", 9), "xi_max": ("int", 9),
            "horizon": ("int", 10),
            "price": ("float", 3.0), "cost": ("float", 2.0), "holding": ("float", 1.0),
            "demand_mean": ("float", 4.0), "demand_var": ("float", 1.2),
            "pmf_mode": ("choice:density|cdf_bins", "density"),
            "demand_weights": ("floats", None),
            "initial_wealth": ("float", 0.0),
        },
        "frontier": {
            "kind": ("choice:" + "|".join(NEWSVENDOR_POLICIES), "WR"),
            "zeta": ("float", 15.0), "beta": ("float", 4.0), "alpha": ("float", 0.4),
        },
        "grids": {
            "w_min": ("int", -540), "w_max": ("int", 539), "z_max": ("int", 1079),
            "fast": ("bool", True),
        },
        "run": dict(_COMMON_RUN, zeta_list=("floats", [10.0, 15.0, 20.0, 25.0])),
    },
    "random": {
        "model": {
            "kind": ("choice:newsvendor|random", "random"),
            "horizon": ("int", 1), "states": ("int", 2), "actions": ("int", 2),
            "outcomes": ("int", 2), "instance_seed": ("int", 0),
            "payoff_min": ("int", -3), "payoff_max": ("int", 3),
        },
        "frontier": {
            "kind": ("choice:" + "|".join(ORACLE_KINDS), "cvar_of_shortfall"),
            "gamma": ("float", 0.5), "alpha": ("float", 0.3), "tau": ("float", 0.4),
            "budget": ("float", 0.5), "nested_measure": ("choice:expectation|cvar", "cvar"),
            "utility": ("choice:linear|square|power|exp_loss|exp_gain", "square"),
            "utility_param": ("float", 1.0),
            "acceptance": ("choice:none|expectation_floor|pointwise_floor|cvar_floor",
                           "expectation_floor"),
            "acceptance_floor": ("float", 0.0), "acceptance_alpha": ("float", 0.5),
            "initial_wealth": ("float", 0.0),
        },
        "grids": {
            "z_grid": ("floats", [0.0, 1.0, 2.0]), "budget_step": ("float", 0.25),
        },
        "run": dict(_COMMON_RUN, verify_instances=("int", 50), verify_max_horizon=("int", 2)),
    },
}


@dataclass
class Config:
    values: dict[str, dict[str, Any]] = field(default_factory=dict)

    @property
    def model_kind(self) -> str:
        return self.values["model"]["kind"]

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def digest(self) -> str:
        """Hash of every setting that can change results (output location and worker
        count excluded), so artifacts of equal runs are byte-identical."""
        vals = {sec: {k: v for k, v in keys.items() if (sec, k) not in LOCAL_KEYS}
                for sec, keys in self.values.items()}
        return hashlib.sha256(emit_config(Config(vals), strict=False).encode()).hexdigest()


def _fmt(kind: str, v) -> str:
    if v is None:
        return ""
    if kind == "bool":
        return "true" if v else "false"
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in v)
    if kind == "float":
        return repr(float(v))
    return str(v)


def _coerce(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            if not raw:
                return None
            return [float(x) for x in raw.replace(",", " ").split()]
        if kind.startswith("choice:"):
            opts = kind[7:].split("|")
            if raw not in opts:
                raise ConfigError(f"{where}: {raw!r} is not one of {', '.join(opts)}")
            return raw
        return raw
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind}") from None


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = s.replace(":", "=", 1).split("=", 1)[0].strip().lower()
            lines.setdefault((section, key), n)
    return lines


def parse_config(text: str) -> Config:
    """Validate an INI document; every key must be known for the chosen model kind."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    lines = _key_lines(text)
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
    kind = cp.get("model", "kind", fallback="newsvendor").strip()
    if kind not in SCHEMA:
        raise ConfigError(f"model.kind (line {lines.get(('model', 'kind'), '?')}): "
                          f"{kind!r} is not one of newsvendor, random")
    schema = SCHEMA[kind]
    values = {sec: {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in keys.items()}
              for sec, keys in schema.items()}
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            where = f"{sec}.{key} (line {lines.get((sec, key), '?')})"
            if key not in schema[sec]:
                raise ConfigError(f"{where}: unknown key for model kind {kind!r}")
            values[sec][key] = _coerce(schema[sec][key][0], raw, where)
    cfg = Config(values)
    _validate(cfg, lines)
    return cfg


def _validate(cfg: Config, lines) -> None:
    def fail(sec, key, msg):
        raise ConfigError(f"{sec}.{key} (line {lines.get((sec, key), '?')}): {msg}")

    run = cfg["run"]
    if run["n_trajectories"] < 1:
        fail("run", "n_trajectories", "must be at least 1")
    if run["workers"] < 0:
        fail("run", "workers", "must be nonnegative (0 = automatic)")
    if cfg.model_kind == "newsvendor":
        try:
            to_newsvendor_params(cfg)
        except ValueError as exc:
            raise ConfigError(f"[model]/[frontier]/[grids]: {exc}") from None
        if not run["zeta_list"]:
            fail("run", "zeta_list", "needs at least one value")
        return
    m = cfg["model"]
    for key in ("states", "actions", "outcomes"):
        if m[key] < 1:
            fail("model", key, "must be at least 1")
    if m["horizon"] < 0:
        fail("model", "horizon", "must be nonnegative")
    if m["payoff_min"] > m["payoff_max"]:
        fail("model", "payoff_max", "must not be below payoff_min")
    if not cfg["grids"]["z_grid"]:
        fail("grids", "z_grid", "needs at least one value")
    f = cfg["frontier"]
    for key in ("alpha", "tau"):
        if not 0 < f[key] < 1:
            fail("frontier", key, "must lie in (0, 1)")
    if f["gamma"] <= 0:
        fail("frontier", "gamma", "must be positive")


def to_newsvendor_params(cfg: Config):
    from .newsvendor import NewsvendorParams

    m, f, g = cfg["model"], cfg["frontier"], cfg["grids"]
    w = m.get("demand_weights")
    return NewsvendorParams(
        s_max=m["s_max"], a_max=m["a_max"], xi_max=m["xi_max"], horizon=m["horizon"],
        price=m["price"], cost=m["cost"], holding=m["holding"],
        demand_mean=m["demand_mean"], demand_var=m["demand_var"], pmf_mode=m["pmf_mode"],
        demand_weights=tuple(w) if w else None,
        w_min=g["w_min"], w_max=g["w_max"], z_max=g["z_max"],
        beta=f["beta"], zeta=f["zeta"], alpha=f["alpha"], initial_wealth=m["initial_wealth"])


def emit_config(cfg: Config, strict: bool = True) -> str:
    """Canonical INI text with every default materialised; parse(emit(c)) == c."""
    schema = SCHEMA[cfg.model_kind]
    out = io.StringIO()
    for sec in SECTIONS:
        out.write(f"[{sec}]\n")
        for key, (kind, _) in schema[sec].items():
            if not strict and key not in cfg.values[sec]:
                continue
            out.write(f"{key} = {_fmt(kind, cfg.values[sec][key])}\n")
        out.write("\n")
    return out.getvalue()


def default_config(kind: str = "newsvendor") -> Config:
    return parse_config(f"[model]\nkind = {kind}\n")
