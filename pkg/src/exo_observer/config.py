"""Run configuration: JSON in, validated dataclass out."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

MODES = ("normalized", "paper")


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the offending field or line."""

    def __init__(self, where: str, msg: str):
        self.where = where
        super().__init__(f"{where}: {msg}")


@dataclass(frozen=True)
class GainSet:
    gamma_kappa: float
    gamma_xdelta0: float
    gamma_TI: float


@dataclass(frozen=True)
class SimConfig:
    theta: tuple = (1.0, 1.0, -1.0)
    x0: tuple = (-1.0, 0.0, 2.0)
    A_delta: tuple = ((0.0, 1.0), (-10.0, 0.0))
    h_delta: tuple = (1.0, 0.0)
    x_delta0: tuple = (500.0, 100.0)
    K: tuple = (3.0, 3.0, 1.0)
    G: tuple = ((-4.0, 1.0), (-2.0, 0.0))
    l: tuple = (1.0, 2.0)
    k1: float = 25.0
    sigma: float = 1.0
    k_gain: float = 1e19
    t_eps: float = 25.0
    ref_offset: float = 100.0
    ref_amplitude: float = 2.5
    ref_omega: float = 10.0
    ref_decay: float = 1.0
    control_gain: float = 75.0
    gains: GainSet = GainSet(50.0, 50.0, 50.0)
    paper_gains: GainSet = GainSet(1e-74, 5e-82, 1e-23)
    norm_floor: float = 1e-12
    kappa0: tuple = (0.0,) * 9
    T_I0: tuple = ((0.0,) * 3,) * 3
    x_delta0_hat0: tuple = (0.0, 0.0)
    mode: str = "normalized"
    truth: bool = True
    t0: float = 0.0
    t_end: float = 300.0
    h: float = 1e-4
    sample_dt: float = 0.01
    fe_threshold: float = 1e-9
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        validate(self)

    @property
    def active_gains(self) -> GainSet:
        return self.paper_gains if self.mode == "paper" else self.gains

    def arr(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def with_overrides(self, **kw) -> "SimConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    # -- JSON -------------------------------------------------------------------

    def to_json_dict(self) -> dict:
        d = asdict(self)
        return {
            "mode": d["mode"],
            "plant": {"theta": d["theta"], "x0": d["x0"]},
            "exosystem": {"A_delta": d["A_delta"], "h_delta": d["h_delta"], "x_delta0": d["x_delta0"]},
            "filters": {"K": d["K"], "G": d["G"], "l": d["l"], "k1": d["k1"], "sigma": d["sigma"],
                        "k": d["k_gain"], "t_eps": d["t_eps"]},
            "reference": {"offset": d["ref_offset"], "amplitude": d["ref_amplitude"],
                          "omega": d["ref_omega"], "decay": d["ref_decay"]},
            "controller": {"gain": d["control_gain"]},
            "gains": {"normalized": d["gains"], "paper": d["paper_gains"]},
            "normalization": {"floor": d["norm_floor"]},
            "initial_estimates": {"kappa": d["kappa0"], "T_I": d["T_I0"], "x_delta0": d["x_delta0_hat0"]},
            "run": {"t0": d["t0"], "t_end": d["t_end"], "h": d["h"], "sample_dt": d["sample_dt"],
                    "truth": d["truth"], "fe_threshold": d["fe_threshold"], "out_dir": d["out_dir"],
                    "seed": d["seed"]},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=False) + "\n"


# JSON path -> (dataclass field, expected kind)
_SCHEMA: dict[tuple[str, ...], tuple[str, str]] = {
    ("mode",): ("mode", "str"),
    ("plant", "theta"): ("theta", "vec"),
    ("plant", "x0"): ("x0", "vec"),
    ("exosystem", "A_delta"): ("A_delta", "mat"),
    ("exosystem", "h_delta"): ("h_delta", "vec"),
    ("exosystem", "x_delta0"): ("x_delta0", "vec"),
    ("filters", "K"): ("K", "vec"),
    ("filters", "G"): ("G", "mat"),
    ("filters", "l"): ("l", "vec"),
    ("filters", "k1"): ("k1", "num"),
    ("filters", "sigma"): ("sigma", "num"),
    ("filters", "k"): ("k_gain", "num"),
    ("filters", "t_eps"): ("t_eps", "num"),
    ("reference", "offset"): ("ref_offset", "num"),
    ("reference", "amplitude"): ("ref_amplitude", "num"),
    ("reference", "omega"): ("ref_omega", "num"),
    ("reference", "decay"): ("ref_decay", "num"),
    ("controller", "gain"): ("control_gain", "num"),
    ("gains", "normalized"): ("gains", "gains"),
    ("gains", "paper"): ("paper_gains", "gains"),
    ("normalization", "floor"): ("norm_floor", "num"),
    ("initial_estimates", "kappa"): ("kappa0", "vec"),
    ("initial_estimates", "T_I"): ("T_I0", "mat"),
    ("initial_estimates", "x_delta0"): ("x_delta0_hat0", "vec"),
    ("run", "t0"): ("t0", "num"),
    ("run", "t_end"): ("t_end", "num"),
    ("run", "h"): ("h", "num"),
    ("run", "sample_dt"): ("sample_dt", "num"),
    ("run", "truth"): ("truth", "bool"),
    ("run", "fe_threshold"): ("fe_threshold", "num"),
    ("run", "out_dir"): ("out_dir", "str"),
    ("run", "seed"): ("seed", "int"),
}
_SECTIONS = {path[0] for path in _SCHEMA if len(path) == 2}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _coerce(where: str, kind: str, v):
    if kind == "num":
        if not _is_num(v):
            raise ConfigError(where, f"expected a finite number, got {v!r}")
        return float(v)
    if kind == "int":
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(where, f"expected an integer, got {v!r}")
        return v
    if kind == "bool":
        if not isinstance(v, bool):
            raise ConfigError(where, f"expected true/false, got {v!r}")
        return v
    if kind == "str":
        if not isinstance(v, str):
            raise ConfigError(where, f"expected a string, got {v!r}")
        return v
    if kind == "vec":
        if not isinstance(v, list) or not v or not all(_is_num(e) for e in v):
            raise ConfigError(where, "expected a non-empty list of finite numbers")
        return tuple(float(e) for e in v)
    if kind == "mat":
        if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
            raise ConfigError(where, "expected a list of rows")
        rows = [_coerce(f"{where}[{i}]", "vec", r) for i, r in enumerate(v)]
        if len({len(r) for r in rows}) != 1:
            raise ConfigError(where, "rows have different lengths")
        return tuple(rows)
    if kind == "gains":
        if not isinstance(v, dict):
            raise ConfigError(where, "expected an object with gamma_kappa, gamma_xdelta0, gamma_TI")
        names = ("gamma_kappa", "gamma_xdelta0", "gamma_TI")
        extra = set(v) - set(names)
        if extra:
            raise ConfigError(f"{where}.{sorted(extra)[0]}", "unknown field")
        missing = [k for k in names if k not in v]
        if missing:
            raise ConfigError(f"{where}.{missing[0]}", "missing field")
        return GainSet(*(_coerce(f"{where}.{k}", "num", v[k]) for k in names))
    raise AssertionError(kind)


def from_json_dict(data: Any, base: SimConfig | None = None) -> SimConfig:
    """Build a config from parsed JSON. Absent fields keep ``base`` values."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    for key, val in data.items():
        if key == "mode":
            continue
        if key not in _SECTIONS:
            raise ConfigError(key, "unknown section")
        if not isinstance(val, dict):
            raise ConfigError(key, "expected an object")
        for sub in val:
            if (key, sub) not in _SCHEMA:
                raise ConfigError(f"{key}.{sub}", "unknown field")
    kw = {}
    for path, (name, kind) in _SCHEMA.items():
        node = data
        for p in path:
            if not isinstance(node, dict) or p not in node:
                break
            node = node[p]
        else:
            kw[name] = _coerce(".".join(path), kind, node)
    base = base or SimConfig()
    try:
        return replace(base, **kw)
    except ConfigError:
        raise


def loads(text: str, base: SimConfig | None = None) -> SimConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from exc
    return from_json_dict(data, base)


def load(path: str | Path) -> SimConfig:
    return loads(Path(path).read_text())


def bundled_path(name: str = "paper.json"):
    return resources.files("exo_observer").joinpath("data", name)


def load_bundled(name: str = "paper.json") -> SimConfig:
    return loads(bundled_path(name).read_text())


def validate(cfg: SimConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}, got {cfg.mode!r}")
    theta = np.asarray(cfg.theta)
    if theta.shape != (3,):
        raise ConfigError("plant.theta", "benchmark plant takes exactly 3 parameters")
    n = 3
    if len(cfg.x0) != n:
        raise ConfigError("plant.x0", f"expected {n} entries")
    Ad = np.asarray(cfg.A_delta)
    if Ad.ndim != 2 or Ad.shape[0] != Ad.shape[1]:
        raise ConfigError("exosystem.A_delta", "must be square")
    nd = Ad.shape[0]
    for where, val in (("exosystem.h_delta", cfg.h_delta), ("exosystem.x_delta0", cfg.x_delta0),
                       ("filters.l", cfg.l), ("initial_estimates.x_delta0", cfg.x_delta0_hat0)):
        if len(val) != nd:
            raise ConfigError(where, f"expected {nd} entries")
    if np.asarray(cfg.G).shape != (nd, nd):
        raise ConfigError("filters.G", f"expected a {nd}x{nd} matrix")
    if len(cfg.K) != n:
        raise ConfigError("filters.K", f"expected {n} entries")
    if len(cfg.kappa0) != 3 * n:
        raise ConfigError("initial_estimates.kappa", f"expected {3 * n} entries")
    if np.asarray(cfg.T_I0).shape != (n, n):
        raise ConfigError("initial_estimates.T_I", f"expected a {n}x{n} matrix")
    for where, val in (("filters.k1", cfg.k1), ("filters.sigma", cfg.sigma), ("filters.k", cfg.k_gain),
                       ("run.h", cfg.h), ("run.sample_dt", cfg.sample_dt),
                       ("normalization.floor", cfg.norm_floor)):
        if not val > 0:
            raise ConfigError(where, "must be positive")
    for where, g in (("gains.normalized", cfg.gains), ("gains.paper", cfg.paper_gains)):
        for k, v in asdict(g).items():
            if not v > 0:
                raise ConfigError(f"{where}.{k}", "must be positive")
    if not cfg.t0 < cfg.t_eps < cfg.t_end:
        raise ConfigError("filters.t_eps", "need t0 < t_eps < t_end")
    if cfg.sample_dt < cfg.h:
        raise ConfigError("run.sample_dt", "must not be smaller than the step h")
    for where, t in (("filters.t_eps", cfg.t_eps), ("run.sample_dt", cfg.sample_dt)):
        ratio = (t - cfg.t0 if where == "filters.t_eps" else t) / cfg.h
        if abs(ratio - round(ratio)) > 1e-6:
            raise ConfigError(where, "must be an integer multiple of the step h")
