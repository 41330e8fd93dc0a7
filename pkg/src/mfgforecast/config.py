"""Run configuration: one JSON file, defaults for every key, dotted-key overrides.

Validation builds every domain object the commands will need, so a bad value
is reported before any file is written.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .calibrate import CalibrationSpec
from .carleman import CarlemanParams
from .grid import Grid, make_grid
from .ingest import parse_timestamp
from .init_estimate import FORMULAS
from .params import PERIOD_PRESETS, MfgParams
from .solver import SolverOptions

DEFAULTS: dict = {
    "grid": {"nx": 21, "nt": 11, "T": 1.0},
    "carleman": {"lambda": 1.0, "a": 1.1, "c": 3.0, "d": 1.0},
    "alpha": 1e-4,
    "mfg": {"beta": None, "r": None, "u_left": None, "kernel": 1.0},
    "period": None,
    "ingest": {"bandwidth": "auto", "eps_adjust": 2, "start": None},
    "init": {"eps": 0.2, "stencil": "standard", "formula": "standard"},
    "solver": {
        "max_iter": 5000,
        "tol": 1e-5,
        "history": 10,
        "armijo_c1": 1e-4,
        "backtrack": 0.5,
        "max_backtracks": 60,
        "bound": None,
    },
    "calibrate": {
        "betas": None,
        "rs": None,
        "u_lefts": None,
        "warm_start": False,
        "scoring": "mean_error",
        "workers": 1,
    },
    "simulate": {
        "kind": "hjb",
        "beta": 0.1,
        "r": 1.0,
        "u_left": 0.0,
        "amplitudes": [0.3],
        "refine": 8,
        "substeps": 50,
        "seed": 0,
        "scores_per_week": 2000,
        "start": "2020-03-02T00:00:00Z",
        "A": 0.5,
        "B": 0.5,
    },
    "paths": {"scores": "scores.csv", "densities": "densities", "output": "output"},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{where}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key '{key}' must be a table")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b=value``; the value is parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' must look like key.path=value")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip().split("."), val


def set_key(cfg: dict, keys: list[str], value) -> None:
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"unknown config key '{'.'.join(keys)}'")
        node = node[k]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise ConfigError(f"unknown config key '{'.'.join(keys)}'")
    node[keys[-1]] = value


def load_raw(path: str | Path | None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        text = path.read_text(encoding="utf-8")  # OSError propagates as an I/O failure
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        cfg = _merge(cfg, user)
    for keys, val in overrides:
        set_key(cfg, keys, val)
    return cfg


@dataclass
class RunConfig:
    raw: dict
    grid: Grid
    carleman: CarlemanParams
    alpha: float
    params: MfgParams | None
    solver: SolverOptions
    period: int | None
    start: datetime | None
    paths: dict

    def require_params(self) -> MfgParams:
        if self.params is None:
            raise ConfigError("mfg.beta and mfg.r are required (or choose a period preset)")
        return self.params

    def calibration_spec(self) -> CalibrationSpec:
        c = self.raw["calibrate"]
        if c["betas"] is None and c["rs"] is None and c["u_lefts"] is None:
            if self.period is None:
                raise ConfigError("calibrate needs candidate lists or a period preset to centre them on")
            return CalibrationSpec.around_preset(self.period, warm_start=c["warm_start"], scoring=c["scoring"])
        missing = [k for k in ("betas", "rs", "u_lefts") if c[k] is None]
        if missing:
            raise ConfigError(f"calibrate.{missing[0]} is required when other candidate lists are given")
        return CalibrationSpec(c["betas"], c["rs"], c["u_lefts"], c["warm_start"], c["scoring"])


def _num(v, key: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"config key '{key}' must be a number, got {v!r}")
    return float(v)


def _int(v, key: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"config key '{key}' must be an integer, got {v!r}")
    return v


def validate(cfg: dict) -> RunConfig:
    """Build and check every object derived from ``cfg``.

    Domain constructors raise their own ``ValueError`` subclasses; those are
    re-raised as ``ConfigError`` with the offending section named.
    """
    try:
        gc = cfg["grid"]
        g = make_grid(_int(gc["nx"], "grid.nx"), _int(gc["nt"], "grid.nt"), _num(gc["T"], "grid.T"))
        cc = cfg["carleman"]
        carl = CarlemanParams(
            lam=_num(cc["lambda"], "carleman.lambda"),
            c=_num(cc["c"], "carleman.c"),
            a=_num(cc["a"], "carleman.a"),
            d=_num(cc["d"], "carleman.d"),
            T=g.T,
        )
        alpha = _num(cfg["alpha"], "alpha")

        period = cfg["period"]
        if period is not None:
            period = _int(period, "period")
            if period not in PERIOD_PRESETS:
                raise ConfigError(f"period must be 1..10, got {period}")
        mc = cfg["mfg"]
        preset = PERIOD_PRESETS[period] if period is not None else {}
        beta = mc["beta"] if mc["beta"] is not None else preset.get("beta")
        r = mc["r"] if mc["r"] is not None else preset.get("r")
        u_left = mc["u_left"] if mc["u_left"] is not None else preset.get("u_left", 0.0)
        kernel = _num(mc["kernel"], "mfg.kernel")
        params = None
        if beta is not None and r is not None:
            params = MfgParams(
                beta=_num(beta, "mfg.beta"),
                r=_num(r, "mfg.r"),
                u_left=_num(u_left, "mfg.u_left"),
                kernel=kernel,
                carleman=carl,
                alpha=alpha,
            )
        elif (beta is None) != (r is None):
            raise ConfigError("mfg.beta and mfg.r must be given together")
        else:
            MfgParams(beta=1.0, r=1.0, alpha=alpha, carleman=carl)  # still validate alpha

        sc = cfg["solver"]
        opts = SolverOptions(
            max_iter=_int(sc["max_iter"], "solver.max_iter"),
            tol=_num(sc["tol"], "solver.tol"),
            history=_int(sc["history"], "solver.history"),
            armijo_c1=_num(sc["armijo_c1"], "solver.armijo_c1"),
            backtrack=_num(sc["backtrack"], "solver.backtrack"),
            max_backtracks=_int(sc["max_backtracks"], "solver.max_backtracks"),
            bound=None if sc["bound"] is None else _num(sc["bound"], "solver.bound"),
        )
        if opts.max_iter < 0 or opts.tol <= 0 or opts.history < 1 or not 0 < opts.backtrack < 1:
            raise ConfigError("solver options out of range (max_iter>=0, tol>0, history>=1, 0<backtrack<1)")
        if not 0 < opts.armijo_c1 < 1 or opts.max_backtracks < 1:
            raise ConfigError("solver options out of range (0<armijo_c1<1, max_backtracks>=1)")

        ic = cfg["ingest"]
        if ic["bandwidth"] != "auto":
            if _num(ic["bandwidth"], "ingest.bandwidth") <= 0:
                raise ConfigError("ingest.bandwidth must be positive or 'auto'")
        if _int(ic["eps_adjust"], "ingest.eps_adjust") < 1:
            raise ConfigError("ingest.eps_adjust must be >= 1")
        start = None
        if ic["start"] is not None:
            start = parse_timestamp(str(ic["start"]))
        elif period is not None:
            start = parse_timestamp(preset["start"])

        nc = cfg["init"]
        eps = _num(nc["eps"], "init.eps")
        if not 0 < eps < 1:
            raise ConfigError(f"init.eps must lie in (0, 1), got {eps}")
        if nc["stencil"] not in ("standard", "as-printed"):
            raise ConfigError(f"init.stencil must be 'standard' or 'as-printed', got {nc['stencil']!r}")
        if nc["formula"] not in FORMULAS:
            raise ConfigError(f"init.formula must be one of {FORMULAS}, got {nc['formula']!r}")

        cal = cfg["calibrate"]
        if _int(cal["workers"], "calibrate.workers") < 1:
            raise ConfigError("calibrate.workers must be >= 1")

        sim = cfg["simulate"]
        if sim["kind"] not in ("hjb", "manufactured"):
            raise ConfigError(f"simulate.kind must be 'hjb' or 'manufactured', got {sim['kind']!r}")
        for k in ("beta", "r", "u_left", "A", "B"):
            _num(sim[k], f"simulate.{k}")
        if _num(sim["beta"], "simulate.beta") <= 0:
            raise ConfigError("simulate.beta must be positive")
        for k in ("refine", "substeps", "seed", "scores_per_week"):
            if _int(sim[k], f"simulate.{k}") < (0 if k == "seed" else 1):
                raise ConfigError(f"simulate.{k} out of range")
        if not isinstance(sim["amplitudes"], list) or not sim["amplitudes"]:
            raise ConfigError("simulate.amplitudes must be a non-empty list")
        for a in sim["amplitudes"]:
            _num(a, "simulate.amplitudes")
        parse_timestamp(str(sim["start"]))

        paths = cfg["paths"]
        for k, v in paths.items():
            if not isinstance(v, str) or not v:
                raise ConfigError(f"paths.{k} must be a non-empty string")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(cfg, g, carl, alpha, params, opts, period, start, dict(paths))


def load(path=None, overrides=()) -> RunConfig:
    return validate(load_raw(path, overrides))
