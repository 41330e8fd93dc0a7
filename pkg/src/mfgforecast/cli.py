"""``mfgforecast`` command line.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure,
3 file-system failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import io, plotting
from .calibrate import CalibrationError, sweep
from .carleman import CarlemanError
from .config import ConfigError, RunConfig, load
from .functional import State
from .grid import GridError
from .ingest import IngestError, load_scores, parse_timestamp, period_densities
from .init_estimate import EstimateError, estimate_initial_value
from .metrics import MetricsError, metrics_report
from .oracle import OracleError, make_manufactured, synthetic_period
from .params import MfgParams, ParamError
from .solver import N_PERIOD_WEEKS, SolverError, forecast

log = logging.getLogger("mfgforecast")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

VALIDATION_ERRORS = (
    ConfigError, IngestError, EstimateError, CalibrationError, MetricsError,
    ParamError, GridError, CarlemanError, io.FormatError,
)
NUMERICAL_ERRORS = (SolverError, OracleError, FloatingPointError, np.linalg.LinAlgError)

# flag -> dotted config key
FLAG_KEYS = {
    "nx": "grid.nx",
    "nt": "grid.nt",
    "T": "grid.T",
    "beta": "mfg.beta",
    "r": "mfg.r",
    "u_left": "mfg.u_left",
    "alpha": "alpha",
    "lam": "carleman.lambda",
    "period": "period",
    "max_iter": "solver.max_iter",
    "tol": "solver.tol",
    "scores": "paths.scores",
    "densities": "paths.densities",
    "output": "paths.output",
    "seed": "simulate.seed",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="JSON run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. solver.tol=1e-6 (repeatable)")
    p.add_argument("--nx", type=int)
    p.add_argument("--nt", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--u-left", dest="u_left", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--period", type=int, help="calibrated preset 1-10 for (beta, r, u_left) and start date")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--scores", help="scores CSV (timestamp,score)")
    p.add_argument("--densities", help="directory of weekly density CSVs")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfgforecast", description="Mean-field-game forecasting of weekly score densities.")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "scores CSV -> weekly density CSVs and a manifest",
        "estimate-u0": "estimate u(x, 0) from the first three weeks",
        "forecast": "solve for (u, m) over the period and write fields, metrics and plots",
        "calibrate": "sweep (beta, r, u_left) candidates and rank them",
        "simulate": "write an oracle-generated period (densities and sampled scores)",
        "metrics": "recompute metrics JSON from saved fields",
        "plot": "re-render SVG figures from saved outputs",
    }
    for name, text in helps.items():
        _add_common(sub.add_parser(name, help=text, description=text))
    return ap


def _overrides(ns: argparse.Namespace):
    from .config import parse_override

    out = [parse_override(s) for s in ns.set]
    for flag, key in FLAG_KEYS.items():
        val = getattr(ns, flag, None)
        if val is not None:
            out.append((key.split("."), val))
    return out


# -- commands ---------------------------------------------------------------


def _period_start(cfg: RunConfig, series) -> datetime:
    if cfg.start is not None:
        return cfg.start
    first = series.times[0]
    return datetime(first.year, first.month, first.day, tzinfo=timezone.utc)


def cmd_ingest(cfg: RunConfig) -> int:
    g = cfg.grid
    ic = cfg.raw["ingest"]
    series = load_scores(cfg.paths["scores"])
    start = _period_start(cfg, series)
    slices = period_densities(series, start, g, g.nt, ic["bandwidth"], ic["eps_adjust"])
    meta = {"start": start.isoformat(), "source": str(cfg.paths["scores"]), "bandwidth": ic["bandwidth"]}
    path = io.write_period(cfg.paths["densities"], slices, g, meta)
    print(f"wrote {len(slices)} weekly densities and {path}")
    return EXIT_OK


def _load_period(cfg: RunConfig):
    slices = io.read_period(cfg.paths["densities"], cfg.grid)
    if len(slices) < N_PERIOD_WEEKS:
        raise IngestError(f"{cfg.paths['densities']}: a period needs {N_PERIOD_WEEKS} weeks, found {len(slices)}")
    return slices


def cmd_estimate_u0(cfg: RunConfig) -> int:
    g, p = cfg.grid, cfg.require_params()
    nc = cfg.raw["init"]
    slices = io.read_period(cfg.paths["densities"], g)
    est = estimate_initial_value(slices[:3], p, g, eps=nc["eps"], mode=nc["stencil"], formula=nc["formula"])
    out = Path(cfg.paths["output"])
    io.write_columns(out / "u0.csv", ["x", "u0", "ux0", "p0"],
                     zip(g.x.tolist(), est.u0.tolist(), est.ux0.tolist(), est.p0.tolist()))
    io.write_json(out / "u0.json", {
        "u_left": p.u_left,
        "min_density": est.min_density,
        "floored_nodes": est.floored_nodes,
        "stencil_mode": est.stencil_mode,
        "formula": nc["formula"],
    })
    print(f"wrote {out / 'u0.csv'}")
    return EXIT_OK


def _write_solution(out: Path, fc, g) -> None:
    res = fc.result
    io.write_field_csv(out / "u.csv", res.state.u, g)
    io.write_field_csv(out / "m.csv", res.state.m, g)
    io.write_field_csv(out / "m_data.csv", fc.m_data, g)
    io.write_json(out / "metrics.json", fc.metrics.to_json())
    io.write_json(out / "result.json", {
        "iterations": res.iterations,
        "final_optimality": res.final_optimality,
        "converged": res.converged,
        "message": res.message,
        "constraint_report": res.constraint_report,
        "objective_trace": res.objective_trace,
        "metadata": res.metadata,
    })
    plotting.plot_weeks(res.state.m, fc.m_data, g, out / "weeks.svg")
    plotting.plot_true_cost(fc.metrics.true_cost, g, out / "true_cost.svg")


def cmd_forecast(cfg: RunConfig) -> int:
    g, p = cfg.grid, cfg.require_params()
    nc = cfg.raw["init"]
    slices = _load_period(cfg)
    fc = forecast(slices, p, g, cfg.solver, eps=nc["eps"], mode=nc["stencil"], formula=nc["formula"])
    out = Path(cfg.paths["output"])
    _write_solution(out, fc, g)
    s = fc.metrics.summary
    flag = "" if fc.result.converged else " (iteration cap reached)"
    print(
        f"forecast beta={p.beta:g} r={p.r:g} u_left={p.u_left:g}: {fc.result.iterations} iterations{flag}, "
        f"mean relative error {s['mean_relative_error']:.4g}, "
        f"{100 * s['fraction_below_threshold']:.1f}% of nodes below {s['threshold']:g}"
    )
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    g = cfg.grid
    spec = cfg.calibration_spec()
    nc, cal = cfg.raw["init"], cfg.raw["calibrate"]
    slices = _load_period(cfg)
    report = sweep(
        slices, spec, g,
        carleman=cfg.carleman,
        alpha=cfg.alpha,
        kernel=cfg.raw["mfg"]["kernel"],
        opts=cfg.solver,
        eps=nc["eps"], mode=nc["stencil"], formula=nc["formula"],
        workers=cal["workers"],
    )
    out = Path(cfg.paths["output"])
    io.write_json(out / "report.json", report.to_json())
    best = report.best
    plotting.plot_error_heatmap(
        best.metrics.error_matrix, g, out / "error_heatmap.svg",
        title=f"beta={best.beta:g}, r={best.r:g}, u(-1,0)={best.u_left:g}",
    )
    plotting.plot_weeks(best.result.result.state.m, best.result.m_data, g, out / "best_weeks.svg")
    print(f"{len(report.entries)} candidates; best beta={best.beta:g} r={best.r:g} "
          f"u_left={best.u_left:g} score={best.score:.6g}")
    return EXIT_OK


def sample_scores(values: np.ndarray, x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF samples from the piecewise-linear density through ``(x, values)``."""
    fine = np.linspace(x[0], x[-1], 20 * (x.size - 1) + 1)
    dens = np.maximum(np.interp(fine, x, values), 0.0)
    cdf = cumulative_trapezoid(dens, fine, initial=0.0)
    cdf /= cdf[-1]
    return np.interp(rng.uniform(size=n), cdf, fine)


def cmd_simulate(cfg: RunConfig) -> int:
    g = cfg.grid
    sim = cfg.raw["simulate"]
    p = MfgParams(beta=float(sim["beta"]), r=float(sim["r"]), u_left=float(sim["u_left"]),
                  kernel=cfg.raw["mfg"]["kernel"], carleman=cfg.carleman, alpha=cfg.alpha)
    if sim["kind"] == "hjb":
        sp = synthetic_period(p, g, amplitudes=tuple(sim["amplitudes"]), refine=sim["refine"], substeps=sim["substeps"])
        slices = [s.values for s in sp.weeks]
    else:
        sc = make_manufactured(p, g, A=float(sim["A"]), B=float(sim["B"]), forcing="discrete")
        slices = [sc.m_star[:, j] for j in range(g.nt)]
    start = parse_timestamp(str(sim["start"]))
    truth_dir = Path(cfg.paths["output"]) / "truth"
    meta = {"start": start.isoformat(), "simulate": sim}
    io.write_period(truth_dir, slices, g, meta)

    rng = np.random.default_rng(sim["seed"])
    n = sim["scores_per_week"]
    step = 7 * 24 * 3600 / n
    rows = []
    for k, vals in enumerate(slices):
        scores = sample_scores(np.asarray(vals), g.x, n, rng)
        week0 = start + timedelta(days=7 * k)
        for i, s in enumerate(scores):
            t = week0 + timedelta(seconds=int((i + 0.5) * step))
            rows.append((t.strftime("%Y-%m-%dT%H:%M:%SZ"), float(s)))
    io.write_columns(Path(cfg.paths["scores"]), ["timestamp", "score"], rows)
    print(f"wrote {len(slices)} weekly densities to {truth_dir} and {len(rows)} scores to {cfg.paths['scores']}")
    return EXIT_OK


def _load_solution(cfg: RunConfig):
    g = cfg.grid
    out = Path(cfg.paths["output"])
    u = io.read_field_csv(out / "u.csv", g)
    m = io.read_field_csv(out / "m.csv", g)
    return State(u, m)


def cmd_metrics(cfg: RunConfig) -> int:
    g, p = cfg.grid, cfg.require_params()
    s = _load_solution(cfg)
    slices = _load_period(cfg)
    m_data = np.column_stack([sl.values for sl in slices[: g.nt]])
    rep = metrics_report(s, m_data, p, g)
    path = Path(cfg.paths["output"]) / "metrics.json"
    io.write_json(path, rep.to_json())
    print(f"wrote {path}: mean relative error {rep.summary['mean_relative_error']:.4g}")
    return EXIT_OK


def cmd_plot(cfg: RunConfig) -> int:
    g = cfg.grid
    out = Path(cfg.paths["output"])
    s = _load_solution(cfg)
    m_data = io.read_field_csv(out / "m_data.csv", g)
    metrics = io.read_json(out / "metrics.json")
    plotting.plot_weeks(s.m, m_data, g, out / "weeks.svg")
    plotting.plot_true_cost(np.asarray(metrics["true_cost"]), g, out / "true_cost.svg")
    plotting.plot_error_heatmap(np.asarray(metrics["error_matrix"]), g, out / "error_heatmap.svg")
    print(f"wrote figures to {out}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "estimate-u0": cmd_estimate_u0,
    "forecast": cmd_forecast,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "metrics": cmd_metrics,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(ns.config, _overrides(ns))
        if ns.command == "calibrate":
            cfg.calibration_spec()
        elif ns.command in ("estimate-u0", "forecast", "metrics"):
            cfg.require_params()
        return COMMANDS[ns.command](cfg)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
