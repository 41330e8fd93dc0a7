"""Delimited-text and JSON persistence.

Floats are written with 17 significant digits so every double survives a
write/read round trip unchanged.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import Grid
from .ingest import DensitySlice

FLOAT_FMT = "%.17g"
MANIFEST_NAME = "manifest.json"


class FormatError(ValueError):
    pass


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def write_columns(path: Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_columns(path: Path, header: list[str]) -> np.ndarray:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or [h.strip() for h in got] != header:
            raise FormatError(f"{path}: expected header {','.join(header)}, got {got}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric entry in {row!r}") from None
    return np.asarray(rows, dtype=float).reshape(-1, len(header))


def write_density_csv(path, values: np.ndarray, g: Grid) -> None:
    values = g.check_slice(values, "density")
    write_columns(path, ["x", "m"], zip(g.x.tolist(), values.tolist()))


def read_density_csv(path, g: Grid) -> np.ndarray:
    data = read_columns(path, ["x", "m"])
    if data.shape[0] != g.nx or not np.allclose(data[:, 0], g.x, rtol=0, atol=1e-12):
        raise FormatError(f"{path}: x column does not match the {g.nx}-node grid")
    return data[:, 1].copy()


def write_field_csv(path, f: np.ndarray, g: Grid) -> None:
    """Long format, one row per node, time-major."""
    f = g.check_field(f)
    rows = ((t, x, f[i, j]) for j, t in enumerate(g.t.tolist()) for i, x in enumerate(g.x.tolist()))
    write_columns(path, ["t", "x", "value"], ((t, x, float(v)) for t, x, v in rows))


def read_field_csv(path, g: Grid) -> np.ndarray:
    data = read_columns(path, ["t", "x", "value"])
    if data.shape[0] != g.nx * g.nt:
        raise FormatError(f"{path}: expected {g.nx * g.nt} rows for a {g.nx}x{g.nt} grid, got {data.shape[0]}")
    T, X = np.meshgrid(g.t, g.x)  # (nx, nt)
    tt = data[:, 0].reshape(g.nt, g.nx).T
    xx = data[:, 1].reshape(g.nt, g.nx).T
    if not (np.allclose(tt, T, rtol=0, atol=1e-12) and np.allclose(xx, X, rtol=0, atol=1e-12)):
        raise FormatError(f"{path}: (t, x) columns do not match the grid")
    return data[:, 2].reshape(g.nt, g.nx).T.copy()


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def week_filename(k: int) -> str:
    return f"week_{k + 1:02d}.csv"


def write_period(directory, slices, g: Grid, meta: dict | None = None) -> Path:
    """Write one density CSV per week plus a manifest listing them in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k, s in enumerate(slices):
        name = week_filename(k)
        write_density_csv(directory / name, getattr(s, "values", s), g)
        files.append(name)
    manifest = {"grid": {"nx": g.nx, "nt": g.nt, "T": g.T}, "weeks": files}
    manifest.update(meta or {})
    write_json(directory / MANIFEST_NAME, manifest)
    return directory / MANIFEST_NAME


def read_period(directory, g: Grid) -> list[DensitySlice]:
    directory = Path(directory)
    manifest = read_json(directory / MANIFEST_NAME)
    mg = manifest.get("grid", {})
    if (mg.get("nx"), mg.get("nt")) != (g.nx, g.nt) or not np.isclose(mg.get("T", np.nan), g.T):
        raise FormatError(f"{directory}: manifest grid {mg} does not match nx={g.nx}, nt={g.nt}, T={g.T}")
    return [DensitySlice(read_density_csv(directory / f, g), week=k) for k, f in enumerate(manifest["weeks"])]
