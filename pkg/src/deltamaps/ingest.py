"""Field container, on-disk format and anomaly preprocessing.

Binary field format
-------------------
``<name>.json`` header::

    {"rows": R, "cols": C, "T": T, "n_cells": R*C, "wrap_longitude": false,
     "has_coords": false, "layout": "cell_major_f64le", "mask_encoding": "uint8",
     "time_step_label": "month", "data": "<name>.bin",
     "mask": "<name>.mask" | null, "lat": "<name>.lat" | null, "lon": "<name>.lon" | null,
     "preprocessing_log": [...]}

``<name>.bin`` holds ``R*C*T`` little-endian float64 values, cell-major
(all T samples of flat cell 0, then flat cell 1, ...).  Masked cells may hold
NaN.  The optional ``.mask`` sidecar is one uint8 per flat cell (1 = masked);
``.lat``/``.lon`` are float64 little-endian, one per flat cell.

A CSV field (one row of T comma-separated values per flat cell, no header)
is accepted by :func:`read_field` in place of the ``.bin`` file.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .grid import GridGraph, build_grid

log = logging.getLogger(__name__)

LAYOUT = "cell_major_f64le"


@dataclass
class Field:
    """Per-cell time series (``n_cells x T``) on a grid graph."""

    grid: GridGraph
    data: np.ndarray
    time_step_label: str = "step"
    preprocessing_log: list = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] != self.grid.n_cells:
            raise DataError(
                f"data shape {self.data.shape} does not match {self.grid.n_cells} grid cells")
        if not np.all(np.isfinite(self.data)):
            bad = int(np.flatnonzero(~np.isfinite(self.data).all(axis=1))[0])
            raise DataError(f"non-finite values in unmasked cell {bad}")

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def n_cells(self) -> int:
        return self.data.shape[0]

    def with_data(self, data, step: str) -> "Field":
        return replace(self, data=data, preprocessing_log=self.preprocessing_log + [step])


def _check_target(path: Path, force: bool):
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True to overwrite")


def write_field(f: Field, header_path, force: bool = False, encoding: str = "binary") -> Path:
    """Write ``f`` as a JSON header plus data (and sidecar) files."""
    header_path = Path(header_path)
    g = f.grid
    if g.rows is None:
        raise DataError("only lattice grids can be written in the field format")
    stem = header_path.with_suffix("")
    data_path = stem.with_suffix(".bin" if encoding == "binary" else ".csv")
    size = g.rows * g.cols
    full = np.full((size, f.T), np.nan)
    full[g.flat_index] = f.data
    masked = np.ones(size, dtype=bool)
    masked[g.flat_index] = False
    has_coords = g.coord_kind == "latlon"

    targets = [header_path, data_path]
    if masked.any():
        targets.append(stem.with_suffix(".mask"))
    if has_coords:
        targets += [stem.with_suffix(".lat"), stem.with_suffix(".lon")]
    for t in targets:
        _check_target(t, force)

    header = {
        "rows": g.rows, "cols": g.cols, "T": f.T, "n_cells": size,
        "wrap_longitude": bool(g.wrap_longitude), "has_coords": has_coords,
        "layout": LAYOUT if encoding == "binary" else "csv",
        "mask_encoding": "uint8", "time_step_label": f.time_step_label,
        "data": data_path.name,
        "mask": stem.with_suffix(".mask").name if masked.any() else None,
        "lat": stem.with_suffix(".lat").name if has_coords else None,
        "lon": stem.with_suffix(".lon").name if has_coords else None,
        "preprocessing_log": list(f.preprocessing_log),
    }
    if encoding == "binary":
        full.astype("<f8").tofile(data_path)
    elif encoding == "csv":
        np.savetxt(data_path, full, delimiter=",", fmt="%.17g")
    else:
        raise ConfigError("encoding must be 'binary' or 'csv'")
    if masked.any():
        masked.astype(np.uint8).tofile(stem.with_suffix(".mask"))
    if has_coords:
        lat = np.zeros(size)
        lon = np.zeros(size)
        lat[g.flat_index] = g.coords[:, 0]
        lon[g.flat_index] = g.coords[:, 1]
        lat.astype("<f8").tofile(stem.with_suffix(".lat"))
        lon.astype("<f8").tofile(stem.with_suffix(".lon"))
    header_path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    return header_path


def _read_f64(path: Path, expected: int, what: str) -> np.ndarray:
    actual = path.stat().st_size
    if actual != expected * 8:
        raise DataError(f"{what} {path}: expected {expected * 8} bytes, found {actual}")
    return np.fromfile(path, dtype="<f8")


def read_field(header_path, data_path=None) -> Field:
    """Load a field written by :func:`write_field` (binary or CSV data)."""
    header_path = Path(header_path)
    if not header_path.exists():
        raise FileNotFoundError(f"field header not found: {header_path}")
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
        rows, cols, T = int(header["rows"]), int(header["cols"]), int(header["T"])
    except (ValueError, KeyError) as exc:
        raise DataError(f"invalid field header {header_path}: {exc}") from exc
    base = header_path.parent
    size = rows * cols
    data_path = Path(data_path) if data_path else base / header["data"]
    if not data_path.exists():
        raise FileNotFoundError(f"field data not found: {data_path}")
    if data_path.suffix == ".csv":
        full = np.loadtxt(data_path, delimiter=",", ndmin=2)
        if full.shape != (size, T):
            raise DataError(f"CSV {data_path}: expected shape {(size, T)}, found {full.shape}")
    else:
        if header.get("layout", LAYOUT) != LAYOUT:
            raise DataError(f"unsupported layout {header.get('layout')!r}")
        full = _read_f64(data_path, size * T, "data").reshape(size, T)

    mask = np.zeros(size, dtype=bool)
    if header.get("mask"):
        mpath = base / header["mask"]
        if mpath.stat().st_size != size:
            raise DataError(f"mask {mpath}: expected {size} bytes, found {mpath.stat().st_size}")
        mask = np.fromfile(mpath, dtype=np.uint8).astype(bool)
    lat = lon = None
    if header.get("has_coords"):
        lat = _read_f64(base / header["lat"], size, "lat")
        lon = _read_f64(base / header["lon"], size, "lon")
    bad = ~mask & ~np.isfinite(full).all(axis=1)
    if bad.any():
        raise DataError(f"NaN or inf in unmasked cell {int(np.flatnonzero(bad)[0])}")
    g = build_grid(rows, cols, mask=mask, lat=lat, lon=lon,
                   wrap_longitude=bool(header.get("wrap_longitude", False)))
    return Field(g, full[g.flat_index], header.get("time_step_label", "step"),
                 list(header.get("preprocessing_log", [])))


def deseasonalize(f: Field, period: int) -> Field:
    """Subtract the per-cell, per-phase mean (climatology)."""
    if period <= 1:
        raise ConfigError("period must be > 1")
    if f.T < 2 * period:
        raise DataError(f"need at least two full cycles (T={f.T}, period={period})")
    out = f.data.copy()
    for phase in range(period):
        out[:, phase::period] -= f.data[:, phase::period].mean(axis=1, keepdims=True)
    return f.with_data(out, f"deseasonalize(period={period})")


def _parallel_rows(fn, X, workers):
    if workers is None or workers <= 1 or X.shape[0] < 2:
        return fn(X)
    chunks = np.array_split(np.arange(X.shape[0]), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda idx: fn(X[idx]), [c for c in chunks if c.size]))
    return np.concatenate(parts)


def theil_sen_line(x):
    """``(slope, intercept)`` of the Theil-Sen fit against t = 0..T-1."""
    x = np.asarray(x, dtype=np.float64)
    slope = kernels.theil_sen_slope(x)
    intercept = float(np.median(x - slope * np.arange(x.size)))
    return slope, intercept


def theil_sen_detrend(f: Field, workers: int = 1) -> Field:
    """Remove a per-cell Theil-Sen trend (exact enumeration of pair slopes)."""
    if f.T < 3:
        raise DataError("Theil-Sen detrending needs T >= 3")
    slopes = _parallel_rows(kernels.theil_sen_slopes, f.data, workers)
    t = np.arange(f.T)
    resid = f.data - slopes[:, None] * t
    intercepts = np.median(resid, axis=1)
    return f.with_data(resid - intercepts[:, None], "theil_sen_detrend")


def center(f: Field) -> Field:
    """Subtract the per-cell mean."""
    out = f.data - f.data.mean(axis=1, keepdims=True)
    # second pass absorbs the rounding left by the first
    out -= out.mean(axis=1, keepdims=True)
    return f.with_data(out, "center")


def stationarity_warning(f: Field, ratio: float = 4.0) -> int:
    """Log a warning when first/second-half variances differ by more than ``ratio``.

    Returns the number of flagged cells; never raises.
    """
    half = f.T // 2
    if half < 2:
        return 0
    v1 = f.data[:, :half].var(axis=1)
    v2 = f.data[:, half:].var(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.maximum(v1, v2) / np.minimum(v1, v2)
    flagged = int(np.sum(q > ratio))
    if flagged:
        log.warning("%d cells show variance changes above %.1fx between halves", flagged, ratio)
    return flagged


def preprocess(f: Field, period=None, detrend: bool = True, workers: int = 1) -> Field:
    """Anomalies: remove seasonal cycle, Theil-Sen trend, then center."""
    if period:
        f = deseasonalize(f, period)
    if detrend:
        f = theil_sen_detrend(f, workers=workers)
    f = center(f)
    stationarity_warning(f)
    return f


def default_workers() -> int:
    return os.cpu_count() or 1
