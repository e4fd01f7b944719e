"""Synthetic ground-truth fields: circular domains driven by mixed mother series.

The default scene has five domains on a 50 x 70 grid.  Each domain has a
core disc where the signal is at full strength and an outer ring where the
signal variance decays linearly to zero at the outer radius.  White Gaussian
noise is added everywhere.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import build_grid
from .ingest import Field


@dataclass
class SyntheticDomain:
    center: tuple  # (row, col), grid units
    r_core: float
    r_outer: float
    variance: float
    mixing: list  # [(mother index, coefficient, shift), ...]; x(t) += c * y[m](t + shift)

    def __post_init__(self):
        self.center = tuple(float(c) for c in self.center)
        self.mixing = [(int(m), float(c), int(s)) for m, c, s in self.mixing]
        if not 0 < self.r_core < self.r_outer:
            raise ConfigError(f"need 0 < r_core < r_outer, got {self.r_core}, {self.r_outer}")
        if not self.variance > 0:
            raise ConfigError("domain variance must be positive")
        if not self.mixing or sum(abs(c) for _, c, _ in self.mixing) == 0:
            raise ConfigError("mixing must contain a nonzero coefficient")

    def attenuation(self, d):
        """Signal-variance factor f(d): 1 inside the core, linear to 0 at r_outer."""
        d = np.asarray(d, dtype=float)
        f = (self.r_outer - d) / (self.r_outer - self.r_core)
        return np.where(d <= self.r_core, 1.0, np.where(d <= self.r_outer, f, 0.0))

    @property
    def primary(self) -> int:
        """Mother series carrying the largest coefficient."""
        return max(self.mixing, key=lambda t: (abs(t[1]), -t[0]))[0]


def table_one_domains() -> list:
    """The five-domain scene; centers are our choice (the layout is not tabulated)."""
    return [
        SyntheticDomain((17, 13), 2, 10, 16, [(0, 2 / 3, 0), (2, -1 / 3, 15)]),
        SyntheticDomain((17, 35), 4, 14, 11, [(1, 1.0, 0)]),
        SyntheticDomain((17, 57), 2, 10, 16, [(2, 1.0, 0)]),
        SyntheticDomain((40, 22), 0.5, 5, 9, [(3, 3 / 4, 0), (4, 1 / 4, 0)]),
        SyntheticDomain((39, 32), 1, 7, 6, [(4, 4 / 5, 0), (2, 1 / 5, 0)]),
    ]


@dataclass
class SyntheticSpec:
    rows: int = 50
    cols: int = 70
    domains: list = field(default_factory=table_one_domains)
    T: int = 1200
    noise_variance: float = 1.0
    phi: float = 0.8
    rng_seed: int = 0
    tau_check: int = 20
    uncorrelated_tol: float = 0.05

    def __post_init__(self):
        self.domains = [d if isinstance(d, SyntheticDomain) else SyntheticDomain(**d)
                        for d in self.domains]
        if self.rows <= 0 or self.cols <= 0:
            raise ConfigError("grid dimensions must be positive")
        if not 0 <= self.phi < 1:
            raise ConfigError("phi must lie in [0, 1)")
        if self.noise_variance < 0:
            raise ConfigError("noise_variance must be >= 0")
        if self.T < 2 * max(1, self.max_shift):
            raise ConfigError("T must be at least twice the largest shift")
        if self.n_mothers < 1:
            raise ConfigError("no mother series referenced")

    @property
    def max_shift(self) -> int:
        return max(abs(s) for d in self.domains for _, _, s in d.mixing)

    @property
    def n_mothers(self) -> int:
        return 1 + max(m for d in self.domains for m, _, _ in d.mixing)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["domains"] = [asdict(d) for d in self.domains]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticSpec":
        obj = dict(obj)
        if "domains" in obj:
            obj["domains"] = [SyntheticDomain(**d) for d in obj["domains"]]
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class GroundTruth:
    core_cells: list
    extent_cells: list
    edges: list  # [{"a": i, "b": j, "sign": +-1, "lag": tau}] with domain indices from 0
    signals: np.ndarray = field(repr=False)
    centers: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"core_cells": self.core_cells, "extent_cells": self.extent_cells,
                "edges": self.edges, "centers": self.centers}


def _standardize(x):
    x = x - x.mean(axis=-1, keepdims=True)
    return x / x.std(axis=-1, keepdims=True)


def max_abs_cross_corr(a, b, tau_max) -> float:
    """Largest |r_ab(tau)| over |tau| <= tau_max (T denominator)."""
    from . import kernels

    a = _standardize(a)
    b = _standardize(b)
    return float(np.max(np.abs(kernels.lagged_products(a, b, tau_max)))) / a.size


def _ar1(rng, n, T, phi, burn=200):
    eps = rng.standard_normal((n, T + burn))
    y = np.empty_like(eps)
    y[:, 0] = eps[:, 0]
    for t in range(1, T + burn):
        y[:, t] = phi * y[:, t - 1] + eps[:, t]
    return y[:, burn:]


def _lag_design(y, L):
    T = y.size
    cols = [np.ones(T)]
    for tau in range(-L, L + 1):
        c = np.zeros(T)
        if tau >= 0:
            c[:T - tau] = y[tau:]
        else:
            c[-tau:] = y[:T + tau]
        cols.append(c)
    return np.column_stack(cols)


def decorrelate(mothers, L):
    """Project out of each series every lagged copy (|lag| <= L) of the earlier ones.

    Afterwards the lagged products between any two series vanish for
    |lag| <= L, so their cross-correlation is zero there.
    """
    out = [_standardize(mothers[0])]
    for j in range(1, len(mothers)):
        design = np.hstack([_lag_design(out[i], L) for i in range(j)])
        coef, *_ = np.linalg.lstsq(design, mothers[j], rcond=None)
        out.append(_standardize(mothers[j] - design @ coef))
    return np.array(out)


def generate_mothers(n: int, T: int, phi: float = 0.8, rng_seed: int = 0,
                     tau_check: int = 20, tol: float = 0.05, max_retries: int = 20,
                     decorrelate_lags=None):
    """Mutually uncorrelated, standardized AR(1) series.

    Every pair has |cross-correlation| < ``tol`` at all lags up to
    ``tau_check``; candidates that fail are regenerated.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if not 0 <= phi < 1:
        raise ConfigError("phi must lie in [0, 1)")
    L = tau_check if decorrelate_lags is None else decorrelate_lags
    if n > 1:
        # keep the regression design well below T columns
        L = min(L, max(0, (T // (2 * (n - 1)) - 2) // 2))
    streams = np.random.SeedSequence(rng_seed).spawn(max_retries)
    for attempt in range(max_retries):
        rng = np.random.default_rng(streams[attempt])
        y = _ar1(rng, n, T, phi)
        y = decorrelate(y, L) if n > 1 else _standardize(y)
        worst = max((max_abs_cross_corr(y[i], y[j], tau_check)
                     for i in range(n) for j in range(i + 1, n)), default=0.0)
        if worst < tol:
            return y
    raise ConfigError(f"could not generate {n} uncorrelated mothers in {max_retries} "
                      "attempts; try another seed")


def mix_signals(mothers, spec: SyntheticSpec) -> np.ndarray:
    """Per-domain signals: mix, re-standardize, scale to the domain variance.

    ``mothers`` must have ``spec.T + spec.max_shift`` samples so shifted
    terms stay inside the generated record.
    """
    mothers = np.atleast_2d(mothers)
    T = spec.T
    if mothers.shape[1] < T + spec.max_shift:
        raise ConfigError("mother series too short for the requested shifts")
    out = np.empty((len(spec.domains), T))
    for k, d in enumerate(spec.domains):
        x = np.zeros(T)
        for m, c, s in d.mixing:
            if s < 0:
                raise ConfigError("shifts must be non-negative")
            x += c * mothers[m, s:s + T]
        out[k] = _standardize(x) * math.sqrt(d.variance)
    return out


def intended_edges(spec: SyntheticSpec) -> list:
    """Direct couplings: one domain's mix contains the other's primary mother."""
    edges = []
    doms = spec.domains
    for i in range(len(doms)):
        for j in range(i + 1, len(doms)):
            for a, b, sgn in ((i, j, 1), (j, i, -1)):
                pm = doms[b].primary
                own = [t for t in doms[b].mixing if t[0] == pm][0]
                for m, c, s in doms[a].mixing:
                    if m == pm and a != b:
                        lag = (s - own[2]) * sgn
                        edges.append({"a": i, "b": j, "sign": int(np.sign(c * own[1])),
                                      "lag": int(lag)})
    uniq = {(e["a"], e["b"]): e for e in edges}
    return [uniq[k] for k in sorted(uniq)]


def render_field(spec: SyntheticSpec, signals, rng_seed=None):
    """Superimpose attenuated domain signals and white noise on the grid."""
    seed = spec.rng_seed if rng_seed is None else rng_seed
    g = build_grid(spec.rows, spec.cols)
    rows, cols = np.divmod(np.arange(spec.rows * spec.cols), spec.cols)
    data = np.zeros((g.n_cells, spec.T))
    cores, extents, centers = [], [], []
    for k, d in enumerate(spec.domains):
        r0, c0 = d.center
        if not (d.r_outer <= r0 <= spec.rows - 1 - d.r_outer
                and d.r_outer <= c0 <= spec.cols - 1 - d.r_outer):
            import warnings
            warnings.warn(f"synthetic domain {k} is clipped by the grid edge")
        dist = np.hypot(rows - r0, cols - c0)
        amp = np.sqrt(d.attenuation(dist))
        inside = np.flatnonzero(amp > 0)
        data[inside] += amp[inside, None] * signals[k][None, :]
        cores.append(np.flatnonzero(dist <= d.r_core).tolist())
        extents.append(np.flatnonzero(dist <= d.r_outer).tolist())
        centers.append([r0, c0])
    noise_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    data += math.sqrt(spec.noise_variance) * noise_rng.standard_normal(data.shape)
    truth = GroundTruth(cores, extents, intended_edges(spec), np.asarray(signals), centers)
    return Field(g, data, "step", []), truth


def generate(spec: SyntheticSpec = None):
    """Full scene: mothers, mixing, rendering.  Returns ``(field, truth)``."""
    spec = spec or SyntheticSpec()
    mother_seed = np.random.SeedSequence(spec.rng_seed).spawn(2)[0]
    mothers = generate_mothers(spec.n_mothers, spec.T + spec.max_shift, spec.phi,
                               rng_seed=int(mother_seed.generate_state(1)[0]),
                               tau_check=spec.tau_check, tol=spec.uncorrelated_tol,
                               decorrelate_lags=spec.tau_check + spec.max_shift)
    signals = mix_signals(mothers, spec)
    return render_field(spec, signals)


def match_domains(domains, truth: GroundTruth) -> dict:
    """Ground-truth index -> identified domain id, greedily by largest overlap.

    Each identified domain is matched at most once; unmatched truths map to None.
    """
    doms = getattr(domains, "domains", domains)
    pairs = []
    for k, ext in enumerate(truth.extent_cells):
        ext = set(ext)
        for d in doms:
            ov = len(ext & set(d.cells))
            if ov:
                pairs.append((-ov, k, d.id))
    out = {k: None for k in range(len(truth.extent_cells))}
    used = set()
    for _, k, did in sorted(pairs):
        if out[k] is None and did not in used:
            out[k] = did
            used.add(did)
    return out


def recovery_report(domains, truth: GroundTruth) -> list:
    """Per ground-truth domain: matched id, recovered fractions, precision, homogeneity.

    ``recovered`` is the share of ground-truth cells inside the matched domain;
    ``recovered_exclusive`` restricts to cells that belong to no other
    ground-truth domain.
    """
    doms = {d.id: d for d in getattr(domains, "domains", domains)}
    match = match_domains(list(doms.values()), truth)
    extents = [set(e) for e in truth.extent_cells]
    rows = []
    for k, ext in enumerate(extents):
        others = set().union(*(e for j, e in enumerate(extents) if j != k))
        excl = ext - others
        d = doms.get(match[k])
        cells = set(d.cells) if d else set()
        rows.append({
            "truth": k, "domain": match[k], "size": len(cells), "truth_size": len(ext),
            "recovered": len(cells & ext) / len(ext),
            "recovered_exclusive": len(cells & excl) / len(excl) if excl else None,
            "precision": len(cells & ext) / len(cells) if cells else None,
            "homogeneity": d.homogeneity if d else None,
        })
    return rows
