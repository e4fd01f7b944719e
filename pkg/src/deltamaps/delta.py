"""Data-driven homogeneity threshold from a random sample of cell pairs."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, DataError, NoSignalError
from .stats import bartlett_sum, standardize
from . import kernels

MIN_SIGNIFICANT = 20


@dataclass
class DeltaEstimate:
    delta: float
    alpha: float
    n_pairs_sampled: int
    n_significant: int
    rng_seed: int
    z_threshold: float

    def to_dict(self):
        return asdict(self)


def significance_cutoff(alpha: float) -> float:
    """One-sided z threshold for level ``alpha``."""
    return float(norm.isf(alpha))


def _sample_pairs(rng, n_valid, n_pairs):
    total = n_valid * (n_valid - 1) // 2
    n_pairs = min(n_pairs, total)
    flat = np.sort(rng.choice(total, size=n_pairs, replace=False))
    # decode flat index k into (i, j), i < j, row-major over the upper triangle
    i = (n_valid - 2 - np.floor(np.sqrt(-8.0 * flat + 4.0 * n_valid * (n_valid - 1) - 7) / 2.0
                                 - 0.5)).astype(np.int64)
    i = np.clip(i, 0, n_valid - 2)

    def row_start(r):
        return r * (2 * n_valid - r - 1) // 2

    # guard against rounding in the square root
    i = np.where(row_start(i) > flat, i - 1, i)
    i = np.where(row_start(i + 1) <= flat, i + 1, i)
    start = row_start(i)
    j = flat - start + i + 1
    return i, j.astype(np.int64)


def estimate_delta(field, alpha: float = 0.01, n_pairs: int = 10_000, rng_seed: int = 0,
                   min_significant: int = MIN_SIGNIFICANT) -> DeltaEstimate:
    """Average of the sampled zero-lag correlations that pass a one-sided z-test.

    The null variance of each correlation is Bartlett's estimate at lag 0.
    Raises :class:`NoSignalError` when fewer than ``min_significant`` sampled
    pairs are significant.
    """
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if n_pairs < 100:
        raise ConfigError("n_pairs must be >= 100")
    data = np.asarray(getattr(field, "data", field), dtype=np.float64)
    z, degenerate = standardize(data)
    valid = np.flatnonzero(~degenerate)
    if valid.size < 2:
        raise DataError("need at least two non-degenerate cells")
    T = data.shape[1]
    rng = np.random.default_rng(rng_seed)
    ii, jj = _sample_pairs(rng, valid.size, n_pairs)
    a, b = valid[ii], valid[jj]
    r = np.clip(np.einsum("ij,ij->i", z[a], z[b]) / T, -1.0, 1.0)

    acfs = {}
    for c in np.union1d(a, b):
        acfs[int(c)] = kernels.autocovariance_sums(z[c]) / T
    var = np.array([bartlett_sum(acfs[int(x)], acfs[int(y)]) for x, y in zip(a, b)]) / T
    var = np.maximum(var, np.finfo(float).tiny)
    zstat = r / np.sqrt(var)
    cutoff = significance_cutoff(alpha)
    sig = zstat > cutoff
    n_sig = int(sig.sum())
    if n_sig < max(1, min_significant):
        raise NoSignalError(
            f"only {n_sig} of {r.size} sampled pairs are significant at alpha={alpha}; "
            "supply delta directly")
    delta = float(r[sig].mean())
    if not 0 < delta < 1:
        raise NoSignalError(f"estimated delta {delta} outside (0, 1)")
    return DeltaEstimate(delta, alpha, int(r.size), n_sig, int(rng_seed), cutoff)
