"""Correlation and homogeneity mathematics.

All standard deviations use the 1/T convention, so the zero-lag
cross-correlation is exactly the sample Pearson coefficient.  Lagged
cross-correlations keep the T denominator (the estimator shrinks with |tau|)
unless ``unbiased=True`` is requested.

Homogeneity of a cell set is computed from the sum of the standardized
series of its members: with ``z_m`` scaled so that ``z_m . z_m = T``,

    sum_{m<n in A} r_mn = (|sum_m z_m|^2 / T - |A|) / 2,

which lets set operations update pair sums in O(T) without a pairwise
correlation matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.stats import norm

from . import kernels
from .errors import ConfigError, DataError, DegenerateSeriesError

DEGENERATE_VARIANCE = 1e-12


def _as_matrix(data):
    return np.asarray(getattr(data, "data", data), dtype=np.float64)


def _check_series(x, name="series"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise DataError(f"{name} must be 1-D with at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} contains non-finite values")
    return x


def _centered(x, name="series"):
    x = _check_series(x, name)
    xc = x - x.mean()
    var = float(np.dot(xc, xc)) / x.size
    if var < DEGENERATE_VARIANCE:
        raise DegenerateSeriesError(f"{name} has zero variance")
    return xc, np.sqrt(var)


def standardize(data):
    """Row-standardize ``data`` to zero mean and 1/T unit variance.

    Returns ``(z, degenerate)``; degenerate rows (variance below
    ``DEGENERATE_VARIANCE``) are set to zero and flagged.
    """
    X = _as_matrix(data)
    squeeze = X.ndim == 1
    X = np.atleast_2d(X)
    centered = X - X.mean(axis=1, keepdims=True)
    var = np.einsum("ij,ij->i", centered, centered) / X.shape[1]
    degenerate = ~(var >= DEGENERATE_VARIANCE)
    sd = np.sqrt(np.where(degenerate, 1.0, var))
    z = centered / sd[:, None]
    z[degenerate] = 0.0
    if squeeze:
        return z[0], bool(degenerate[0])
    return z, degenerate


def pearson_zero_lag(x, y) -> float:
    """Zero-lag Pearson cross-correlation, clamped to [-1, 1]."""
    xc, sx = _centered(x, "x")
    yc, sy = _centered(y, "y")
    if xc.size != yc.size:
        raise DataError("series lengths differ")
    r = float(np.dot(xc, yc)) / (xc.size * sx * sy)
    return min(1.0, max(-1.0, r))


def lagged_cross_corr(x, y, tau: int, unbiased: bool = False) -> float:
    """Cross-correlation of ``x(t)`` with ``y(t + tau)``.

    Positive ``tau`` means ``x`` precedes ``y``; ``r_xy(-tau) == r_yx(tau)``.
    """
    xc, sx = _centered(x, "x")
    yc, sy = _centered(y, "y")
    T = xc.size
    if yc.size != T:
        raise DataError("series lengths differ")
    tau = int(tau)
    if abs(tau) >= T:
        raise ConfigError(f"|tau|={abs(tau)} must be smaller than T={T}")
    if tau >= 0:
        s = float(np.dot(xc[:T - tau], yc[tau:]))
    else:
        s = float(np.dot(yc[:T + tau], xc[-tau:]))
    denom = (T - abs(tau)) if unbiased else T
    return min(1.0, max(-1.0, s / (denom * sx * sy)))


def autocorrelation(x, tau: int) -> float:
    return lagged_cross_corr(x, x, abs(int(tau)))


def acf(x) -> np.ndarray:
    """Autocorrelations at lags 0 .. T-1 (T denominator)."""
    xc, sx = _centered(x)
    sums = kernels.autocovariance_sums(xc)
    return sums / (xc.size * sx * sx)


def bartlett_sum(acf_x, acf_y) -> float:
    """``sum_{k=-(T-1)}^{T-1} r_xx(k) r_yy(k)`` from one-sided autocorrelations."""
    acf_x = np.asarray(acf_x)
    acf_y = np.asarray(acf_y)
    return float(acf_x[0] * acf_y[0] + 2.0 * np.dot(acf_x[1:], acf_y[1:]))


def bartlett_variance(x, y, tau: int = 0) -> float:
    """Variance of r_xy(tau) under the null of no coupling."""
    ax = acf(x)
    ay = acf(y)
    T = ax.size
    if ay.size != T:
        raise DataError("series lengths differ")
    if abs(int(tau)) >= T:
        raise ConfigError(f"|tau| must be smaller than T={T}")
    return max(0.0, bartlett_sum(ax, ay) / (T - abs(int(tau))))


def z_and_p(r, variance, sidedness: str = "two"):
    """Standard-normal statistic and p-value for a correlation.

    Works elementwise on arrays.  ``sidedness`` is ``"one"`` (upper tail)
    or ``"two"``.
    """
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise DataError("variance must be positive")
    z = np.asarray(r, dtype=float) / np.sqrt(variance)
    if sidedness == "one":
        p = norm.sf(z)
    elif sidedness == "two":
        p = 2.0 * norm.sf(np.abs(z))
    else:
        raise ConfigError("sidedness must be 'one' or 'two'")
    p = np.clip(p, 0.0, 1.0)
    if z.ndim == 0:
        return float(z), float(p)
    return z, p


@dataclass
class Correlogram:
    """Lagged cross-correlations ``r[k]`` at ``lags[k]`` in [-tau_max, tau_max]."""

    tau_max: int
    r: np.ndarray
    variance: np.ndarray
    z: np.ndarray
    p: np.ndarray
    significant: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.significant is None:
            self.significant = np.zeros(self.r.shape, dtype=bool)

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.tau_max, self.tau_max + 1)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def at(self, tau: int) -> int:
        """Array index of lag ``tau``."""
        return int(tau) + self.tau_max

    def mirrored(self) -> "Correlogram":
        """Correlogram of the swapped pair (y, x)."""
        return Correlogram(self.tau_max, self.r[::-1].copy(), self.variance[::-1].copy(),
                           self.z[::-1].copy(), self.p[::-1].copy(),
                           self.significant[::-1].copy())


def correlogram_from_parts(products, T, sd_a, sd_b, bsum, tau_max, unbiased=False):
    lags = np.arange(-tau_max, tau_max + 1)
    span = T - np.abs(lags)
    denom = span if unbiased else T
    r = np.clip(products / (denom * sd_a * sd_b), -1.0, 1.0)
    variance = np.maximum(bsum / span, 0.0)
    if np.any(variance <= 0):
        raise DegenerateSeriesError("Bartlett variance is zero")
    z, p = z_and_p(r, variance, "two")
    return Correlogram(tau_max, r, variance, z, p)


def correlogram(x, y, tau_max: int, unbiased: bool = False) -> Correlogram:
    """Cross-correlations, Bartlett variances, z and two-sided p over all lags."""
    xc, sx = _centered(x, "x")
    yc, sy = _centered(y, "y")
    T = xc.size
    if yc.size != T:
        raise DataError("series lengths differ")
    if not 0 <= tau_max < T:
        raise ConfigError("tau_max must be in [0, T)")
    products = kernels.lagged_products(xc, yc, tau_max)
    bsum = bartlett_sum(acf(x), acf(y))
    return correlogram_from_parts(products, T, sx, sy, bsum, tau_max, unbiased)


def set_homogeneity(data, cells) -> float:
    """Average pairwise zero-lag correlation over distinct cells of ``cells``."""
    X = _as_matrix(data)
    cells = sorted(set(int(c) for c in cells))
    if len(cells) < 2:
        raise DataError("homogeneity needs at least two cells")
    z, degenerate = standardize(X[cells])
    if np.any(degenerate):
        bad = cells[int(np.flatnonzero(degenerate)[0])]
        raise DegenerateSeriesError(f"cell {bad} has zero variance", cell=bad)
    T = X.shape[1]
    r = np.clip(z @ z.T / T, -1.0, 1.0)
    n = len(cells)
    return float((r.sum() - np.trace(r)) / (n * (n - 1)))


def local_homogeneity(data, g, i: int, K: int) -> float:
    """Average pairwise correlation within the K-neighborhood of cell ``i``."""
    from .grid import k_neighborhood

    return set_homogeneity(data, k_neighborhood(g, i, K))


def homogeneity_field(z, table) -> np.ndarray:
    """Local homogeneity for every row of a neighborhood table.

    ``z`` holds standardized series; rows of ``table`` equal to -1 yield NaN.
    """
    z = np.asarray(z)
    table = np.asarray(table)
    T = z.shape[1]
    k1 = table.shape[1]
    out = np.full(table.shape[0], np.nan)
    valid = table[:, 0] >= 0
    if k1 < 2:
        return out
    npairs = k1 * (k1 - 1) / 2
    idx = np.flatnonzero(valid)
    for start in range(0, idx.size, 4096):
        chunk = idx[start:start + 4096]
        u = z[table[chunk]].sum(axis=1)
        pair_sum = (np.einsum("ij,ij->i", u, u) / T - k1) / 2.0
        out[chunk] = pair_sum / npairs
    return out


def pair_sum_of(z, cells) -> tuple:
    """``(U, S)``: summed standardized series and pairwise correlation sum."""
    cells = list(cells)
    T = z.shape[1]
    if not cells:
        return np.zeros(T), 0.0
    u = z[cells].sum(axis=0)
    return u, (float(np.dot(u, u)) / T - len(cells)) / 2.0


class PairSumCache:
    """Running pairwise-correlation sum of a cell set over standardized rows ``z``.

    Additions follow set semantics.  ``add`` records a snapshot so that
    ``rollback`` restores the previous state exactly.
    """

    def __init__(self, z, cells=()):
        self.z = z
        self.T = z.shape[1]
        self.members = set(int(c) for c in cells)
        self.u, self.pair_sum = pair_sum_of(z, sorted(self.members))
        self._history = []

    def __len__(self):
        return len(self.members)

    @property
    def homogeneity(self) -> float:
        n = len(self.members)
        if n < 2:
            return float("nan")
        return self.pair_sum / comb(n, 2)

    def _union_terms(self, cells):
        new = sorted(set(int(c) for c in cells) - self.members)
        u_new, s_new = pair_sum_of(self.z, new)
        cross = float(np.dot(self.u, u_new)) / self.T
        return new, u_new, self.pair_sum + cross + s_new

    def with_cells(self, cells) -> float:
        """Homogeneity of the union with ``cells``, without modifying the cache."""
        new, _, total = self._union_terms(cells)
        n = len(self.members) + len(new)
        if n < 2:
            return float("nan")
        return total / comb(n, 2)

    def add(self, cells) -> float:
        new, u_new, total = self._union_terms(cells)
        self._history.append((set(self.members), self.u, self.pair_sum))
        self.members.update(new)
        self.u = self.u + u_new
        self.pair_sum = total
        return self.homogeneity

    def rollback(self):
        if not self._history:
            raise RuntimeError("nothing to roll back")
        self.members, self.u, self.pair_sum = self._history.pop()

    def verify(self, tol=1e-9):
        """Raise if the cached sum drifted from a direct recomputation."""
        _, direct = pair_sum_of(self.z, sorted(self.members))
        if abs(direct - self.pair_sum) > tol * max(1.0, abs(direct)):
            raise RuntimeError(f"inconsistent pair-sum cache: {self.pair_sum} vs {direct}")
