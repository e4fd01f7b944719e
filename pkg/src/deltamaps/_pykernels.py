"""NumPy implementations of the numeric kernels.

Same signatures as the compiled ``_ckernels`` module; used when the
extension is not built or ``DELTAMAPS_PURE_PYTHON=1`` is set.
"""
import numpy as np


def lagged_products(a, b, tau_max):
    """Raw lagged products ``sum_t a[t] * b[t + tau]`` for tau in [-tau_max, tau_max].

    ``a`` and ``b`` are already centered.  Negative lags use
    ``sum_t b[t] * a[t + |tau|]``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    T = a.shape[0]
    out = np.empty(2 * tau_max + 1)
    for tau in range(tau_max + 1):
        out[tau_max + tau] = np.dot(a[:T - tau], b[tau:])
        out[tau_max - tau] = np.dot(b[:T - tau], a[tau:])
    return out


def lagged_products_batch(X, pairs, tau_max):
    """Rows of :func:`lagged_products` for every ``(i, j)`` in ``pairs``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    T = X.shape[1]
    out = np.empty((pairs.shape[0], 2 * tau_max + 1))
    if pairs.shape[0] == 0:
        return out
    A = X[pairs[:, 0]]
    B = X[pairs[:, 1]]
    for tau in range(tau_max + 1):
        out[:, tau_max + tau] = np.einsum("ij,ij->i", A[:, :T - tau], B[:, tau:])
        out[:, tau_max - tau] = np.einsum("ij,ij->i", B[:, :T - tau], A[:, tau:])
    return out


def autocovariance_sums(x):
    """``sum_t x[t] * x[t + k]`` for k = 0 .. T-1 (x already centered)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    T = x.shape[0]
    return np.correlate(x, x, mode="full")[T - 1:].copy()


def theil_sen_slope(x):
    """Median of all pairwise slopes (x[j] - x[i]) / (j - i), i < j."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    T = x.shape[0]
    i, j = np.triu_indices(T, k=1)
    slopes = (x[j] - x[i]) / (j - i)
    return float(np.median(slopes))


def theil_sen_slopes(X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    T = X.shape[1]
    i, j = np.triu_indices(T, k=1)
    dt = (j - i).astype(np.float64)
    out = np.empty(X.shape[0])
    for row in range(X.shape[0]):
        x = X[row]
        out[row] = np.median((x[j] - x[i]) / dt)
    return out
