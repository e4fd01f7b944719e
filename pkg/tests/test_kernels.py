import itertools

import numpy as np
import pytest

from deltamaps import kernels


def naive_lagged(a, b, tau_max):
    T = len(a)
    out = []
    for tau in range(-tau_max, tau_max + 1):
        if tau >= 0:
            out.append(sum(a[t] * b[t + tau] for t in range(T - tau)))
        else:
            out.append(sum(b[t] * a[t - tau] for t in range(T + tau)))
    return np.array(out)


def naive_theil_sen(x):
    slopes = [(x[j] - x[i]) / (j - i) for i, j in itertools.combinations(range(len(x)), 2)]
    return float(np.median(slopes))


def test_backend_selected():
    assert kernels.BACKEND in kernels.available_backends()


def test_lagged_products(backend):
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 40))
    assert np.allclose(backend.lagged_products(a, b, 7), naive_lagged(a, b, 7), atol=1e-12)


def test_lagged_products_batch(backend):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((5, 30))
    pairs = [(0, 1), (3, 2), (4, 4)]
    out = backend.lagged_products_batch(X, pairs, 4)
    for k, (i, j) in enumerate(pairs):
        assert np.allclose(out[k], naive_lagged(X[i], X[j], 4), atol=1e-12)


def test_autocovariance_sums(backend):
    rng = np.random.default_rng(3)
    x = rng.standard_normal(25)
    expected = [sum(x[t] * x[t + k] for t in range(25 - k)) for k in range(25)]
    assert np.allclose(backend.autocovariance_sums(x), expected, atol=1e-12)


@pytest.mark.parametrize("T", [3, 4, 7, 30, 31])
def test_theil_sen(backend, T):
    rng = np.random.default_rng(T)
    x = rng.standard_normal(T)
    assert backend.theil_sen_slope(x) == pytest.approx(naive_theil_sen(x), abs=1e-12)
    X = rng.standard_normal((3, T))
    got = backend.theil_sen_slopes(X)
    assert np.allclose(got, [naive_theil_sen(r) for r in X], atol=1e-12)


def test_backends_agree():
    backs = kernels.available_backends()
    if len(backs) < 2:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(4)
    X = rng.standard_normal((6, 200))
    pairs = [(i, j) for i in range(6) for j in range(i + 1, 6)]
    c, p = backs["compiled"], backs["python"]
    assert np.allclose(c.lagged_products_batch(X, pairs, 20),
                       p.lagged_products_batch(X, pairs, 20), atol=1e-10)
    assert np.array_equal(c.theil_sen_slopes(X), p.theil_sen_slopes(X))
    assert np.allclose(c.autocovariance_sums(X[0]), p.autocovariance_sums(X[0]), atol=1e-10)
