import numpy as np
import pytest

from deltamaps import kernels
from deltamaps.grid import build_grid
from deltamaps.ingest import Field

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    return kernels.available_backends()[request.param]


@pytest.fixture(scope="session")
def synthetic_scene():
    from deltamaps.synth import SyntheticSpec, generate

    return generate(SyntheticSpec(rng_seed=0))


def make_field(data, rows=None, cols=None):
    data = np.asarray(data, dtype=float)
    if rows is None:
        rows, cols = 1, data.shape[0]
    return Field(build_grid(rows, cols), data, "step", [])


def ar1(rng, T, phi, n=None, burn=100):
    shape = (T + burn,) if n is None else (n, T + burn)
    eps = rng.standard_normal(shape)
    y = np.empty_like(eps)
    y[..., 0] = eps[..., 0]
    for t in range(1, eps.shape[-1]):
        y[..., t] = phi * y[..., t - 1] + eps[..., t]
    return y[..., burn:]
