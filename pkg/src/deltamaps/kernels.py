"""Backend selection for the numeric kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``DELTAMAPS_PURE_PYTHON`` is set to a true value, the
NumPy versions in :mod:`deltamaps._pykernels` are used.  Both backends agree
to within floating-point summation order.
"""
import os

from . import _pykernels

_FORCE_PURE = os.environ.get("DELTAMAPS_PURE_PYTHON", "").lower() in ("1", "true", "yes")

try:
    from . import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

python = _pykernels
BACKEND = "python" if (_FORCE_PURE or compiled is None) else "compiled"
_impl = python if BACKEND == "python" else compiled

lagged_products = _impl.lagged_products
lagged_products_batch = _impl.lagged_products_batch
autocovariance_sums = _impl.autocovariance_sums
theil_sen_slope = _impl.theil_sen_slope
theil_sen_slopes = _impl.theil_sen_slopes


def available_backends():
    """Mapping of backend name to kernel module, for tests and benchmarks."""
    out = {"python": python}
    if compiled is not None:
        out["compiled"] = compiled
    return out
