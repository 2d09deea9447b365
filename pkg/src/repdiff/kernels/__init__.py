"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations exist: numba-jitted loops
(`numba_ops`) and pure numpy (`numpy_ops`). The active one is chosen at
import time from the ``REPDIFF_BACKEND`` environment variable:

    REPDIFF_BACKEND=numba   force numba (error if numba is missing)
    REPDIFF_BACKEND=numpy   force the pure-numpy fallback
    unset / auto            numba when importable, else numpy

Both backends do their matrix products through numpy matmul, so BLAS
always handles the GEMMs; the backends differ in how data gets to and
from those products (jitted fused loops and a packing-free conv
formulation versus plain numpy slicing plus im2col).
``benchmarks/bench_kernels.py`` compares the two paths. Results agree to
float rounding, not bitwise; determinism contracts hold within a
backend.
"""

import os

from repdiff.errors import ValidationError

from . import numpy_ops

KERNEL_NAMES = (
    "im2col3",
    "col2im3",
    "conv3_fwd",
    "conv3_bwd",
    "groupnorm_fwd",
    "groupnorm_bwd",
    "silu_fwd",
    "silu_bwd",
)

_BACKENDS = {"numpy": numpy_ops}
try:
    from . import numba_ops

    _BACKENDS["numba"] = numba_ops
except ImportError:
    numba_ops = None

_active_name = None
_active = None


def available_backends():
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> str:
    """Select the kernel implementation; returns the resolved name."""
    global _active_name, _active
    if name == "auto":
        name = "numba" if "numba" in _BACKENDS else "numpy"
    if name not in _BACKENDS:
        raise ValidationError(
            f"unknown kernel backend {name!r}; available: {', '.join(available_backends())}"
        )
    _active_name = name
    _active = _BACKENDS[name]
    return name


def active_backend() -> str:
    return _active_name


set_backend(os.environ.get("REPDIFF_BACKEND", "auto"))


def im2col3(x):
    return _active.im2col3(x)


def col2im3(cols, n, h, w, c):
    return _active.col2im3(cols, n, h, w, c)


def conv3_fwd(x, w, b):
    return _active.conv3_fwd(x, w, b)


def conv3_bwd(dy, x, w):
    return _active.conv3_bwd(dy, x, w)


def groupnorm_fwd(x3, gamma, beta, groups, eps):
    return _active.groupnorm_fwd(x3, gamma, beta, groups, eps)


def groupnorm_bwd(dy3, x3, gamma, mean, rstd, groups):
    return _active.groupnorm_bwd(dy3, x3, gamma, mean, rstd, groups)


def silu_fwd(x):
    return _active.silu_fwd(x)


def silu_bwd(dy, x):
    return _active.silu_bwd(dy, x)
