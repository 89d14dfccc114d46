"""Grid kernels with a numba fast path and a pure-numpy fallback.

Backend selection happens once at import time from the MIA_AUDIT_BACKEND
environment variable: "numba" requires the JIT path, "numpy" forces the
fallback, unset prefers numba when importable. `benchmarks/bench_kernels.py`
compares the two paths head to head.
"""
from __future__ import annotations

import os

from . import _reference

_requested = os.environ.get("MIA_AUDIT_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"MIA_AUDIT_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

_impl = None
if _requested in ("", "numba"):
    try:
        from . import _jit as _impl
    except ImportError:
        if _requested == "numba":
            raise
        _impl = None
if _impl is None:
    _impl = _reference

ACTIVE_BACKEND = "numpy" if _impl is _reference else "numba"

column_moments = _impl.column_moments
pooled_standardize = _impl.pooled_standardize
loo_standardize = _impl.loo_standardize
per_column_empirical = _impl.per_column_empirical
fisher_yates_indices = _impl.fisher_yates_indices

__all__ = [
    "ACTIVE_BACKEND",
    "column_moments",
    "pooled_standardize",
    "loo_standardize",
    "per_column_empirical",
    "fisher_yates_indices",
]
