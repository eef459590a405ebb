"""Hot element-local kernels.

The compiled extension is used when it is importable; otherwise (or when the
environment variable ``DGCALC_PURE_PYTHON`` is set to a non-empty value other
than ``0``) the numpy implementation is selected.
"""
import os

import numpy as np

from . import _pykernels

_force_py = os.environ.get("DGCALC_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure-Python kernels requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def apply_local(self_blocks, nbr_idx, nbr_blocks, beta, extra, minv):
    """Dispatch to the selected backend with contiguous float64/int64 inputs."""
    if _impl is _pykernels:
        return _pykernels.apply_local(self_blocks, nbr_idx, nbr_blocks, beta, extra, minv)
    return _impl.apply_local(
        np.ascontiguousarray(self_blocks, dtype=np.float64),
        np.ascontiguousarray(nbr_idx, dtype=np.int64),
        np.ascontiguousarray(nbr_blocks, dtype=np.float64),
        np.ascontiguousarray(beta, dtype=np.float64),
        np.ascontiguousarray(extra, dtype=np.float64),
        np.ascontiguousarray(minv, dtype=np.float64),
    )


def quad_values(coeffs, table):
    if _impl is _pykernels:
        return _pykernels.quad_values(coeffs, table)
    return _impl.quad_values(
        np.ascontiguousarray(coeffs, dtype=np.float64), np.ascontiguousarray(table, dtype=np.float64)
    )


__all__ = ["apply_local", "quad_values", "BACKEND"]
