"""Hot kernels, compiled when available.

The Cython extension is preferred; setting ``MLDP_PURE_PYTHON=1`` (or a missing
build) selects the numpy implementation. Both expose the same functions and the
same random streams.
"""
import os

from . import _pykernels as python_kernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("MLDP_PURE_PYTHON", "") in ("", "0"):
    active = compiled_kernels
else:
    active = python_kernels

BACKEND = active.BACKEND
fill_normals = active.fill_normals
scalar_linear_block = active.scalar_linear_block
plaplace_flux_div = active.plaplace_flux_div
stream_key = active.stream_key

__all__ = [
    "BACKEND",
    "compiled_kernels",
    "python_kernels",
    "fill_normals",
    "scalar_linear_block",
    "plaplace_flux_div",
    "stream_key",
]
