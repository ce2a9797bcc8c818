"""Selects the compiled core when importable, the numpy fallback otherwise.

Set ``DPPTRANSFER_PURE=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if not os.environ.get("DPPTRANSFER_PURE"):
    try:
        from . import _core as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

jacobi_eigh = _impl.jacobi_eigh
sample_batch = _impl.sample_batch
subset_determinants = _impl.subset_determinants

IMPLEMENTATIONS = {"python": _fallback}
if BACKEND == "cython":
    IMPLEMENTATIONS["cython"] = _impl
