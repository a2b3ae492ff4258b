"""Kernel backend selection.

The compiled ``_core`` extension is used when importable; otherwise the
NumPy twins in ``_pykernels``.  Set ``MCKV_BACKEND=python`` to force the
fallback (benchmarks and cross-checks do this).
"""
import os

from mckv import _pykernels as python_kernels

compiled_kernels = None
if os.environ.get("MCKV_BACKEND", "").lower() != "python":
    try:
        from mckv import _core as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = kernels.BACKEND

__all__ = ["kernels", "python_kernels", "compiled_kernels", "BACKEND"]
