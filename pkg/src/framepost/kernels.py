"""Backend selection for the per-frame kernels.

The compiled Cython module is used when it was built; otherwise, or when
``FRAMEPOST_PURE_PYTHON=1`` is set, the numpy fallback is used.
"""
import os

if os.environ.get("FRAMEPOST_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import peak_update, sq_norms, splitmix64
    BACKEND = "python"
else:
    try:
        from ._kernels import peak_update, sq_norms, splitmix64
        BACKEND = "cython"
    except ImportError:
        from ._kernels_py import peak_update, sq_norms, splitmix64
        BACKEND = "python"

__all__ = ["BACKEND", "peak_update", "sq_norms", "splitmix64"]
