"""Pick the compiled smoothing kernel when it is importable.

Set ``SIVCM_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("SIVCM_PURE_PYTHON", "").strip() not in ("", "0"):
    local_linear_batch = _kernels_py.local_linear_batch
    BACKEND = "python"
else:
    try:
        from ._kernels import local_linear_batch
        BACKEND = "cython"
    except ImportError:
        local_linear_batch = _kernels_py.local_linear_batch
        BACKEND = "python"
