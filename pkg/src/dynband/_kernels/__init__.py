"""Hot pixel loops, backed by a compiled extension when available.

Set ``DYNBAND_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("DYNBAND_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

dilate_square = _impl.dilate_square
min_eig_response = _impl.min_eig_response
grid_best = _impl.grid_best
classify_rules = _impl.classify_rules
count_inliers = _impl.count_inliers
inlier_mask = python_backend.inlier_mask

__all__ = ["BACKEND", "dilate_square", "min_eig_response", "grid_best", "classify_rules", "count_inliers", "inlier_mask",
           "python_backend", "compiled_backend"]
