"""Backend selection for the hot kernels.

The compiled extension is used when it imports cleanly; setting the
environment variable ``GEOTESS_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("GEOTESS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

STATUS_OK = _kernels_py.STATUS_OK
STATUS_VERTEX = _kernels_py.STATUS_VERTEX

trace_flow = _impl.trace_flow
segment_intersections = _impl.segment_intersections
segment_intersections_brute = _kernels_py.segment_intersections_brute

__all__ = [
    "BACKEND", "STATUS_OK", "STATUS_VERTEX", "trace_flow",
    "segment_intersections", "segment_intersections_brute",
]
