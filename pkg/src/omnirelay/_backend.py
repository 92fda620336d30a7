"""Pick the integration kernel implementation at import time.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``OMNIRELAY_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

_requested = os.environ.get("OMNIRELAY_BACKEND", "auto").lower()

kernels = _kernels_py
if _requested != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _requested == "cython":
            raise
    else:
        kernels = _compiled

BACKEND = kernels.BACKEND
