"""Backend selection for the numeric kernels.

The compiled extension is used when it imports; otherwise the NumPy module is
used.  Set ``SVI_AUDIT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("SVI_AUDIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "compiled"


def available_backends():
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["compiled"] = _compiled
    return out
