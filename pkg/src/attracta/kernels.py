"""Backend selection for the hot kernels.

The compiled extension ``attracta._kernels`` is used when it was built;
otherwise (or when ``ATTRACTA_PURE_PYTHON=1``) the numpy fallback is used.
``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

_FORCE_PURE = os.environ.get("ATTRACTA_PURE_PYTHON", "").strip() not in ("", "0")

try:
    if _FORCE_PURE:
        raise ImportError("pure python requested")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

dense_eval = _impl.dense_eval
poly_eval = _impl.poly_eval
stage_state = _impl.stage_state
error_norm = _impl.error_norm
panel_nodes = _impl.panel_nodes


def compiled_available():
    """True if the compiled extension can be imported at all."""
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
