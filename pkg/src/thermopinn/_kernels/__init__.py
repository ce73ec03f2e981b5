"""Hot kernels with a compiled core and a numpy fallback.

The Cython extension ``_core`` is used when it was built; otherwise, or when
``THERMOPINN_PURE=1`` is set, the numpy implementations in ``_fallback`` are
used. ``BACKEND`` names the active one.
"""

import os

from . import _fallback

fallback = _fallback

try:
    if os.environ.get("THERMOPINN_PURE", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from . import _core as _active

    BACKEND = "cython"
except ImportError:
    _active = _fallback
    BACKEND = "numpy"

mlp_value = _active.mlp_value
mlp_forward = _active.mlp_forward
mlp_backward = _active.mlp_backward
thomas = _active.thomas

__all__ = ["BACKEND", "fallback", "mlp_value", "mlp_forward", "mlp_backward", "thomas"]
