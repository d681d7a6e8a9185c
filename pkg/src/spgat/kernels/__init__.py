"""Hot inner loops, dispatched to numba when available.

Set ``SPGAT_DISABLE_NUMBA=1`` to force the pure-numpy path. The choice is made
once at import time and exposed as ``BACKEND``.
"""

import os

from . import _numpy

_FLAG = os.environ.get("SPGAT_DISABLE_NUMBA", "").strip().lower()
_disabled = _FLAG not in ("", "0", "false", "no", "off")

if _disabled:
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # numba not installed
        _impl = _numpy
        BACKEND = "numpy"

leaky_relu_fwd = _impl.leaky_relu_fwd
leaky_relu_bwd = _impl.leaky_relu_bwd
shift_sum = _impl.shift_sum
shift_stack = _impl.shift_stack
add_bias_ = _impl.add_bias_
channel_sum = _impl.channel_sum
bn_stats = _impl.bn_stats
bn_forward = _impl.bn_forward
bn_backward = _impl.bn_backward

__all__ = [
    "BACKEND",
    "leaky_relu_fwd",
    "leaky_relu_bwd",
    "shift_sum",
    "shift_stack",
    "add_bias_",
    "channel_sum",
    "bn_stats",
    "bn_forward",
    "bn_backward",
]
