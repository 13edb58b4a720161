"""Hot kernels with a numba path and a pure-numpy fallback.

The active backend is chosen once at import: numba when it imports cleanly,
numpy otherwise. Set ``CLORA_NUMBA=0`` to force the numpy path. Both
implementations stay importable as ``numpy_impl`` and ``numba_impl`` (the
latter is ``None`` without numba) so tests and the benchmark can compare
them directly.
"""

import os

from . import _numpy as numpy_impl

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

_wanted = os.environ.get("CLORA_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")
active = numba_impl if (_wanted and numba_impl is not None) else numpy_impl
BACKEND = "numba" if active is numba_impl else "numpy"

layernorm_forward = active.layernorm_forward
layernorm_backward = active.layernorm_backward
softmax_forward = active.softmax_forward
softmax_backward = active.softmax_backward
gelu_forward = active.gelu_forward
gelu_backward = active.gelu_backward
upsample_nearest_backward = active.upsample_nearest_backward
confusion_accumulate = active.confusion_accumulate
rasterize = active.rasterize
pareto_mask = active.pareto_mask

__all__ = [
    "BACKEND",
    "numpy_impl",
    "numba_impl",
    "layernorm_forward",
    "layernorm_backward",
    "softmax_forward",
    "softmax_backward",
    "gelu_forward",
    "gelu_backward",
    "upsample_nearest_backward",
    "confusion_accumulate",
    "rasterize",
    "pareto_mask",
]
