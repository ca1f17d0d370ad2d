"""Hot array kernels with two interchangeable lanes.

The compiled Cython lane (``_fastk``) is used when the extension was built;
otherwise the pure-numpy lane is used. ``YIELDNET_KERNELS=numpy`` or
``YIELDNET_KERNELS=cython`` in the environment forces a lane at import time.
"""

import os

from . import numpy_backend

try:
    from . import _fastk
except ImportError:
    _fastk = None

_LANES = {"numpy": numpy_backend}
if _fastk is not None:
    _LANES["cython"] = _fastk


def available_backends():
    return sorted(_LANES)


def get_backend(name):
    if name not in _LANES:
        raise ValueError(f"kernel backend {name!r} not available (have {available_backends()})")
    return _LANES[name]


_forced = os.environ.get("YIELDNET_KERNELS")
if _forced:
    _active = get_backend(_forced)
else:
    _active = _fastk if _fastk is not None else numpy_backend


def backend_name():
    return _active.NAME


def conv1d_forward(x, w, b):
    return _active.conv1d_forward(x, w, b)


def conv1d_backward(x, w, gy):
    return _active.conv1d_backward(x, w, gy)


def avgpool2_forward(x):
    return _active.avgpool2_forward(x)


def avgpool2_backward(gy, length):
    return _active.avgpool2_backward(gy, length)
