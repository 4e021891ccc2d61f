"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``PARTSTORE_NUMBA`` is set to ``0``. Both paths return identical
results; :func:`use_backend` switches at runtime (tests and benchmarks).
"""

import os

from . import _numpy

_active = None
BACKEND = "numpy"


def _numba_module():
    from . import _numba

    return _numba


def use_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend name."""
    global _active, BACKEND
    previous = BACKEND
    if name == "numba":
        _active = _numba_module()
    elif name == "numpy":
        _active = _numpy
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name
    return previous


def numba_available() -> bool:
    try:
        _numba_module()
    except ImportError:
        return False
    return True


if os.environ.get("PARTSTORE_NUMBA", "1") != "0" and numba_available():
    use_backend("numba")
else:
    use_backend("numpy")


def shamir_eval(coeffs, xs):
    return _active.shamir_eval(coeffs, xs)


def shamir_interpolate(xs, ys):
    return _active.shamir_interpolate(xs, ys)


def count_trials(chat_peers, active, p, q, unique, ts_enabled, part_thr, ts_thr):
    return _active.count_trials(chat_peers, active, p, q, unique, ts_enabled, part_thr, ts_thr)
