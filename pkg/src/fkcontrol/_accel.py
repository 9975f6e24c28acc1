"""Numba switch.

Set ``FKCONTROL_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba
is missing the numpy kernels are used as well.
"""
import os

_disabled = os.environ.get("FKCONTROL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError("numba disabled by FKCONTROL_DISABLE_NUMBA")
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        # plain-python stand-in; only used for definitions never called on the hot path
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


_use_numba = HAVE_NUMBA


def numba_enabled():
    return _use_numba


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels at runtime (benchmarks, tests)."""
    global _use_numba
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is unavailable")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def backend():
    return "numba" if _use_numba else "numpy"
