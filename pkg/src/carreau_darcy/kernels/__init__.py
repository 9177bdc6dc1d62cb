"""Hot element kernels of the Carreau-Stokes cell problem.

Two interchangeable implementations exist: numba-compiled loops and
vectorised numpy.  The backend is chosen by the ``CARREAU_DARCY_BACKEND``
environment variable (``numba`` or ``numpy``); numba is the default when
it can be imported.
"""
import os

from . import numpy_impl

try:
    from . import numba_impl
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None
    HAS_NUMBA = False

_BACKENDS = {"numpy": numpy_impl}
if HAS_NUMBA:
    _BACKENDS["numba"] = numba_impl

_active = None


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; choose from {sorted(_BACKENDS)}")
    _active = _BACKENDS[name]


def get_backend():
    return _active.NAME


def backend_module(name=None):
    return _BACKENDS[name] if name else _active


def carreau_residual(*args):
    return _active.carreau_residual(*args)


def carreau_jacobian(*args):
    return _active.carreau_jacobian(*args)


def strain_sq(*args):
    return _active.strain_sq(*args)


set_backend(os.environ.get("CARREAU_DARCY_BACKEND", "numba" if HAS_NUMBA else "numpy").lower())
