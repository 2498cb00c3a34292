"""Backend selection for the path-loop kernels.

The compiled Cython module is used when it imports; otherwise the numpy
implementations in ``_pykernels`` are used.  Both produce identical bits.
"""

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_active = _BACKENDS.get("cython", _pykernels)


def available_backends():
    return sorted(_BACKENDS)


def backend():
    """Name of the backend currently in use."""
    return "cython" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name):
    """Switch the active backend ("cython" or "python"); returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    previous = backend()
    _active = _BACKENDS[name]
    return previous


def pairwise_colsum(a):
    return _active.pairwise_colsum(a)


def normal_equations(X, Y):
    return _active.normal_equations(X, Y)


def forward_cumsum(incr):
    return _active.forward_cumsum(incr)


def backward_cumsum(incr):
    return _active.backward_cumsum(incr)


def affine_forward(eta, u, v, dt, dw, j0):
    return _active.affine_forward(eta, u, v, dt, dw, j0)


def pairwise_mean(a):
    """Mean over axis 0 of a 1-D or 2-D array using the pairwise tree."""
    import numpy as np

    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        return pairwise_colsum(a[:, None])[0] / a.shape[0]
    flat = a.reshape(a.shape[0], -1)
    return (pairwise_colsum(flat) / a.shape[0]).reshape(a.shape[1:])
