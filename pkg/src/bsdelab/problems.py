"""Registry of terminal conditions ``y_T`` built from an ensemble."""

import numpy as np

from . import kernels
from .core import AdaptedProcess
from .errors import ConfigurationError, RegistryError


def _constant(ens, value=1.0):
    return np.full(ens.N, float(value))


def _w_T(ens):
    return ens.w[:, -1].copy()


def _w_T_squared(ens):
    return ens.w[:, -1] ** 2


def _need_auxiliary(ens, name):
    if not ens.model.has_auxiliary:
        raise ConfigurationError(f"terminal {name!r} needs the enlarged-brownian model")


def _wp_T(ens):
    _need_auxiliary(ens, "w'(T)")
    return ens.wp[:, -1].copy()


def _integral_g_dwp(ens, a=1.0, b=0.0):
    """``int_0^T (a + b w(t)) dw'(t)``; a martingale orthogonal to every ``int Y dw``."""
    _need_auxiliary(ens, "integral-of-g-dw'")
    g = AdaptedProcess.build(ens, lambda s: a + b * s.w)
    incr = g.values[:, :-1, 0] * ens.dwp
    return kernels.forward_cumsum(incr)[:, -1]


TERMINALS = {
    "constant": _constant,
    "w(T)": _w_T,
    "w(T)^2": _w_T_squared,
    "w'(T)": _wp_T,
    "integral-of-g-dw'": _integral_g_dwp,
}


def make_terminal(name, ens, field_name="terminal.name", **params):
    """Per-path terminal values, shape (N,)."""
    if name not in TERMINALS:
        raise RegistryError(field_name, name, TERMINALS)
    try:
        return TERMINALS[name](ens, **params)
    except TypeError as exc:
        raise ConfigurationError(f"{field_name}={name}: {exc}") from exc


def register_terminal(name, factory):
    """Add ``factory(ens, **params) -> (N,) array`` to the registry."""
    TERMINALS[name] = factory


__all__ = ["TERMINALS", "make_terminal", "register_terminal"]
