"""Forward test process ``dz = u dt + v dw`` on ``[t_{j0}, T]`` with ``z(t_{j0}) = eta``."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .core import AdaptedProcess, as_paths, l2_l2_norm, rms, sup_l2_norm
from .errors import DimensionError


@dataclass(frozen=True)
class TestProcessInput:
    """Data of one forward test process.

    ``eta`` is a function of the :class:`~bsdelab.core.InformationState` at
    ``j0`` (never raw per-path numbers), so it cannot look ahead.  ``u`` and
    ``v`` are adapted processes on the full grid; values before ``j0`` are
    ignored.
    """

    __test__ = False  # not a pytest class

    j0: int
    eta: Callable
    u: AdaptedProcess
    v: AdaptedProcess

    def eta_values(self, ens):
        return as_paths(self.eta(ens.state(self.j0)), ens.N, name="eta")

    @property
    def dim(self):
        return self.u.dim


@dataclass(frozen=True)
class RatioReport:
    """A diagnostic ratio; ``status`` is ``"ok"``, ``"undefined"`` (0/0) or ``"degenerate"`` (x/0)."""

    value: float
    status: str = "ok"
    numerator: float = 0.0
    denominator: float = 0.0

    @property
    def defined(self):
        return self.status == "ok"


def simulate_test_process(ens, inp):
    """Euler scheme for the affine test dynamic; exact for piecewise-constant ``u, v``."""
    if not 0 <= inp.j0 <= ens.J:
        raise IndexError(f"start knot {inp.j0} outside 0..{ens.J}")
    for name, p in (("u", inp.u), ("v", inp.v)):
        if p.ensemble is not ens and not p.ensemble.same_scenarios(ens):
            raise DimensionError(f"{name} lives on a different ensemble")
    if inp.u.dim != inp.v.dim:
        raise DimensionError("u and v must have the same dimension")
    eta = inp.eta_values(ens)
    if eta.shape[1] != inp.u.dim:
        if eta.shape[1] == 1:
            eta = np.repeat(eta, inp.u.dim, axis=1)
        else:
            raise DimensionError("eta dimension differs from u, v")
    z = kernels.affine_forward(eta, inp.u.values[:, :-1], inp.v.values[:, :-1],
                               ens.grid.dt, ens.dw, inp.j0)
    return AdaptedProcess(ens, z)


def ratio(num, den, tiny=1e-300):
    if den <= tiny:
        return RatioReport(float("nan") if num <= tiny else float("inf"),
                           "undefined" if num <= tiny else "degenerate", num, den)
    return RatioReport(num / den, "ok", num, den)


def test_process_bound_ratio(z, inp):
    """``sup|z| / (|u| + |v| + |eta|)`` on ``[t_{j0}, T]``; bounded by a constant depending on T."""
    ens = z.ensemble
    j0 = inp.j0
    num = sup_l2_norm(z, j0)
    den = l2_l2_norm(inp.u, j0) + l2_l2_norm(inp.v, j0) + rms(inp.eta_values(ens))
    return ratio(num, den)


test_process_bound_ratio.__test__ = False
