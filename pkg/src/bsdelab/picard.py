"""Semilinear BSDE ``dy = f(t, y, Y) dt + Y dw`` by windowed Picard iteration.

On a window short enough for the fixed-point map to contract, freeze
``(p, P)``, solve the linear problem with ``f(t, p, P)`` and repeat.  Windows
are solved backward from ``T``; the value of ``y`` at a window's first knot
is the terminal value of the window before it.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .condexp import RegressionSpec, fit_slice
from .core import AdaptedProcess, as_paths, l2_l2_norm, sup_l2_norm
from .errors import ConfigurationError, ConvergenceError, DriverSpecError, RegistryError
from .linear import (
    TranspositionSolution, build_tensor_basis, corrected_form_residual,
    martingale_part, solve_window, uniform_cells,
)

AUDIT_PAIRS = 1000


@dataclass(frozen=True)
class DriverSpec:
    """Driver ``f(j, y, Y, state)`` with declared Lipschitz constant ``K``.

    ``y`` and ``Y`` have shape (N, n); the result must too.  ``state`` is the
    :class:`~bsdelab.core.InformationState` at knot ``j``.
    """

    func: Callable
    K: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isfinite(self.K) and self.K >= 0):
            raise ConfigurationError(f"Lipschitz constant must be finite and >= 0, got {self.K!r}")

    def __call__(self, j, y, Y, state):
        out = as_paths(self.func(j, y, Y, state), y.shape[0], name=f"driver {self.name}")
        if out.shape[1] == 1 and y.shape[1] > 1:
            out = np.repeat(out, y.shape[1], axis=1)
        return out

    def evaluate(self, ens, y, Y):
        """Driver along ``(y, Y)`` at every knot, as an adapted process."""
        vals = np.stack([self(j, y.values[:, j], Y.values[:, j], ens.state(j))
                         for j in range(ens.J + 1)], axis=1)
        return AdaptedProcess(ens, vals)

    def audit(self, ens, n_pairs=AUDIT_PAIRS, seed=0, dim=1, rtol=1e-9):
        """Check ``|f(p1, q1) - f(p2, q2)| <= K (|p1 - p2| + |q1 - q2|)`` on random pairs.

        Pairs are spread over 10 knots and up to ``n_pairs / 10`` paths each;
        arguments are Gaussian with scales from 1e-3 to 1e2.  Raises
        :class:`DriverSpecError` on the first violation.
        """
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
        knots = np.unique(np.linspace(0, ens.J, 10).astype(int))
        per = max(1, n_pairs // len(knots))
        sub = ens.head(min(ens.N, per))
        n = sub.N
        checked = 0
        for j in knots:
            scale = 10.0 ** rng.uniform(-3, 2, size=(n, 1))
            p1, q1, p2, q2 = (scale * rng.standard_normal((n, dim)) for _ in range(4))
            st = sub.state(int(j))
            f1 = self(int(j), p1, q1, st)
            f2 = self(int(j), p2, q2, st)
            lhs = np.linalg.norm(f1 - f2, axis=1)
            rhs = self.K * (np.linalg.norm(p1 - p2, axis=1) + np.linalg.norm(q1 - q2, axis=1))
            bad = lhs > rhs * (1 + rtol) + 1e-300
            if np.any(bad):
                i = int(np.argmax(bad))
                raise DriverSpecError(
                    f"driver {self.name!r} violates its Lipschitz bound K={self.K:g} at knot {j}: "
                    f"|df|={lhs[i]:.6g} > {rhs[i]:.6g}")
            checked += n
        return checked

    @property
    def is_constant(self):
        """True when the driver does not depend on ``(y, Y)``."""
        return self.K == 0


# -------------------------------------------------------------- registry


def _zero(**params):
    return DriverSpec(lambda j, y, Y, s: np.zeros_like(y), 0.0, "zero", {})


def _affine(a=0.0, b=0.0, c=0.0):
    a, b, c = float(a), float(b), float(c)
    return DriverSpec(lambda j, y, Y, s: a * y + b * Y + c, max(abs(a), abs(b)), "affine",
                      {"a": a, "b": b, "c": c})


def _lipschitz_sin(kappa=1.0, c=0.0):
    kappa, c = float(kappa), float(c)
    return DriverSpec(lambda j, y, Y, s: kappa * np.sin(y) + c, abs(kappa), "lipschitz-sin",
                      {"kappa": kappa, "c": c})


DRIVERS = {"zero": _zero, "affine": _affine, "lipschitz-sin": _lipschitz_sin}


def make_driver(name, field_name="driver.name", **params):
    if name not in DRIVERS:
        raise RegistryError(field_name, name, DRIVERS)
    try:
        return DRIVERS[name](**params)
    except TypeError as exc:
        raise ConfigurationError(f"{field_name}={name}: {exc}") from exc


def register_driver(name, factory):
    """Add a driver factory ``factory(**params) -> DriverSpec`` to the registry."""
    DRIVERS[name] = factory


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class PicardConfig:
    """Stopping rule and window planning.

    ``tol`` bounds ``sup_l2(dy) + l2_l2(dY)`` between successive iterates.
    ``window_plan`` optionally fixes window boundaries as a list of knots
    ``0 = k_0 < ... < k_W = J``.
    """

    tol: float = 1e-8
    max_iter: int = 50
    theta: float = 0.5
    max_bisect: int = 8
    window_plan: tuple = None

    def __post_init__(self):
        if not (self.tol > 0):
            raise ConfigurationError("Picard tolerance must be > 0")
        if not (0 < self.theta < 1):
            raise ConfigurationError("contraction target theta must lie in (0, 1)")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if self.max_bisect < 0:
            raise ConfigurationError("max_bisect must be >= 0")


def window_length(K, theta):
    """Largest ``D`` with ``K (D + sqrt(D)) <= theta``; ``inf`` for ``K = 0``."""
    if K < 0 or not 0 < theta < 1:
        raise ConfigurationError("need K >= 0 and 0 < theta < 1")
    if K == 0:
        return math.inf
    r = (-1.0 + math.sqrt(1.0 + 4.0 * theta / K)) / 2.0
    return r * r


def plan_windows(T, K, theta):
    """Windows ``[(a, b), ...]`` in time order covering ``[0, T]``, built backward from ``T``.

    All windows have length ``window_length(K, theta)`` except the first,
    which may be shorter.
    """
    D = window_length(K, theta)
    if D >= T:
        return [(0.0, float(T))]
    bounds = [float(T)]
    while bounds[-1] > D * (1 + 1e-12):
        bounds.append(bounds[-1] - D)
    bounds.append(0.0)
    bounds = bounds[::-1]
    return list(zip(bounds[:-1], bounds[1:]))


def plan_knot_windows(grid, K, theta):
    """Knot windows ``[(ja, jb), ...]`` with every window at most ``window_length`` long.

    Boundaries are placed backward from ``J``; a window holds at least one step.
    """
    D = window_length(K, theta)
    if D >= grid.T:
        return [(0, grid.J)]
    knots = grid.knots
    bounds = [grid.J]
    while bounds[-1] > 0:
        jb = bounds[-1]
        ja = int(np.searchsorted(knots, knots[jb] - D * (1 + 1e-12), side="left"))
        bounds.append(min(ja, jb - 1))
    bounds = bounds[::-1]
    return list(zip(bounds[:-1], bounds[1:]))


# ---------------------------------------------------------------- windows


@dataclass
class WindowTrace:
    """Iteration history of one accepted window."""

    window: tuple
    distances: list
    ratios: list
    iterations: int
    bisect_depth: int = 0
    regression_error: float = 0.0
    gram_solve_residual: float = 0.0
    gram_condition: float = 1.0
    gram_ridge: float = 0.0

    @property
    def max_ratio(self):
        return max(self.ratios) if self.ratios else 0.0


@dataclass
class WindowResult:
    y: np.ndarray     # (N, L + 1, n) on knots ja..jb
    Y: np.ndarray     # (N, L, n) on knots ja..jb-1
    trace: WindowTrace


def _window_distance(ens, ja, jb, dy, dY):
    sup = float(np.sqrt(kernels.pairwise_mean(np.sum(dy * dy, axis=2).max(axis=1))))
    per = kernels.forward_cumsum(np.sum(dY * dY, axis=2) * ens.grid.dt[None, ja:jb])[:, -1]
    return sup + float(np.sqrt(kernels.pairwise_mean(per)))


def _driver_values(driver, ens, y, Y, ja, jb, n):
    f = np.zeros((ens.N, ens.J + 1, n))
    for j in range(ja, jb):
        f[:, j] = driver(j, y[:, j - ja], Y[:, j - ja], ens.state(j))
    return f


class _NonContraction(Exception):
    def __init__(self, trace):
        self.trace = trace


def picard_window(driver, terminal, window, ens, basis, spec, config, ridge=None, depth=0):
    """Picard iteration on knots ``window = (ja, jb)`` with ``y(t_jb) = terminal``.

    The first iterate is ``p0_j = E(terminal | F_j)``, ``P0 = 0``.  Raises
    :class:`ConvergenceError` after ``max_iter`` iterations.  An empirical
    contraction ratio >= 1 raises an internal signal that makes
    :func:`solve_window_adaptive` bisect the window.
    """
    ja, jb = window
    xi = as_paths(terminal, ens.N, name="terminal")
    n = xi.shape[1]
    y = np.stack([fit_slice(xi, j, ens, spec).fitted for j in range(ja, jb + 1)], axis=1)
    Y = np.zeros((ens.N, jb - ja, n))
    trace = WindowTrace((ja, jb), [], [], 0, depth)
    for it in range(1, config.max_iter + 1):
        f = _driver_values(driver, ens, y, Y, ja, jb, n)
        reg, gal = solve_window(ens, xi, f, ja, jb, basis, spec, ridge)
        y_new = reg.y[:, ja:jb + 1]
        Y_new = gal.Y[:, ja:jb]
        d = _window_distance(ens, ja, jb, y_new - y, Y_new - Y)
        trace.distances.append(d)
        if len(trace.distances) > 1:
            prev = trace.distances[-2]
            trace.ratios.append(d / prev if prev > 0 else 0.0)
        trace.iterations = it
        trace.regression_error = reg.max_estimation_error
        trace.gram_solve_residual = gal.solve_residual
        trace.gram_condition = gal.condition
        trace.gram_ridge = gal.ridge
        y, Y = y_new, Y_new
        if driver.is_constant:
            # f does not depend on (y, Y): the first solve is the fixed point
            return WindowResult(y, Y, trace)
        if d < config.tol:
            return WindowResult(y, Y, trace)
        if trace.ratios and trace.ratios[-1] >= 1.0:
            raise _NonContraction(trace)
    raise ConvergenceError(
        f"Picard iteration on knots [{ja}, {jb}] did not reach tol={config.tol:g} "
        f"in {config.max_iter} iterations (last distance {trace.distances[-1]:.3g})", trace)


def solve_window_adaptive(driver, terminal, window, ens, basis, spec, config, ridge=None, depth=0):
    """Solve a window, bisecting on observed non-contraction; returns (y, Y, traces)."""
    ja, jb = window
    try:
        res = picard_window(driver, terminal, window, ens, basis, spec, config, ridge, depth)
        return res.y, res.Y, [res.trace]
    except _NonContraction as sig:
        if depth >= config.max_bisect or jb - ja < 2:
            raise ConvergenceError(
                f"empirical contraction ratio {sig.trace.ratios[-1]:.3g} >= 1 on knots "
                f"[{ja}, {jb}] at bisection depth {depth}", sig.trace) from None
    mid = (ja + jb) // 2
    y2, Y2, tr2 = solve_window_adaptive(driver, terminal, (mid, jb), ens, basis, spec, config,
                                        ridge, depth + 1)
    y1, Y1, tr1 = solve_window_adaptive(driver, y2[:, 0], (ja, mid), ens, basis, spec, config,
                                        ridge, depth + 1)
    y = np.concatenate([y1[:, :-1], y2], axis=1)
    Y = np.concatenate([Y1, Y2], axis=1)
    return y, Y, tr1 + tr2


def solve_semilinear(driver, y_T, ens, basis=None, spec=None, config=None, ridge=None,
                     audit=True):
    """Transposition solution of the semilinear equation on ``[0, T]``.

    Windows come from ``config.window_plan`` or :func:`plan_knot_windows`.
    ``M`` is rebuilt from the driver evaluated along the stitched solution.
    """
    spec = spec or RegressionSpec()
    config = config or PicardConfig()
    if basis is None:
        basis = build_tensor_basis(ens, uniform_cells(ens.J, 4), 1)
    xi = as_paths(y_T, ens.N, name="y_T")
    n = xi.shape[1]
    if audit:
        driver.audit(ens, dim=n)
    if config.window_plan is not None:
        b = [int(k) for k in config.window_plan]
        if b[0] != 0 or b[-1] != ens.J or any(x >= y for x, y in zip(b[:-1], b[1:])):
            raise ConfigurationError("window plan must be increasing knots from 0 to J")
        windows = list(zip(b[:-1], b[1:]))
    else:
        windows = plan_knot_windows(ens.grid, driver.K, config.theta)
    y = np.zeros((ens.N, ens.J + 1, n))
    Y = np.zeros((ens.N, ens.J + 1, n))
    y[:, ens.J] = xi
    traces = []
    terminal = xi
    for ja, jb in reversed(windows):
        wy, wY, tr = solve_window_adaptive(driver, terminal, (ja, jb), ens, basis, spec, config,
                                           ridge)
        y[:, ja:jb + 1] = wy
        Y[:, ja:jb] = wY
        terminal = wy[:, 0]
        traces = tr + traces
    yp = AdaptedProcess(ens, y)
    Yp = AdaptedProcess(ens, Y)
    f = driver.evaluate(ens, yp, Yp)
    diag = {
        "windows": len(traces),
        "picard_traces": traces,
        "picard_iterations": sum(t.iterations for t in traces),
        "max_contraction_ratio": max((t.max_ratio for t in traces), default=0.0),
        "gram_condition": max(t.gram_condition for t in traces),
        "gram_ridge": max(t.gram_ridge for t in traces),
        "gram_solve_residual": max(t.gram_solve_residual for t in traces),
        "regression_error": max(t.regression_error for t in traces),
        "basis_size": basis.m,
    }
    sol = TranspositionSolution(yp, Yp, martingale_part(yp, f), f, xi, diag, driver, basis, spec)
    diag["y_sup_l2"] = sup_l2_norm(yp)
    diag["Y_l2_l2"] = l2_l2_norm(Yp)
    diag["corrected_form_residual"] = corrected_form_residual(sol)
    return sol
