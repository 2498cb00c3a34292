"""Linear BSDE ``dy = f dt + Y dw``, ``y(T) = y_T``, solved in the transposition sense.

``y`` is the regression estimate of ``E(y_T - int_t^T f ds | F_t)``.  ``Y`` is
the Galerkin projection onto a finite adapted subspace ``H_m``: its
coefficients solve ``G c = r`` where ``G`` is the Gram matrix of the basis
in ``L2(Omega x [0, T])`` and ``r_k`` is the right-hand side of the duality
identity tested against ``z_k = int e_k dw``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .condexp import RegressionSpec, fit_slice, monomial_exponents
from .core import (
    AdaptedProcess, as_paths, l2_l1_norm, l2_l2_norm, rms, sup_l2_norm,
    tail_integral, time_integral_process,
)
from .errors import ConditioningError, ConfigurationError, DimensionError
from .forward import ratio

GRAM_RIDGE_FACTOR = 1e-10
COND_WARN = 1e12


@dataclass
class LinearBSDEProblem:
    """Non-homogeneous term ``f`` (adapted) and terminal value ``y_T`` (per path)."""

    f: AdaptedProcess
    y_T: np.ndarray

    def __post_init__(self):
        ens = self.f.ensemble
        self.y_T = as_paths(self.y_T, ens.N, name="y_T")
        if not np.all(np.isfinite(self.y_T)):
            raise ConfigurationError("terminal value contains non-finite entries")
        if self.y_T.shape[1] != self.f.dim:
            raise DimensionError("f and y_T have different dimensions")

    @property
    def ensemble(self):
        return self.f.ensemble

    @property
    def dim(self):
        return self.f.dim

    @classmethod
    def homogeneous(cls, ens, y_T):
        y = as_paths(y_T, ens.N, name="y_T")
        return cls(AdaptedProcess.zeros(ens, y.shape[1]), y)

    def __add__(self, other):
        return LinearBSDEProblem(self.f + other.f, self.y_T + other.y_T)


# ------------------------------------------------------------------ basis


@dataclass
class _Block:
    start: int              # first knot of the block
    stop: int               # one past the last knot
    features: np.ndarray    # (N, stop - start, P) element values inside the block
    offset: int             # global index of the first element


@dataclass
class GalerkinBasis:
    """Finite family of scalar adapted processes spanning ``H_m``.

    Elements are stored block-wise: elements of different blocks have
    disjoint time supports, so the Gram matrix is block diagonal.  For
    ``n``-dimensional problems every component is projected onto the same
    scalar family.
    """

    ensemble: object
    blocks: list
    labels: list
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return len(self.labels)

    def element(self, k):
        """Element ``k`` as a dense adapted process."""
        ens = self.ensemble
        vals = np.zeros((ens.N, ens.J + 1))
        for b in self.blocks:
            if b.offset <= k < b.offset + b.features.shape[2]:
                vals[:, b.start:b.stop] = b.features[:, :, k - b.offset]
        return AdaptedProcess(ens, vals)

    def restrict(self, j0, j1=None):
        """The basis multiplied by the indicator of knots ``[j0, j1)``; empty blocks dropped."""
        j1 = self.ensemble.J if j1 is None else j1
        blocks, labels, offset = [], [], 0
        for b in self.blocks:
            s, e = max(b.start, j0), min(b.stop, j1)
            if s >= e:
                continue
            feats = b.features[:, s - b.start:e - b.start]
            P = feats.shape[2]
            blocks.append(_Block(s, e, feats, offset))
            labels.extend(self.labels[b.offset:b.offset + P])
            offset += P
        return GalerkinBasis(self.ensemble, blocks, labels, dict(self.meta, window=(j0, j1)))

    @classmethod
    def from_elements(cls, ens, elements, labels=None):
        """Generic basis from explicit scalar adapted processes (one dense block)."""
        feats = np.stack([e.values[:, :-1, 0] for e in elements], axis=2)
        labels = labels or [f"e{k}" for k in range(len(elements))]
        return cls(ens, [_Block(0, ens.J, feats, 0)], list(labels), {"kind": "explicit"})


def uniform_cells(J, size):
    """Partition of knots ``[0, J)`` into consecutive cells of ``size`` knots (last may be shorter)."""
    if size < 1:
        raise ConfigurationError("cell size must be >= 1")
    return [(s, min(s + size, J)) for s in range(0, J, size)]


def build_tensor_basis(ens, cells, state_degree=1, anchor="knot"):
    """Tensor basis ``1{j in cell} * psi_p(state)`` with monomials ``psi_p`` up to ``state_degree``.

    ``anchor="knot"`` evaluates ``psi_p`` at the current knot ``j``;
    ``anchor="cell-start"`` at the first knot of the cell.  Both are adapted.
    """
    if state_degree < 0:
        raise ConfigurationError("state degree must be >= 0")
    if anchor not in ("knot", "cell-start"):
        raise ConfigurationError(f"unknown anchor {anchor!r}")
    cells = [tuple(int(x) for x in c) for c in cells]
    pos = 0
    for s, e in cells:
        if e <= s:
            raise ConfigurationError(f"empty cell [{s}, {e})")
        if s != pos:
            raise ConfigurationError("cells must partition [0, J) in order")
        pos = e
    if pos != ens.J:
        raise ConfigurationError(f"cells cover [0, {pos}) instead of [0, {ens.J})")
    names = ens.model.coordinate_names()
    exps = [tuple([0] * len(names))] + monomial_exponents(len(names), state_degree)
    coords = np.stack([ens.coordinates(j) for j in range(ens.J)], axis=1)  # (N, J, d)
    blocks, labels, offset = [], [], 0
    for c, (s, e) in enumerate(cells):
        x = coords[:, s:e] if anchor == "knot" else np.repeat(coords[:, s:s + 1], e - s, axis=1)
        feats = np.empty(x.shape[:2] + (len(exps),))
        for p, ex in enumerate(exps):
            term = np.ones(x.shape[:2])
            for d, k in enumerate(ex):
                for _ in range(k):
                    term = term * x[:, :, d]
            feats[:, :, p] = term
            labels.append(f"cell{c}:" + _monomial_name(names, ex))
        blocks.append(_Block(s, e, feats, offset))
        offset += len(exps)
    meta = {"kind": "tensor", "cells": cells, "state_degree": state_degree, "anchor": anchor}
    return GalerkinBasis(ens, blocks, labels, meta)


def _monomial_name(names, ex):
    parts = [n if k == 1 else f"{n}^{k}" for n, k in zip(names, ex) if k]
    return "*".join(parts) or "1"


def _block_rows(b, dt, values):
    """Flatten (N, L, ...) block data to rows ordered path-major, knot-minor."""
    N, L = values.shape[:2]
    return values.reshape((N * L,) + values.shape[2:])


def _gram_blocks(basis):
    dt = basis.ensemble.grid.dt
    N = basis.ensemble.N
    out = []
    for b in basis.blocks:
        w = np.sqrt(dt[b.start:b.stop])[None, :, None]
        X = _block_rows(b, dt, b.features * w)
        G, _ = kernels.normal_equations(X, np.zeros((X.shape[0], 0)))
        out.append(G / N)
    return out


def assemble_gram(basis, ens=None):
    """``G_kl = (1/N) sum_i sum_j e_k e_l dt_j`` (block diagonal), shape (m, m)."""
    G = scipy.linalg.block_diag(*_gram_blocks(basis)) if basis.blocks else np.zeros((0, 0))
    if G.size:
        eig = np.linalg.eigvalsh(G)
        cond = eig[-1] / eig[0] if eig[0] > 0 else np.inf
        if cond > COND_WARN:
            warnings.warn(f"Galerkin Gram matrix is ill-conditioned (condition {cond:.3g})",
                          RuntimeWarning, stacklevel=2)
    return G


def _centered(a):
    return a - kernels.pairwise_mean(a)[None]


def _window_targets(terminal, f_values, dt, ja, jb, center):
    """``target[:, k] = xi - sum_{k <= j < jb} f_j dt_j`` for knots ``ja..jb``, shape (N, L + 1, n)."""
    xi = terminal
    f = f_values[:, ja:jb]
    if center:
        xi = _centered(xi)
        f = f - kernels.pairwise_mean(f.reshape(f.shape[0], -1)).reshape(f.shape[1:])[None]
    tails = kernels.backward_cumsum(f * dt[None, ja:jb, None])
    return xi[:, None, :] - tails


def _rhs(basis, ens, terminal, f_values, ja, jb):
    """Duality right-hand side ``r_k = E<z_k(T), xi> - E int <z_k, f> dt`` with ``z_k = int e_k dw``.

    Computed in summation-by-parts form
    ``r_k = E sum_j e_k(t_j) dw_j (xi - int_{t_{j+1}}^{T} f)``,
    on centred data (subtracting constants leaves the expectation unchanged
    because Ito integrals have mean zero).
    """
    n = terminal.shape[1]
    targets = _window_targets(terminal, f_values, ens.grid.dt, ja, jb, center=True)
    N = ens.N
    r = np.zeros((basis.m, n))
    for b in basis.blocks:
        s, e = b.start, b.stop
        nxt = targets[:, s + 1 - ja:e + 1 - ja]                    # (N, L, n)
        weights = ens.dw[:, s:e, None] * nxt                        # (N, L, n)
        X = _block_rows(b, None, b.features)
        W = _block_rows(b, None, weights)
        _, XtW = kernels.normal_equations(X, W)
        r[b.offset:b.offset + b.features.shape[2]] = XtW / N
    return r


def assemble_rhs(basis, problem, ens=None):
    """Right-hand side of the Galerkin system for a linear problem on ``[0, T]``."""
    ens = ens or problem.ensemble
    return _rhs(basis, ens, problem.y_T, problem.f.values, 0, ens.J)


@dataclass
class GalerkinFit:
    Y: np.ndarray           # (N, J + 1, n) on the full grid, zero outside the basis support
    coef: np.ndarray        # (m, n)
    condition: float
    ridge: float
    solve_residual: float   # ||(G + ridge I) c - r||_2


def _solve_blocks(basis, r, ridge):
    Gs = _gram_blocks(basis)
    m = basis.m
    if m == 0:
        return np.zeros_like(r), 1.0, 0.0, 0.0
    if ridge is not None and ridge < 0:
        raise ConfigurationError("Galerkin ridge must be >= 0")
    coef = np.zeros_like(r)
    lo, hi, lam_max = np.inf, 0.0, 0.0
    res = 0.0
    for b, G in zip(basis.blocks, Gs):
        P = G.shape[0]
        # default ridge is relative to the block's own scale, so a block
        # solves identically whatever other blocks are present
        lam = GRAM_RIDGE_FACTOR * float(np.trace(G)) / P if ridge is None else float(ridge)
        lam_max = max(lam_max, lam)
        A = G + lam * np.eye(P)
        eig = np.linalg.eigvalsh(A)
        lo, hi = min(lo, eig[0]), max(hi, eig[-1])
        if eig[0] <= P * np.finfo(float).eps * max(eig[-1], 1e-300):
            raise ConditioningError(
                f"Galerkin system is numerically singular on knots [{b.start}, {b.stop}) "
                f"with ridge {lam:g}; use a positive ridge")
        rb = r[b.offset:b.offset + P]
        cb = scipy.linalg.solve(A, rb, assume_a="pos")
        coef[b.offset:b.offset + P] = cb
        res += float(np.sum((A @ cb - rb) ** 2))
    cond = hi / lo if lo > 0 else np.inf
    return coef, float(cond), lam_max, float(np.sqrt(res))


def _reconstruct(basis, coef, n):
    ens = basis.ensemble
    Y = np.zeros((ens.N, ens.J + 1, n))
    for b in basis.blocks:
        P = b.features.shape[2]
        cb = coef[b.offset:b.offset + P]
        acc = np.zeros((ens.N, b.stop - b.start, n))
        for p in range(P):
            acc = acc + b.features[:, :, p:p + 1] * cb[p][None, None, :]
        Y[:, b.start:b.stop] = acc
    return Y


def galerkin_fit(basis, ens, terminal, f_values, ja, jb, ridge=None):
    r = _rhs(basis, ens, terminal, f_values, ja, jb)
    coef, cond, lam, res = _solve_blocks(basis, r, ridge)
    return GalerkinFit(_reconstruct(basis, coef, terminal.shape[1]), coef, cond, lam, res)


def solve_Y_galerkin(basis, problem, ens=None, ridge=None):
    """Galerkin projection of ``Y`` onto ``span(basis)``; returns ``(Y, GalerkinFit)``."""
    ens = ens or problem.ensemble
    fit = galerkin_fit(basis, ens, problem.y_T, problem.f.values, 0, ens.J, ridge)
    return AdaptedProcess(ens, fit.Y), fit


@dataclass
class RegressionFit:
    y: np.ndarray           # (N, J + 1, n), filled on the window only
    max_estimation_error: float
    max_residual_rms: float
    max_condition: float


def regression_fit(ens, terminal, f_values, ja, jb, spec):
    """``y_j = E(xi - sum_{j <= k < jb} f_k dt_k | F_j)`` for ``ja <= j <= jb``; ``y_jb = xi``."""
    targets = _window_targets(terminal, f_values, ens.grid.dt, ja, jb, center=False)
    y = np.zeros((ens.N, ens.J + 1, terminal.shape[1]))
    y[:, jb] = terminal
    est = res = 0.0
    cond = 1.0
    for j in range(ja, jb):
        fit = fit_slice(targets[:, j - ja], j, ens, spec)
        y[:, j] = fit.fitted
        est = max(est, fit.estimation_error)
        res = max(res, fit.residual_rms)
        cond = max(cond, fit.condition)
    return RegressionFit(y, est, res, cond)


def solve_y_regression(problem, ens=None, spec=None):
    ens = ens or problem.ensemble
    spec = spec or RegressionSpec()
    fit = regression_fit(ens, problem.y_T, problem.f.values, 0, ens.J, spec)
    return AdaptedProcess(ens, fit.y)


# --------------------------------------------------------------- solution


@dataclass
class TranspositionSolution:
    """The pair ``(y, Y)``, the martingale ``M`` and solver diagnostics.

    ``f`` holds the non-homogeneous term evaluated along the solution (for a
    semilinear equation: ``f(t, y, Y)`` at the fixed point).
    """

    y: AdaptedProcess
    Y: AdaptedProcess
    M: AdaptedProcess
    f: AdaptedProcess
    terminal: np.ndarray
    diagnostics: dict
    driver: object = None
    basis: GalerkinBasis = None
    spec: RegressionSpec = None

    @property
    def ensemble(self):
        return self.y.ensemble

    @property
    def dim(self):
        return self.y.dim

    def bias_scale(self):
        """Regression plus Galerkin solve error scale used for verification budgets."""
        d = self.diagnostics
        return d["regression_error"] + d["gram_solve_residual"]


def martingale_part(y, f):
    """``M(t_j) = y(t_j) - sum_{k < j} f_k dt_k``."""
    return y - time_integral_process(f)


def corrected_form_residual(sol):
    """``max |y_j - (y_T - sum_{k >= j} f_k dt_k + M_j - M_J)|`` over paths and knots."""
    tail = tail_integral(sol.f)
    M = sol.M.values
    rhs = sol.terminal[:, None, :] - tail + M - M[:, -1:, :]
    return float(np.max(np.abs(sol.y.values - rhs)))


def solve_window(ens, terminal, f_values, ja, jb, basis, spec, ridge=None):
    """Linear solve on knots ``[ja, jb]`` with terminal value ``terminal`` at ``jb``."""
    reg = regression_fit(ens, terminal, f_values, ja, jb, spec)
    gal = galerkin_fit(basis.restrict(ja, jb), ens, terminal, f_values, ja, jb, ridge)
    return reg, gal


def solve_linear(problem, ens=None, basis=None, spec=None, ridge=None):
    """Transposition solution of the linear problem on the whole horizon."""
    ens = ens or problem.ensemble
    spec = spec or RegressionSpec()
    if basis is None:
        basis = build_tensor_basis(ens, uniform_cells(ens.J, 4), 1)
    reg, gal = solve_window(ens, problem.y_T, problem.f.values, 0, ens.J, basis, spec, ridge)
    y = AdaptedProcess(ens, reg.y)
    Y = AdaptedProcess(ens, gal.Y)
    diag = {
        "gram_condition": gal.condition,
        "gram_ridge": gal.ridge,
        "gram_solve_residual": gal.solve_residual,
        "regression_error": reg.max_estimation_error,
        "regression_residual_rms": reg.max_residual_rms,
        "regression_condition": reg.max_condition,
        "basis_size": basis.m,
    }
    sol = TranspositionSolution(y, Y, martingale_part(y, problem.f), problem.f,
                                problem.y_T, diag, None, basis, spec)
    diag["y_sup_l2"] = sup_l2_norm(y)
    diag["Y_l2_l2"] = l2_l2_norm(Y)
    diag["corrected_form_residual"] = corrected_form_residual(sol)
    return sol


def apriori_ratio(solution, problem=None):
    """``(|y|_sup + |Y|_2) / (|f|_{L2(L1)} + |y_T|)``, an empirical stand-in for the a priori constant."""
    f = solution.f if problem is None else problem.f
    yT = solution.terminal if problem is None else problem.y_T
    num = sup_l2_norm(solution.y) + l2_l2_norm(solution.Y)
    den = l2_l1_norm(f) + rms(yT)
    return ratio(num, den)
