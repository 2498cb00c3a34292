"""Regression estimate of ``E( . | F_{t_j})`` on polynomial features of the knot-j state."""

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg

from . import kernels
from .core import AdaptedProcess, as_paths
from .errors import ConditioningError, ConfigurationError

AUTO_RIDGE_FACTOR = 1e-8


@dataclass(frozen=True)
class RegressionSpec:
    """Least-squares setup for conditional expectations.

    Parameters
    ----------
    degree : int
        Maximal total degree of the monomials in the state coordinates.
    ridge : float or None
        Ridge on the normal equations (the intercept is never penalised).
        ``None`` selects ``1e-8 * sigma_max(X)**2`` slice by slice.
    standardize : bool
        Centre and scale every state coordinate per slice before building
        monomials.
    interactions : bool
        Include mixed monomials; otherwise pure powers only.
    """

    degree: int = 3
    ridge: float = None
    standardize: bool = True
    interactions: bool = True

    def __post_init__(self):
        if not (isinstance(self.degree, (int, np.integer)) and self.degree >= 0):
            raise ConfigurationError(f"regression degree must be >= 0, got {self.degree!r}")
        if self.ridge is not None and not (np.isfinite(self.ridge) and self.ridge >= 0):
            raise ConfigurationError(f"ridge must be >= 0, got {self.ridge!r}")


@dataclass(frozen=True)
class SliceFit:
    fitted: np.ndarray      # (N, n)
    coef: np.ndarray        # (p, n)
    n_features: int
    residual_rms: float
    ridge: float
    condition: float

    @property
    def estimation_error(self):
        """Scale of the sampling error of the fitted values, ``sqrt(p / N) * rms(residual)``."""
        return float(np.sqrt(self.n_features / self.fitted.shape[0]) * self.residual_rms)


def monomial_exponents(d, degree, interactions=True):
    """Exponent tuples of all monomials of total degree 1..degree in ``d`` variables."""
    out = []
    for k in range(1, degree + 1):
        if interactions:
            for combo in combinations_with_replacement(range(d), k):
                e = [0] * d
                for c in combo:
                    e[c] += 1
                out.append(tuple(e))
        else:
            out.extend(tuple(k if i == c else 0 for i in range(d)) for c in range(d))
    return out


def design_matrix(coords, spec):
    """Intercept plus monomials of the non-degenerate coordinates, shape (N, p)."""
    N = coords.shape[0]
    cols = []
    for c in range(coords.shape[1]):
        x = coords[:, c]
        mu = float(kernels.pairwise_mean(x))
        sd = float(np.sqrt(kernels.pairwise_mean((x - mu) ** 2)))
        if sd <= 1e-12 * (1.0 + abs(mu)):
            continue  # constant across paths: spanned by the intercept
        cols.append((x - mu) / sd if spec.standardize else x)
    X = [np.ones(N)]
    if cols:
        Z = np.column_stack(cols)
        for e in monomial_exponents(Z.shape[1], spec.degree, spec.interactions):
            term = np.ones(N)
            for c, k in enumerate(e):
                for _ in range(k):
                    term = term * Z[:, c]
            X.append(term)
    return np.column_stack(X)


def fit_slice(target, j, ens, spec):
    """Full regression of ``target`` on the knot-``j`` features."""
    y = as_paths(target, ens.N, name="target")
    if not np.all(np.isfinite(y)):
        raise ConfigurationError("regression target contains non-finite values")
    if j == ens.J:
        # everything on the ensemble is known at the terminal knot
        return SliceFit(y.copy(), np.zeros((0, y.shape[1])), 0, 0.0, 0.0, 1.0)
    X = design_matrix(ens.coordinates(j), spec)
    G, b = kernels.normal_equations(X, y)
    eig = np.linalg.eigvalsh(G)
    top = float(eig[-1])
    lam = AUTO_RIDGE_FACTOR * top if spec.ridge is None else float(spec.ridge)
    penalty = np.full(X.shape[1], lam)
    penalty[0] = 0.0
    A = G + np.diag(penalty)
    if lam == 0.0 and eig[0] <= X.shape[1] * np.finfo(float).eps * top:
        raise ConditioningError(
            f"rank-deficient regression design at knot {j} "
            f"(smallest eigenvalue {eig[0]:.3g}); use a ridge > 0")
    try:
        coef = scipy.linalg.solve(A, b, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise ConditioningError(f"regression solve failed at knot {j}: {exc}") from exc
    fitted = np.zeros_like(y)
    for k in range(X.shape[1]):
        fitted = fitted + X[:, k:k + 1] * coef[k][None, :]
    resid = y - fitted
    res_rms = float(np.sqrt(kernels.pairwise_mean(np.sum(resid * resid, axis=1))))
    cond_eig = np.linalg.eigvalsh(A)
    cond = float(cond_eig[-1] / cond_eig[0]) if cond_eig[0] > 0 else float("inf")
    return SliceFit(fitted, coef, X.shape[1], res_rms, lam, cond)


def condexp_slice(target, j, ens, spec=None):
    """Estimate ``E(target | F_{t_j})``; the result depends only on knot-``j`` features."""
    spec = spec or RegressionSpec()
    shape = np.shape(target)
    fit = fit_slice(target, j, ens, spec)
    return fit.fitted[:, 0] if len(shape) == 1 else fit.fitted


def condexp_process(target, ens, spec=None):
    """``E(target | F_{t_j})`` at every knot; knot ``J`` returns ``target`` itself."""
    spec = spec or RegressionSpec()
    y = as_paths(target, ens.N, name="target")
    vals = np.empty((ens.N, ens.J + 1, y.shape[1]))
    for j in range(ens.J + 1):
        vals[:, j] = fit_slice(y, j, ens, spec).fitted
    return AdaptedProcess(ens, vals)


def martingale_residual(X, spec=None, return_profile=False):
    """``max_j || E(X[j+1] | F_j) - X[j] ||_2``; near zero iff ``X`` is a discrete martingale.

    The increment ``X[j+1] - X[j]`` is regressed rather than ``X[j+1]``:
    both give the same conditional expectation, but ``X[j]`` may depend on
    the whole history (e.g. through a time integral) and need not lie in
    the span of the knot-``j`` features.
    """
    spec = spec or RegressionSpec()
    ens = X.ensemble
    prof = np.empty(ens.J)
    for j in range(ens.J):
        diff = fit_slice(X.values[:, j + 1] - X.values[:, j], j, ens, spec).fitted
        prof[j] = np.sqrt(kernels.pairwise_mean(np.sum(diff * diff, axis=1)))
    worst = float(prof.max()) if prof.size else 0.0
    return (worst, prof) if return_profile else worst


__all__ = [
    "RegressionSpec", "SliceFit", "condexp_slice", "condexp_process",
    "martingale_residual", "fit_slice", "design_matrix",
]
