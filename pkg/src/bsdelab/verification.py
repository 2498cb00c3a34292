"""Monte Carlo checks of the duality identity, martingale structure,
orthogonal decomposition, comparison and time consistency of solutions.

Every check runs on the solution's own ensemble, so all expectations share
common random numbers.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .condexp import RegressionSpec
from .core import (
    AdaptedProcess, FiltrationModel, as_paths, build_uniform_grid, ito_integral,
    l2_l1_norm, l2_l2_norm, mean_and_se, rms, simulate_ensemble, sup_l2_norm,
)
from .errors import ConfigurationError, DimensionError, RegistryError, SetupError
from .forward import TestProcessInput, simulate_test_process
from .linear import (
    LinearBSDEProblem, TranspositionSolution, build_tensor_basis, solve_linear,
    _reconstruct, _solve_blocks, solve_window, uniform_cells,
)

BIAS_FACTOR = 5.0
SE_FACTOR = 3.0


# ------------------------------------------------------------------ tests


@dataclass(frozen=True)
class DualityTest:
    """A test triple ``(eta, u, v)`` started at knot ``j0``.

    ``eta`` maps the :class:`~bsdelab.core.InformationState` at ``j0`` to
    per-path values; ``u`` and ``v`` are adapted processes.
    """

    __test__ = False

    j0: int
    eta: Callable
    u: AdaptedProcess
    v: AdaptedProcess
    label: str = ""

    def as_input(self):
        return TestProcessInput(self.j0, self.eta, self.u, self.v)

    def without_v(self):
        return DualityTest(self.j0, self.eta, self.u,
                           AdaptedProcess.zeros(self.v.ensemble, self.v.dim), self.label + "/v=0")

    def norm(self, ens):
        """``|eta| + |u|_{L2(L1)} + |v|_{L2(L2)}`` on ``[t_j0, T]``."""
        inp = self.as_input()
        return (rms(inp.eta_values(ens)) + l2_l1_norm(self.u, self.j0)
                + l2_l2_norm(self.v, self.j0))


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    label: str
    j0: int
    residual: float
    se: float
    bias_tolerance: float
    passed: bool

    @property
    def threshold(self):
        return SE_FACTOR * self.se + self.bias_tolerance


@dataclass
class VerificationReport:
    """Per-test outcomes; the suite passes when at most ``max_failures`` tests fail.

    ``max_failures`` defaults to ``n // 20``: at the 3 SE level about one
    Gaussian excursion in 20 tests is to be expected.
    """

    results: list
    max_failures: int = 0

    @property
    def n_tests(self):
        return len(self.results)

    @property
    def n_passed(self):
        return sum(r.passed for r in self.results)

    @property
    def n_failed(self):
        return self.n_tests - self.n_passed

    @property
    def passed(self):
        return self.n_failed <= self.max_failures


def _driver_values(sol, driver=None):
    """Non-homogeneous term along the solution, shape (N, J + 1, n)."""
    if driver is None:
        driver = sol.driver
    if driver is None:
        return sol.f.values
    return driver.evaluate(sol.ensemble, sol.y, sol.Y).values


def _check_ensemble(sol, ens):
    if ens is not None and ens is not sol.ensemble and not ens.same_scenarios(sol.ensemble):
        raise DimensionError("solution and ensemble do not match")
    return sol.ensemble


def duality_samples(sol, test, driver=None, y_T=None, ens=None):
    """Per-path duality defect and the discrete bias ``sum dt^2 u f``.

    The defect is ``<z_J, y_T> - <eta, y_j0> - sum (<z, f> + <u, y> + <v, Y>) dt``
    summed over ``j0 <= j < J``.  For the exact discrete solution its
    expectation equals the mean of the returned bias samples, which is
    ``O(dt)``.
    """
    ens = _check_ensemble(sol, ens)
    if not 0 <= test.j0 < ens.J:
        raise IndexError(f"start knot {test.j0} outside 0..{ens.J - 1}")
    y_T = sol.terminal if y_T is None else as_paths(y_T, ens.N, name="y_T")
    inp = test.as_input()
    z = simulate_test_process(ens, inp).values
    if z.shape[2] != sol.dim:
        raise DimensionError("test dimension differs from the solution")
    f = _driver_values(sol, driver)
    j0, J = test.j0, ens.J
    dt = ens.grid.dt[None, j0:J]
    y, Y = sol.y.values, sol.Y.values
    u, v = test.u.values, test.v.values
    integrand = (np.sum(z[:, j0:J] * f[:, j0:J], axis=2) + np.sum(u[:, j0:J] * y[:, j0:J], axis=2)
                 + np.sum(v[:, j0:J] * Y[:, j0:J], axis=2)) * dt
    time_part = kernels.forward_cumsum(integrand)[:, -1]
    eta = z[:, j0]
    defect = np.sum(z[:, J] * y_T, axis=1) - np.sum(eta * y[:, j0], axis=1) - time_part
    bias = kernels.forward_cumsum(np.sum(u[:, j0:J] * f[:, j0:J], axis=2) * dt * dt)[:, -1]
    return defect, bias


def duality_residual(sol, driver=None, y_T=None, ens=None, test=None):
    """``(residual, SE)`` of the duality identity for one test."""
    if test is None:
        raise ConfigurationError("a DualityTest is required")
    defect, _ = duality_samples(sol, test, driver, y_T, ens)
    return mean_and_se(defect)


def pseudo_duality_residual(sol, driver=None, y_T=None, ens=None, test=None):
    """Duality residual with ``v`` forced to 0; blind to ``Y``."""
    if test is None:
        raise ConfigurationError("a DualityTest is required")
    return duality_residual(sol, driver, y_T, ens, test.without_v())


def bias_tolerance(sol, test, bias_samples=None, factor=BIAS_FACTOR):
    """``factor * (regression error + Galerkin solve residual) * |test| + |E sum dt^2 u f|``."""
    ens = sol.ensemble
    tol = factor * sol.bias_scale() * test.norm(ens)
    if bias_samples is not None:
        tol += abs(float(kernels.pairwise_mean(bias_samples)))
    return tol


def run_test(sol, test, driver=None, y_T=None, factor=BIAS_FACTOR):
    defect, bias = duality_samples(sol, test, driver, y_T)
    res, se = mean_and_se(defect)
    tol = bias_tolerance(sol, test, bias, factor)
    return TestResult(test.label, test.j0, res, se, tol, abs(res) <= SE_FACTOR * se + tol)


def random_tests(ens, n_tests, seed, dim=1, cell=8, v_zero=False):
    """Random tests with polynomial ``eta`` and bounded piecewise-constant adapted ``u, v``.

    On each cell of ``cell`` knots, ``u = a + b tanh(w(t_c))`` where ``t_c``
    is the first knot of the cell (and likewise for ``v``); coefficients are
    standard normal.  The same seed gives the same test set.
    """
    if not (isinstance(n_tests, (int, np.integer)) and n_tests >= 1):
        raise ConfigurationError(f"n_tests must be a positive integer, got {n_tests!r}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(11,)))
    J = ens.J
    names = ens.model.coordinate_names()
    tests = []
    for k in range(n_tests):
        j0 = int(rng.integers(0, J))
        c0 = rng.standard_normal(dim)
        c1 = rng.standard_normal((len(names), dim)) * 0.5

        def eta(state, c0=c0, c1=c1):
            x = state.coordinates()
            return c0[None, :] + x @ c1

        ncell = -(-J // cell)
        cu = rng.standard_normal((ncell, 2, dim))
        cv = np.zeros((ncell, 2, dim)) if v_zero else rng.standard_normal((ncell, 2, dim))

        def piecewise(coef):
            def fn(state):
                c = min(state.j // cell, ncell - 1)
                x = np.tanh(state.w_at(c * cell))[:, None]
                return coef[c, 0][None, :] + x * coef[c, 1][None, :]
            return AdaptedProcess.build(ens, fn, dim)

        tests.append(DualityTest(j0, eta, piecewise(cu), piecewise(cv), f"test{k:02d}@j{j0}"))
    return tests


def random_test_suite(sol, driver=None, y_T=None, ens=None, n_tests=20, seed=0,
                      factor=BIAS_FACTOR, v_zero=False, max_failures=None):
    """Run ``n_tests`` random duality tests against a solution."""
    ens = _check_ensemble(sol, ens)
    tests = random_tests(ens, n_tests, seed, sol.dim, v_zero=v_zero)
    results = [run_test(sol, t, driver, y_T, factor) for t in tests]
    mf = n_tests // 20 if max_failures is None else max_failures
    return VerificationReport(results, mf)


def corrupt(sol, dy=0.0, dY=0.0):
    """Copy of ``sol`` with constants added to ``y`` and ``Y`` (diagnostics kept); a test sentinel."""
    return TranspositionSolution(sol.y + dy, sol.Y + dY, sol.M + dy, sol.f, sol.terminal,
                                 dict(sol.diagnostics), sol.driver, sol.basis, sol.spec)


# ------------------------------------------------------------- structure


def non_representable_part(sol):
    """``Q = M(T) - M(0) - int Y dw`` per path, shape (N, n)."""
    M = sol.M.values
    return M[:, -1] - M[:, 0] - as_paths(ito_integral(sol.Y), sol.ensemble.N)


def orthogonal_decomposition_check(sol, ens=None, probe=None):
    """``(E[<Q, int g dw>], SE)``: near 0 when ``Q`` is orthogonal to stochastic integrals.

    ``Y`` is estimated from the same paths, so the statistic also carries
    the sampling defect of the Ito isometry
    ``E[int Y dw int g dw] - E[int <Y, g> dt]``; its per-path standard error
    is combined in quadrature with that of ``<Q, int g dw>``.
    """
    ens = _check_ensemble(sol, ens)
    if probe is None:
        probe = AdaptedProcess.constant(ens, 1.0, sol.dim)
    if probe.dim not in (1, sol.dim):
        raise DimensionError("probe dimension differs from the solution")
    if probe.dim != sol.dim:
        probe = AdaptedProcess(ens, np.repeat(probe.values, sol.dim, axis=2))
    q = non_representable_part(sol)
    g = as_paths(ito_integral(probe), ens.N)
    stat, se_q = mean_and_se(np.sum(q * g, axis=1))
    iY = as_paths(ito_integral(sol.Y), ens.N)
    cross = kernels.forward_cumsum(
        np.sum(sol.Y.values[:, :-1] * probe.values[:, :-1], axis=2) * ens.grid.dt[None, :])[:, -1]
    _, se_iso = mean_and_se(np.sum(iY * g, axis=1) - cross)
    return stat, float(np.hypot(se_q, se_iso))


# ------------------------------------------------------------ comparison


@dataclass
class ComparisonReport:
    min_difference: float       # min over paths and knots of y - ybar
    tol: float
    eq_tol: float
    equal_knots: np.ndarray     # bool (J + 1,): |y - ybar| <= eq_tol on every path
    criterion_knots: np.ndarray  # bool (J + 1,): terminal and drivers agree on [t_j, T]
    argmin: tuple = (0, 0)

    @property
    def passed(self):
        return self.min_difference >= -self.tol

    @property
    def equality_detected(self):
        return bool(np.any(self.equal_knots))

    @property
    def equality_consistent(self):
        """Observed equality agrees with the equality criterion at every knot."""
        return bool(np.array_equal(self.equal_knots, self.criterion_knots))


def comparison_tolerance(sol, sol_bar, factor=BIAS_FACTOR):
    return factor * (sol.bias_scale() + sol_bar.bias_scale())


def _check_driver_order(sol, sol_bar, eq_slack, n_samples=1000, seed=0):
    d, db = sol.driver, sol_bar.driver
    ens = sol.ensemble
    if d is None or db is None:
        # linear problems: the non-homogeneous terms are given processes
        gap = sol.f.values[:, :-1] - sol_bar.f.values[:, :-1]
        if np.max(gap, initial=-np.inf) > eq_slack:
            raise SetupError("hypothesis f <= fbar violated on the ensemble")
        return
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(13,)))
    knots = np.unique(np.linspace(0, ens.J - 1, 10).astype(int))
    sub = ens.head(min(ens.N, max(1, n_samples // len(knots))))
    for j in knots:
        scale = 10.0 ** rng.uniform(-2, 1, size=(sub.N, 1))
        a = scale * rng.standard_normal((sub.N, 1))
        b = scale * rng.standard_normal((sub.N, 1))
        st = sub.state(int(j))
        if np.max(d(int(j), a, b, st) - db(int(j), a, b, st)) > eq_slack:
            raise SetupError(f"hypothesis f <= fbar violated at knot {j}")
    # and along the computed solutions
    for s in (sol, sol_bar):
        gap = (d.evaluate(ens, s.y, s.Y).values - db.evaluate(ens, s.y, s.Y).values)[:, :-1]
        if np.max(gap) > eq_slack:
            raise SetupError("hypothesis f <= fbar violated along a solution")


def comparison_check(sol, sol_bar, tol=None, eq_tol=None, factor=BIAS_FACTOR):
    """Check ``y >= ybar - tol`` on every path and knot for one-dimensional problems.

    Hypotheses (``y_T >= ybar_T`` pathwise, ``f <= fbar``) are verified first
    and a violation raises :class:`SetupError`.  Equality within ``eq_tol``
    at knot ``j`` is cross-checked against the equality criterion: equal
    terminal values and ``f = fbar`` along ``(ybar, Ybar)`` on ``[t_j, T]``.
    """
    ens = sol.ensemble
    if not sol_bar.ensemble.same_scenarios(ens):
        raise SetupError("comparison needs both solutions on the same ensemble")
    if sol.dim != 1 or sol_bar.dim != 1:
        raise SetupError("comparison is defined for one-dimensional equations only")
    y, yb = sol.y.values[:, :, 0], sol_bar.y.values[:, :, 0]
    scale = 1.0 + max(float(np.max(np.abs(y))), float(np.max(np.abs(yb))))
    eq_tol = 1e-9 * scale if eq_tol is None else float(eq_tol)
    tol = comparison_tolerance(sol, sol_bar, factor) if tol is None else float(tol)
    slack = 1e-12 * scale
    gapT = sol.terminal[:, 0] - sol_bar.terminal[:, 0]
    if np.min(gapT) < -slack:
        raise SetupError("hypothesis y_T >= ybar_T violated")
    _check_driver_order(sol, sol_bar, slack)

    diff = y - yb
    i, j = np.unravel_index(int(np.argmin(diff)), diff.shape)
    equal = np.max(np.abs(diff), axis=0) <= eq_tol
    # equality criterion: terminal equality and f = fbar along the bar solution after t_j
    if sol.driver is not None and sol_bar.driver is not None:
        fa = sol.driver.evaluate(ens, sol_bar.y, sol_bar.Y).values[:, :, 0]
        fb = sol_bar.driver.evaluate(ens, sol_bar.y, sol_bar.Y).values[:, :, 0]
    else:
        fa, fb = sol.f.values[:, :, 0], sol_bar.f.values[:, :, 0]
    fgap = np.max(np.abs(fa - fb), axis=0)[:-1]
    # driver agreement on [t_j, T): suffix maxima of the per-knot gap
    suffix = np.append(np.maximum.accumulate(fgap[::-1])[::-1], 0.0)
    crit = (np.max(np.abs(gapT)) <= eq_tol) & (suffix <= eq_tol)
    return ComparisonReport(float(diff[i, j]), tol, eq_tol, equal, crit, (int(i), int(j)))


# ------------------------------------------------------ time consistency


@dataclass
class ConsistencyReport:
    j1: int
    y_distance: float
    Y_distance: float
    tolerance: float
    valid: bool = True   # False when the two solves do not share scenarios

    @property
    def passed(self):
        return self.valid and self.y_distance + self.Y_distance <= self.tolerance


def time_consistency_check(problem, ens=None, basis=None, spec=None, j1=None, ridge=None,
                           restricted_problem=None, factor=BIAS_FACTOR, full=None):
    """Compare the full solve restricted to ``[t_j1, T]`` with a direct solve on ``[t_j1, T]``.

    The tolerance is ``factor`` times the summed regression and Galerkin
    error scales of both solves.
    """
    ens = ens or problem.ensemble
    spec = spec or RegressionSpec()
    if basis is None:
        basis = build_tensor_basis(ens, uniform_cells(ens.J, 4), 1)
    j1 = ens.J // 2 if j1 is None else int(j1)
    if not 0 < j1 < ens.J:
        raise ConfigurationError(f"split knot must satisfy 0 < j1 < J, got {j1}")
    if full is None:
        full = solve_linear(problem, ens, basis, spec, ridge)
    rp = problem if restricted_problem is None else restricted_problem
    rens = rp.ensemble
    valid = rens is ens or rens.same_scenarios(ens)
    if not valid:
        warnings.warn("time consistency compared on distinct ensembles: the comparison is "
                      "invalid without common random numbers", RuntimeWarning, stacklevel=2)
        rbasis = build_tensor_basis(rens, basis.meta.get("cells", uniform_cells(rens.J, 4)),
                                    basis.meta.get("state_degree", 1),
                                    basis.meta.get("anchor", "knot"))
    else:
        rbasis = basis
    reg, gal = solve_window(rens, rp.y_T, rp.f.values, j1, rens.J, rbasis, spec, ridge)
    J = ens.J
    dy = full.y.values[:, j1:] - reg.y[:, j1:]
    dY = full.Y.values[:, j1:J] - gal.Y[:, j1:J]
    ydist = float(np.sqrt(kernels.pairwise_mean(np.sum(dy * dy, axis=2).max(axis=1))))
    per = kernels.forward_cumsum(np.sum(dY * dY, axis=2) * ens.grid.dt[None, j1:J])[:, -1]
    Ydist = float(np.sqrt(kernels.pairwise_mean(per)))
    tol = factor * (full.bias_scale() + reg.max_estimation_error + gal.solve_residual)
    return ConsistencyReport(j1, ydist, Ydist, tol, valid)


# -------------------------------------------------------------- oracles


@dataclass
class Oracle:
    """A linear problem with closed-form solution ``(y*, Y*)`` on an ensemble."""

    name: str
    problem: LinearBSDEProblem
    y: AdaptedProcess
    Y: AdaptedProcess


def _oracle_wT(ens):
    W = AdaptedProcess.brownian(ens)
    return Oracle("w(T)", LinearBSDEProblem.homogeneous(ens, ens.w[:, -1]), W,
                  AdaptedProcess.constant(ens, 1.0))


def _oracle_wT2(ens):
    # f = 1: y = E(w_T^2 - (T - t) | F_t) = w_t^2, Y = 2 w_t
    W = AdaptedProcess.brownian(ens)
    prob = LinearBSDEProblem(AdaptedProcess.constant(ens, 1.0), ens.w[:, -1] ** 2)
    return Oracle("w(T)^2", prob, W * W, 2.0 * W)


def _oracle_wpT(ens):
    if not ens.model.has_auxiliary:
        raise ConfigurationError("the w'(T) oracle needs the enlarged-brownian model")
    Wp = AdaptedProcess.brownian(ens, "w'")
    return Oracle("w'(T)", LinearBSDEProblem.homogeneous(ens, ens.wp[:, -1]), Wp,
                  AdaptedProcess.zeros(ens))


ORACLES = {"w(T)": _oracle_wT, "w(T)^2": _oracle_wT2, "w'(T)": _oracle_wpT}


def make_oracle(name, ens, field_name="sweep.oracle"):
    if name not in ORACLES:
        raise RegistryError(field_name, name, ORACLES)
    return ORACLES[name](ens)


# ------------------------------------------------------------ refinement


@dataclass
class RefinementRow:
    kind: str          # "J", "N" or "m"
    J: int
    N: int
    degree: int
    y_error: float = float("nan")
    Y_error: float = float("nan")
    se: tuple = ()

    @property
    def pair_error(self):
        return self.y_error + self.Y_error


@dataclass
class RefinementTable:
    oracle: str
    rows: list = field(default_factory=list)

    def of_kind(self, kind):
        return [r for r in self.rows if r.kind == kind]

    @property
    def J_monotone(self):
        """Pair errors non-increasing along the J list."""
        e = [r.pair_error for r in self.of_kind("J")]
        return all(b <= a for a, b in zip(e, e[1:]))

    @property
    def m_monotone(self):
        e = [r.Y_error for r in self.of_kind("m")]
        slack = 1e-8 * max(e, default=0.0)  # ridge-level noise once the oracle is in the span
        return all(b <= a + slack for a, b in zip(e, e[1:]))

    def se_ratios(self):
        """Per-test ``SE(N_k) / SE(N_{k+1})`` and the ideal ``sqrt(N_{k+1} / N_k)``."""
        rows = self.of_kind("N")
        out = []
        for a, b in zip(rows, rows[1:]):
            out.append((np.array(a.se) / np.array(b.se), np.sqrt(b.N / a.N)))
        return out

    @property
    def N_scaling_ok(self):
        return all(np.all((r >= ideal / 2) & (r <= ideal * 2)) for r, ideal in self.se_ratios())


def _extend(values, factor):
    """Piecewise-constant extension of knot values to a grid ``factor`` times finer."""
    return np.repeat(values[:, :-1], factor, axis=1), values[:, -1:]


def projection_error(basis, target):
    """``l2_l2`` distance of ``target`` from its empirical L2 projection onto ``span(basis)``."""
    ens = basis.ensemble
    t = target.values
    r = np.zeros((basis.m, t.shape[2]))
    dt = ens.grid.dt
    for b in basis.blocks:
        X = (b.features * np.sqrt(dt[b.start:b.stop])[None, :, None]).reshape(-1, b.features.shape[2])
        W = (t[:, b.start:b.stop] * np.sqrt(dt[b.start:b.stop])[None, :, None]).reshape(-1, t.shape[2])
        _, XtW = kernels.normal_equations(X, W)
        r[b.offset:b.offset + b.features.shape[2]] = XtW / ens.N
    coef, _, _, _ = _solve_blocks(basis, r, None)
    proj = _reconstruct(basis, coef, t.shape[2])
    return l2_l2_norm(AdaptedProcess(ens, t - proj))


def refinement_study(oracle="w(T)", J_list=(16, 64, 256), N_list=(1000, 10000, 100000),
                     degrees=(0, 1, 2), T=1.0, seed=0, spec=None, cell_size=4, state_degree=1,
                     n_tests=10, test_seed=0, model=None, N_J=None, J_N=64):
    """Oracle errors across grids, SE scaling across ensemble sizes, projection error across degrees.

    J study: one ensemble of ``N_J`` (default ``max(N_list)``) paths on the
    finest grid is coarsened to every ``J``; each coarse solution is
    extended piecewise-constantly to the finest grid and compared with the
    oracle there (``sup_l2`` for ``y``, ``l2_l2`` for ``Y``).

    N study: prefixes of one ensemble on ``J_N`` steps; the same random
    tests are evaluated and their standard errors recorded.

    m study: projection error of the oracle ``Y*`` onto tensor bases of
    increasing state degree on the ``J_N`` ensemble of the largest size.
    """
    if not J_list or not N_list or not degrees:
        raise ConfigurationError("refinement lists must be nonempty")
    spec = spec or RegressionSpec(degree=2)
    if model is None:
        model = FiltrationModel.enlarged() if oracle == "w'(T)" else FiltrationModel.natural()
    table = RefinementTable(oracle)
    Js = sorted(int(j) for j in J_list)
    Jmax = Js[-1]
    if any(Jmax % j for j in Js):
        raise ConfigurationError("every J must divide the finest J")
    NJ = int(max(N_list) if N_J is None else N_J)
    fine = simulate_ensemble(build_uniform_grid(T, Jmax), model, NJ, seed)
    ref = make_oracle(oracle, fine)
    for J in Js:
        r = Jmax // J
        ens = fine if r == 1 else fine.coarsen(r)
        orc = make_oracle(oracle, ens)
        basis = build_tensor_basis(ens, uniform_cells(J, cell_size), state_degree)
        sol = solve_linear(orc.problem, ens, basis, spec)
        ybody, ylast = _extend(sol.y.values, r)
        Ybody, _ = _extend(sol.Y.values, r)
        ye = AdaptedProcess(fine, np.concatenate([ybody, ylast], axis=1)) - ref.y
        Ye = AdaptedProcess(fine, np.concatenate([Ybody, np.zeros_like(ylast)], axis=1)) - ref.Y
        table.rows.append(RefinementRow("J", J, NJ, state_degree, sup_l2_norm(ye), l2_l2_norm(Ye)))

    Ns = sorted(int(n) for n in N_list)
    big = simulate_ensemble(build_uniform_grid(T, J_N), model, Ns[-1], seed)
    for N in Ns:
        ens = big if N == big.N else big.head(N)
        orc = make_oracle(oracle, ens)
        basis = build_tensor_basis(ens, uniform_cells(J_N, cell_size), state_degree)
        sol = solve_linear(orc.problem, ens, basis, spec)
        tests = random_tests(ens, n_tests, test_seed)
        ses = tuple(run_test(sol, t).se for t in tests)
        table.rows.append(RefinementRow(
            "N", J_N, N, state_degree, sup_l2_norm(sol.y - orc.y), l2_l2_norm(sol.Y - orc.Y), ses))

    orc = make_oracle(oracle, big)
    for d in sorted(int(d) for d in degrees):
        basis = build_tensor_basis(big, uniform_cells(J_N, cell_size), d)
        table.rows.append(RefinementRow("m", J_N, big.N, d, Y_error=projection_error(basis, orc.Y)))
    return table


__all__ = [
    "DualityTest", "TestResult", "VerificationReport", "duality_residual",
    "pseudo_duality_residual", "random_test_suite", "random_tests", "run_test",
    "orthogonal_decomposition_check", "non_representable_part", "comparison_check",
    "ComparisonReport", "time_consistency_check", "ConsistencyReport", "refinement_study",
    "RefinementTable", "make_oracle", "ORACLES", "corrupt", "projection_error",
    "bias_tolerance",
]
