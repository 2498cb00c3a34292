import numpy as np
import pytest

from bsdelab import (
    AdaptedProcess, DualityTest, FiltrationModel, LinearBSDEProblem, RegressionSpec,
    TranspositionSolution, build_tensor_basis, build_uniform_grid, comparison_check,
    duality_residual, make_driver, make_oracle, orthogonal_decomposition_check,
    pseudo_duality_residual, random_test_suite, refinement_study, simulate_ensemble,
    solve_linear, solve_semilinear, time_consistency_check, uniform_cells,
)
from bsdelab.errors import ConfigurationError, DimensionError, RegistryError, SetupError
from bsdelab.linear import martingale_part
from bsdelab.verification import (
    corrupt, non_representable_part, random_tests, run_test, projection_error,
)

SPEC2 = RegressionSpec(2)


def _eta_one(state):
    return np.ones((state.N, 1))


def _eta_zero(state):
    return np.zeros((state.N, 1))


def _test(ens, j0, eta, u=0.0, v=0.0):
    return DualityTest(j0, eta, AdaptedProcess.constant(ens, u), AdaptedProcess.constant(ens, v))


@pytest.fixture(scope="module")
def wT_solution(nat_mid):
    b = build_tensor_basis(nat_mid, uniform_cells(32, 4), 1)
    return solve_linear(LinearBSDEProblem.homogeneous(nat_mid, nat_mid.w[:, -1]), nat_mid, b, SPEC2)


def _exact_solution(ens):
    # y = w, Y = 1, f = 0: satisfies the discrete identity in expectation exactly
    W = AdaptedProcess.brownian(ens)
    f = AdaptedProcess.zeros(ens)
    diag = {"regression_error": 0.0, "gram_solve_residual": 0.0}
    return TranspositionSolution(W, AdaptedProcess.constant(ens, 1.0), martingale_part(W, f), f,
                                 ens.w[:, -1:], diag)


def test_exact_solution_passes_random_suite(nat_mid):
    rep = random_test_suite(_exact_solution(nat_mid), n_tests=20, seed=4)
    assert rep.n_tests == 20
    assert rep.passed
    for r in rep.results:
        assert r.bias_tolerance == pytest.approx(0.0, abs=1e-15)


def test_trivial_test_identity(wT_solution):
    # eta = 1, u = v = 0: the defect is y_T - y(t_j0); its mean vanishes because
    # regression residuals have mean zero
    res, se = duality_residual(wT_solution, test=_test(wT_solution.ensemble, 5, _eta_one))
    assert abs(res) < 1e-12


def test_corrupted_Y_shifts_residual_by_minus_remaining_time(wT_solution):
    ens = wT_solution.ensemble
    for j0 in (0, 8, 20):
        t = _test(ens, j0, _eta_zero, v=1.0)
        base, _ = duality_residual(wT_solution, test=t)
        shifted, _ = duality_residual(corrupt(wT_solution, dY=1.0), test=t)
        assert shifted - base == pytest.approx(-(1.0 - ens.grid.knots[j0]), abs=1e-10)


def test_pseudo_duality_is_blind_to_Y(wT_solution):
    bad = corrupt(wT_solution, dY=1.0)
    for t in random_tests(wT_solution.ensemble, 5, seed=2):
        assert pseudo_duality_residual(bad, test=t) == pseudo_duality_residual(wT_solution, test=t)


def test_corrupted_y_shifts_residual_by_minus_one(wT_solution):
    t = _test(wT_solution.ensemble, 3, _eta_one)
    base, _ = duality_residual(wT_solution, test=t)
    shifted, _ = duality_residual(corrupt(wT_solution, dy=1.0), test=t)
    assert shifted - base == pytest.approx(-1.0, abs=1e-10)


def test_suite_detects_corruption(wT_solution):
    assert random_test_suite(wT_solution, n_tests=20, seed=1).passed
    bad = random_test_suite(corrupt(wT_solution, dY=1.0), n_tests=20, seed=1)
    assert not bad.passed
    assert bad.n_failed >= 5


def test_random_tests_reproducible(nat_small):
    a = random_tests(nat_small, 6, seed=9)
    b = random_tests(nat_small, 6, seed=9)
    c = random_tests(nat_small, 6, seed=10)
    assert [t.j0 for t in a] == [t.j0 for t in b]
    for ta, tb in zip(a, b):
        assert np.array_equal(ta.u.values, tb.u.values)
        assert np.array_equal(ta.v.values, tb.v.values)
    assert any(not np.array_equal(ta.u.values, tc.u.values) for ta, tc in zip(a, c))


def test_random_tests_are_piecewise_adapted(nat_small):
    t = random_tests(nat_small, 1, seed=0)[0]
    u = t.u.values[:, :, 0]
    # constant in time inside each 8-knot cell
    assert np.array_equal(u[:, 0], u[:, 7])
    assert not np.array_equal(u[:, 7], u[:, 8])


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_n_tests_must_be_positive_integer(nat_small, bad):
    with pytest.raises(ConfigurationError):
        random_tests(nat_small, bad, seed=0)


def test_start_knot_checked(wT_solution):
    with pytest.raises(IndexError):
        duality_residual(wT_solution, test=_test(wT_solution.ensemble, 32, _eta_one))
    with pytest.raises(ConfigurationError):
        duality_residual(wT_solution)


def test_orthogonality_natural(wT_solution):
    stat, se = orthogonal_decomposition_check(wT_solution)
    assert abs(stat) <= 4 * se
    probe = AdaptedProcess.brownian(wT_solution.ensemble)
    stat, se = orthogonal_decomposition_check(wT_solution, probe=probe)
    assert abs(stat) <= 4 * se


def test_orthogonality_enlarged():
    ens = simulate_ensemble(build_uniform_grid(1.0, 32), FiltrationModel.enlarged(), 20000, 8)
    sol = solve_linear(LinearBSDEProblem.homogeneous(ens, ens.wp[:, -1]), ens,
                       build_tensor_basis(ens, uniform_cells(32, 4), 1), SPEC2)
    q = non_representable_part(sol)
    assert np.sqrt(np.mean(q ** 2)) > 0.9
    stat, se = orthogonal_decomposition_check(sol)
    assert abs(stat) <= 4 * se
    with pytest.raises(DimensionError):
        orthogonal_decomposition_check(sol, probe=AdaptedProcess.zeros(ens, 2))


def test_comparison_ordered_terminals(nat_small):
    b = build_tensor_basis(nat_small, uniform_cells(16, 4), 1)
    hi = solve_semilinear(make_driver("lipschitz-sin", kappa=0.5), nat_small.w[:, -1], nat_small, b)
    lo = solve_semilinear(make_driver("lipschitz-sin", kappa=0.5, c=0.3), nat_small.w[:, -1] - 0.5,
                          nat_small, b)
    rep = comparison_check(hi, lo)
    assert rep.passed and rep.min_difference > 0
    assert not rep.equality_detected and rep.equality_consistent


def test_comparison_equal_problems(nat_small):
    sol = solve_semilinear(make_driver("affine", a=0.4), nat_small.w[:, -1], nat_small)
    rep = comparison_check(sol, sol)
    assert rep.passed
    assert rep.equal_knots.all() and rep.equality_consistent


def test_comparison_equality_only_late():
    # same terminal, drivers differ only before t = 1/2
    ens = simulate_ensemble(build_uniform_grid(1.0, 16), FiltrationModel("natural"), 2000, 1)
    f = AdaptedProcess.zeros(ens)
    fb = AdaptedProcess.build(ens, lambda s: np.full((s.N, 1), 1.0 if s.j < 8 else 0.0))
    b = build_tensor_basis(ens, uniform_cells(16, 4), 1)
    s = solve_linear(LinearBSDEProblem(f, ens.w[:, -1]), ens, b, SPEC2)
    sb = solve_linear(LinearBSDEProblem(fb, ens.w[:, -1]), ens, b, SPEC2)
    rep = comparison_check(s, sb)
    assert rep.passed
    assert rep.equal_knots[8:].all() and not rep.equal_knots[:8].any()
    assert rep.equality_consistent


def test_comparison_hypotheses_enforced(nat_small):
    b = build_tensor_basis(nat_small, uniform_cells(16, 4), 1)
    s = solve_semilinear(make_driver("zero"), nat_small.w[:, -1], nat_small, b)
    s.driver = make_driver("zero")
    up = solve_semilinear(make_driver("zero"), nat_small.w[:, -1] + 1, nat_small, b)
    up.driver = make_driver("zero")
    with pytest.raises(SetupError, match="y_T"):
        comparison_check(s, up)
    big_f = solve_semilinear(make_driver("affine", c=0.1), nat_small.w[:, -1] + 1, nat_small, b)
    with pytest.raises(SetupError, match="f <= fbar"):
        comparison_check(big_f, s)
    other = simulate_ensemble(nat_small.grid, nat_small.model, 100, 99)
    with pytest.raises(SetupError, match="same ensemble"):
        comparison_check(s, solve_semilinear(make_driver("zero"), other.w[:, -1], other))


def test_time_consistency_deterministic():
    ens = simulate_ensemble(build_uniform_grid(1.0, 16), FiltrationModel("natural"), 500, 2)
    prob = LinearBSDEProblem(AdaptedProcess.constant(ens, -0.3), 2.0)
    rep = time_consistency_check(prob, ens, j1=8)
    assert rep.y_distance < 1e-14 and rep.Y_distance < 1e-14
    assert rep.passed


def test_time_consistency_random_terminal(nat_small):
    prob = LinearBSDEProblem(AdaptedProcess.build(nat_small, lambda s: np.sin(s.w)),
                             nat_small.w[:, -1] ** 2)
    rep = time_consistency_check(prob, nat_small, j1=5, spec=SPEC2)
    assert rep.passed
    with pytest.raises(ConfigurationError):
        time_consistency_check(prob, nat_small, j1=16)


def test_time_consistency_warns_on_distinct_ensembles(nat_small):
    other = simulate_ensemble(nat_small.grid, nat_small.model, nat_small.N, 12)
    prob = LinearBSDEProblem.homogeneous(nat_small, nat_small.w[:, -1])
    rprob = LinearBSDEProblem.homogeneous(other, other.w[:, -1])
    with pytest.warns(RuntimeWarning, match="common random numbers"):
        rep = time_consistency_check(prob, nat_small, j1=8, restricted_problem=rprob)
    assert not rep.valid and not rep.passed


def test_oracle_registry(nat_small, enl_small):
    o = make_oracle("w(T)^2", nat_small)
    assert np.array_equal(o.problem.y_T[:, 0], nat_small.w[:, -1] ** 2)
    assert np.allclose(o.Y.values[:, :, 0], 2 * nat_small.w)
    assert make_oracle("w'(T)", enl_small).Y.values.max() == 0.0
    with pytest.raises(ConfigurationError):
        make_oracle("w'(T)", nat_small)
    with pytest.raises(RegistryError):
        make_oracle("w(T)^3", nat_small)


def test_projection_error_zero_in_span(nat_small):
    b = build_tensor_basis(nat_small, uniform_cells(16, 4), 1)
    assert projection_error(b, AdaptedProcess.brownian(nat_small)) < 1e-6
    assert projection_error(b, AdaptedProcess.brownian(nat_small) * AdaptedProcess.brownian(nat_small)) > 0.1


def test_small_refinement_study():
    tab = refinement_study("w(T)^2", J_list=(8, 32), N_list=(2000, 8000), degrees=(0, 1, 2),
                           seed=3, J_N=16, n_tests=4)
    assert [r.J for r in tab.of_kind("J")] == [8, 32]
    assert [r.N for r in tab.of_kind("N")] == [2000, 8000]
    assert tab.J_monotone and tab.m_monotone
    ratios = tab.se_ratios()
    assert len(ratios) == 1 and ratios[0][1] == pytest.approx(2.0)
    assert tab.N_scaling_ok
    with pytest.raises(ConfigurationError):
        refinement_study("w(T)", J_list=(8, 12), N_list=(100,), degrees=(1,))


def test_report_threshold(wT_solution):
    r = run_test(wT_solution, random_tests(wT_solution.ensemble, 1, seed=5)[0])
    assert r.threshold == pytest.approx(3 * r.se + r.bias_tolerance)
    assert r.passed == (abs(r.residual) <= r.threshold)
