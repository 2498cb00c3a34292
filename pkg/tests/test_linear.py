import warnings

import numpy as np
import pytest

from bsdelab import (
    AdaptedProcess, ConditioningError, ConfigurationError, DimensionError, GalerkinBasis,
    LinearBSDEProblem, RegressionSpec, apriori_ratio, assemble_gram, assemble_rhs,
    build_tensor_basis, ito_process, solve_linear, solve_Y_galerkin, uniform_cells,
    simulate_ensemble, sup_l2_norm, l2_l2_norm,
)
from bsdelab.linear import _solve_blocks

SPEC2 = RegressionSpec(degree=2)


def test_uniform_cells():
    assert uniform_cells(10, 4) == [(0, 4), (4, 8), (8, 10)]
    with pytest.raises(ConfigurationError):
        uniform_cells(10, 0)


def test_two_cells_degree_one_has_four_elements(nat_small):
    b = build_tensor_basis(nat_small, uniform_cells(16, 8), 1)
    assert b.m == 4
    assert b.labels == ["cell0:1", "cell0:w", "cell1:1", "cell1:w"]


def test_enlarged_basis_includes_auxiliary(enl_small):
    b = build_tensor_basis(enl_small, uniform_cells(16, 8), 1)
    assert b.m == 6


def test_cells_must_partition(nat_small):
    with pytest.raises(ConfigurationError):
        build_tensor_basis(nat_small, [(0, 8), (9, 16)], 1)
    with pytest.raises(ConfigurationError):
        build_tensor_basis(nat_small, [(0, 8)], 1)
    with pytest.raises(ConfigurationError):
        build_tensor_basis(nat_small, [(0, 16)], 1, anchor="middle")


def test_gram_symmetric_psd_block_diagonal(nat_small):
    b = build_tensor_basis(nat_small, uniform_cells(16, 4), 2)
    G = assemble_gram(b)
    assert G.shape == (12, 12)
    assert np.allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() > 0
    assert np.all(G[:3, 3:] == 0)


def test_gram_matches_direct_formula(nat_small):
    b = build_tensor_basis(nat_small, uniform_cells(16, 8), 1)
    G = assemble_gram(b)
    dt = nat_small.grid.dt
    E = [b.element(k).values[:, :-1, 0] for k in range(b.m)]
    ref = np.array([[np.mean(np.sum(e * f * dt, axis=1)) for f in E] for e in E])
    assert np.allclose(G, ref, rtol=1e-12, atol=1e-15)


def test_duplicate_element_warns_and_zero_ridge_fails(nat_small):
    one = AdaptedProcess.constant(nat_small, 1.0)
    b = GalerkinBasis.from_elements(nat_small, [one, one])
    with pytest.warns(RuntimeWarning, match="ill-conditioned"):
        assemble_gram(b)
    prob = LinearBSDEProblem.homogeneous(nat_small, nat_small.w[:, -1])
    with pytest.raises(ConditioningError):
        solve_Y_galerkin(b, prob, ridge=0.0)
    Y, fit = solve_Y_galerkin(b, prob)   # default ridge regularises
    assert np.isfinite(fit.coef).all()


def test_rhs_equals_literal_duality_formula(nat_small):
    """Summation-by-parts right-hand side against E<z_k(T), xi> - E int <z_k, f> dt."""
    ens = nat_small
    b = build_tensor_basis(ens, uniform_cells(16, 4), 1)
    f = AdaptedProcess.build(ens, lambda s: np.sin(s.w) + s.t)
    xi = ens.w[:, -1] ** 2 + ens.w[:, 5]
    prob = LinearBSDEProblem(f, xi)
    r = assemble_rhs(b, prob)
    # centred data leave the expectation unchanged; use them for the literal form too
    xi_c = xi - xi.mean()
    f_c = f.values[:, :, 0] - f.values[:, :, 0].mean(axis=0)
    ref = []
    for k in range(b.m):
        z = ito_process(b.element(k)).values[:, :, 0]
        ref.append(np.mean(z[:, -1] * xi_c) - np.mean(np.sum(z[:, :-1] * f_c[:, :-1] * ens.grid.dt, axis=1)))
    assert np.allclose(r[:, 0], ref, rtol=1e-12, atol=1e-12)


def test_constant_terminal_gives_zero_Y(nat_small):
    prob = LinearBSDEProblem.homogeneous(nat_small, 2.0)
    sol = solve_linear(prob, nat_small, build_tensor_basis(nat_small, uniform_cells(16, 4), 1))
    assert np.all(sol.Y.values == 0.0)
    assert np.allclose(sol.y.values, 2.0)


def test_deterministic_driver_closed_form(nat_small):
    # f = -0.1, y_T = 0: y(t) = 0.1 (T - t)
    f = AdaptedProcess.constant(nat_small, -0.1)
    sol = solve_linear(LinearBSDEProblem(f, 0.0), nat_small)
    assert np.allclose(sol.y.values[0, :, 0], 0.1 * (1 - nat_small.grid.knots))
    assert np.allclose(sol.Y.values, 0.0, atol=1e-12)


def test_brownian_oracle(nat_mid):
    sol = solve_linear(LinearBSDEProblem.homogeneous(nat_mid, nat_mid.w[:, -1]), nat_mid,
                       build_tensor_basis(nat_mid, uniform_cells(32, 4), 1), SPEC2)
    W = AdaptedProcess.brownian(nat_mid)
    assert l2_l2_norm(sol.Y - 1.0) < 0.06
    assert sup_l2_norm(sol.y - W) < 0.06


def test_ito_oracle(nat_mid):
    W = AdaptedProcess.brownian(nat_mid)
    prob = LinearBSDEProblem(AdaptedProcess.constant(nat_mid, 1.0), nat_mid.w[:, -1] ** 2)
    sol = solve_linear(prob, nat_mid, build_tensor_basis(nat_mid, uniform_cells(32, 4), 1), SPEC2)
    assert l2_l2_norm(sol.Y - 2 * W) / l2_l2_norm(2 * W) < 0.08
    assert l2_l2_norm(sol.y - W * W) / l2_l2_norm(W * W) < 0.05


def test_knot_anchor_beats_cell_start_for_Y_linear_in_w(nat_mid):
    W = AdaptedProcess.brownian(nat_mid)
    prob = LinearBSDEProblem(AdaptedProcess.constant(nat_mid, 1.0), nat_mid.w[:, -1] ** 2)
    err = {}
    for anchor in ("knot", "cell-start"):
        b = build_tensor_basis(nat_mid, uniform_cells(32, 8), 1, anchor)
        Y, _ = solve_Y_galerkin(b, prob)
        err[anchor] = l2_l2_norm(Y - 2 * W)
    assert err["knot"] < err["cell-start"]


def test_enlarged_terminal_has_no_representation(enl_small):
    sol = solve_linear(LinearBSDEProblem.homogeneous(enl_small, enl_small.wp[:, -1]), enl_small,
                       build_tensor_basis(enl_small, uniform_cells(16, 4), 1), SPEC2)
    assert l2_l2_norm(sol.Y) < 0.1
    assert sup_l2_norm(sol.y - AdaptedProcess.brownian(enl_small, "w'")) < 0.1


def test_linearity_in_data(nat_small):
    b = build_tensor_basis(nat_small, uniform_cells(16, 4), 1)
    p1 = LinearBSDEProblem.homogeneous(nat_small, nat_small.w[:, -1])
    p2 = LinearBSDEProblem(AdaptedProcess.brownian(nat_small), nat_small.w[:, -1] ** 2)
    s1, s2, s12 = (solve_linear(p, nat_small, b, SPEC2, ridge=0.0) for p in (p1, p2, p1 + p2))
    assert np.allclose(s12.y.values, s1.y.values + s2.y.values, atol=1e-10)
    assert np.allclose(s12.Y.values, s1.Y.values + s2.Y.values, atol=1e-10)


def test_corrected_form_holds_to_rounding(nat_small):
    f = AdaptedProcess.build(nat_small, lambda s: np.cos(s.w))
    sol = solve_linear(LinearBSDEProblem(f, nat_small.w[:, -1] ** 2), nat_small)
    assert sol.diagnostics["corrected_form_residual"] < 1e-12


def test_diagnostics_present(nat_small):
    sol = solve_linear(LinearBSDEProblem.homogeneous(nat_small, nat_small.w[:, -1]), nat_small)
    for key in ("gram_condition", "gram_ridge", "gram_solve_residual", "regression_error",
                "regression_residual_rms", "basis_size"):
        assert key in sol.diagnostics


def test_apriori_ratio(nat_small):
    sol = solve_linear(LinearBSDEProblem.homogeneous(nat_small, nat_small.w[:, -1]), nat_small)
    r = apriori_ratio(sol)
    assert r.defined and 0.5 < r.value < 5
    zero = solve_linear(LinearBSDEProblem.homogeneous(nat_small, 0.0), nat_small)
    assert apriori_ratio(zero).status == "undefined"


def test_problem_validation(nat_small):
    with pytest.raises(DimensionError):
        LinearBSDEProblem(AdaptedProcess.zeros(nat_small, 2), nat_small.w[:, -1])
    with pytest.raises(ConfigurationError):
        LinearBSDEProblem.homogeneous(nat_small, np.full(nat_small.N, np.inf))


def test_vector_valued_problem(nat_small):
    yT = np.column_stack([nat_small.w[:, -1], 2 * nat_small.w[:, -1]])
    sol = solve_linear(LinearBSDEProblem.homogeneous(nat_small, yT), nat_small)
    assert sol.Y.values.shape[2] == 2
    assert np.allclose(sol.Y.values[:, :, 1], 2 * sol.Y.values[:, :, 0])


def test_restricted_basis_solves_identically(nat_small):
    b = build_tensor_basis(nat_small, uniform_cells(16, 4), 1)
    r = b.restrict(8)
    assert r.m == 4 and r.blocks[0].start == 8
    full = np.zeros((4, 1))
    full[1] = 1.0
    c1 = _solve_blocks(b, np.vstack([np.zeros((4, 1)), full]), None)[0]
    c2 = _solve_blocks(r, full, None)[0]
    assert np.array_equal(c1[4:], c2)
