import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsdelab import (
    AdaptedProcess, AdaptednessError, ConfigurationError, DimensionError, FiltrationModel,
    TimeGrid, build_uniform_grid, ito_integral, ito_process, l2_l1_norm, l2_l2_norm,
    mean_and_se, rms, simulate_ensemble, sup_l2_norm, time_integral, time_integral_process,
)
from bsdelab.core import CHUNK, tail_integral


def test_uniform_grid():
    g = build_uniform_grid(2.0, 8)
    assert g.J == 8 and g.T == 2.0
    assert np.allclose(g.dt, 0.25)
    assert g.knots[-1] == 2.0


@pytest.mark.parametrize("T, J", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5), (float("nan"), 3)])
def test_grid_rejects_bad_input(T, J):
    with pytest.raises(ConfigurationError):
        build_uniform_grid(T, J)


def test_grid_rejects_non_increasing_knots():
    with pytest.raises(ConfigurationError):
        TimeGrid([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ConfigurationError):
        TimeGrid([0.1, 0.5])


def test_grid_arrays_read_only():
    g = build_uniform_grid(1.0, 4)
    with pytest.raises(ValueError):
        g.knots[0] = 1.0


def test_simulation_is_deterministic(grid16):
    a = simulate_ensemble(grid16, FiltrationModel.natural(), 100, 42)
    b = simulate_ensemble(grid16, FiltrationModel.natural(), 100, 42)
    c = simulate_ensemble(grid16, FiltrationModel.natural(), 100, 43)
    assert a.same_scenarios(b)
    assert not np.array_equal(a.dw, c.dw)


def test_smaller_ensemble_is_prefix_across_chunks(grid16):
    big = simulate_ensemble(grid16, FiltrationModel.enlarged(), CHUNK + 10, 1)
    small = simulate_ensemble(grid16, FiltrationModel.enlarged(), CHUNK + 3, 1)
    assert np.array_equal(big.dw[:CHUNK + 3], small.dw)
    assert np.array_equal(big.dwp[:CHUNK + 3], small.dwp)
    assert big.head(CHUNK + 3).same_scenarios(small)


def test_channels_independent(enl_small):
    r = np.corrcoef(enl_small.w[:, -1], enl_small.wp[:, -1])[0, 1]
    assert abs(r) < 4 / np.sqrt(enl_small.N)


def test_increment_moments(nat_small):
    dw = nat_small.dw
    assert abs(dw.mean()) < 5 * np.sqrt(1 / 16 / dw.size)
    assert dw.var() == pytest.approx(1 / 16, rel=0.02)


@pytest.mark.parametrize("dist, params, check", [
    ("bernoulli", (0.3,), lambda x: set(np.unique(x)) <= {0.0, 1.0} and abs(x.mean() - 0.3) < 0.03),
    ("uniform", (-2.0, 1.0), lambda x: x.min() >= -2 and x.max() <= 1),
    ("normal", (1.0, 2.0), lambda x: abs(x.mean() - 1) < 0.15 and abs(x.std() - 2) < 0.15),
])
def test_initial_variable_laws(grid16, dist, params, check):
    ens = simulate_ensemble(grid16, FiltrationModel.initial(dist, *params), 3000, 2)
    assert check(ens.xi)


def test_model_validation():
    with pytest.raises(ConfigurationError):
        FiltrationModel("weird")
    with pytest.raises(ConfigurationError):
        FiltrationModel.initial("bernoulli", 0.1, 0.2)


def test_information_state_blocks_future(nat_small):
    s = nat_small.state(5)
    assert np.array_equal(s.w_at(3), nat_small.w[:, 3])
    with pytest.raises(AdaptednessError):
        s.w_at(6)
    with pytest.raises(AdaptednessError):
        s.wp
    with pytest.raises(AdaptednessError):
        s.xi


def test_builder_cannot_look_ahead(nat_small):
    with pytest.raises(AdaptednessError):
        AdaptedProcess.build(nat_small, lambda s: s.w_at(s.j + 1))


def test_process_values_read_only(nat_small):
    p = AdaptedProcess.brownian(nat_small)
    with pytest.raises(ValueError):
        p.values[0, 0, 0] = 1.0


def test_process_algebra(nat_small):
    W = AdaptedProcess.brownian(nat_small)
    one = AdaptedProcess.constant(nat_small, 1.0)
    assert np.allclose((W * 2 - W + one).values, nat_small.w[:, :, None] + 1)
    assert np.allclose((-W).values, -(W.values))


def test_process_on_other_ensemble_rejected(nat_small, enl_small):
    with pytest.raises(DimensionError):
        AdaptedProcess.brownian(nat_small) + AdaptedProcess.brownian(enl_small)


def test_coarsen_keeps_paths(nat_small):
    c = nat_small.coarsen(4)
    assert c.J == 4
    assert np.allclose(c.w, nat_small.w[:, ::4])
    with pytest.raises(ConfigurationError):
        nat_small.coarsen(3)


def test_ito_integral_of_one_is_w(nat_small):
    one = AdaptedProcess.constant(nat_small, 1.0)
    assert np.allclose(ito_integral(one), nat_small.w[:, -1])
    assert np.allclose(ito_process(one).values[:, :, 0], nat_small.w)


def test_ito_isometry(nat_small):
    W = AdaptedProcess.brownian(nat_small)
    I = ito_integral(W)
    # E (int w dw)^2 = int_0^1 t dt = 1/2, left-point sum gives sum t_j dt
    expect = np.sum(nat_small.grid.knots[:-1] * nat_small.grid.dt)
    m, se = mean_and_se(I ** 2)
    assert abs(m - expect) < 5 * se
    assert abs(np.mean(I)) < 4 * np.std(I) / np.sqrt(nat_small.N)


def test_time_integrals(nat_small):
    one = AdaptedProcess.constant(nat_small, 1.0)
    assert np.allclose(time_integral(one), 1.0)
    assert np.allclose(time_integral(one, 4, 8), 0.25)
    assert np.allclose(time_integral_process(one).values[0, :, 0], nat_small.grid.knots)
    tail = tail_integral(one)
    assert np.allclose(tail[0, :, 0], 1.0 - nat_small.grid.knots)
    with pytest.raises(IndexError):
        time_integral(one, 5, 2)


def test_norms_on_constants(nat_small):
    c = AdaptedProcess.constant(nat_small, 3.0)
    assert sup_l2_norm(c) == pytest.approx(3.0)
    assert l2_l2_norm(c) == pytest.approx(3.0)
    assert l2_l1_norm(c) == pytest.approx(3.0)
    assert l2_l2_norm(c, 8) == pytest.approx(3.0 * np.sqrt(0.5))
    assert rms(np.full((10, 2), 1.0)) == pytest.approx(np.sqrt(2))


def test_norm_ordering(nat_small):
    W = AdaptedProcess.brownian(nat_small)
    assert l2_l1_norm(W) <= l2_l2_norm(W) * np.sqrt(nat_small.grid.T) + 1e-12
    assert l2_l2_norm(W) <= sup_l2_norm(W) * np.sqrt(nat_small.grid.T) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200))
def test_mean_and_se(xs):
    x = np.array(xs)
    m, se = mean_and_se(x)
    assert m == pytest.approx(np.mean(x), rel=1e-9, abs=1e-6)
    assert se == pytest.approx(np.std(x, ddof=1) / np.sqrt(len(x)), rel=1e-6, abs=1e-6)


def test_as_paths_shape_errors(nat_small):
    with pytest.raises(DimensionError):
        AdaptedProcess(nat_small, np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        AdaptedProcess.build(nat_small, lambda s: np.zeros(7))
