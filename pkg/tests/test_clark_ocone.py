import math

import numpy as np
import pytest

from levy_malliavin.clark_ocone import (
    Representation,
    closed_form_representation,
    conditional_derivative,
    fitted_slope,
    nested_integrands,
    reconstruct,
    residual_study,
    variance_identity,
)
from levy_malliavin.errors import InnerBudgetZero, UnsupportedVariant
from levy_malliavin.integrate import Integrand1, Integrand2
from levy_malliavin.malliavin import IteratedIntegral, RunningMax, terminal_square, terminal_value
from levy_malliavin.chaos import MultiIndex
from levy_malliavin.model import JumpMeasure, LevyModel, TwoPointLaw
from levy_malliavin.simulate import SeedSpec, TimeGrid, simulate_batch

JUMP = LevyModel(0.3, 0.5, JumpMeasure(1.0, TwoPointLaw(0.5, 0.5, -0.5, 0.5)), 1.0)
BM = LevyModel(0.0, 1.0, JumpMeasure(0.0), 1.0)


def test_linear_reconstruction_is_exact():
    b = simulate_batch(JUMP, TimeGrid.uniform(1.0, 32), 500, 71)
    rep = closed_form_representation(terminal_value(1.0), JUMP)
    np.testing.assert_allclose(reconstruct(b, rep, JUMP), b.x_terminal, atol=1e-13)


def test_constant_functional_reconstructs_to_mean():
    b = simulate_batch(JUMP, TimeGrid.uniform(1.0, 16), 50, 72)
    zero1 = Integrand1(lambda s: np.zeros(s.t.shape), deterministic=True)
    zero2 = Integrand2(lambda s, z: np.zeros(np.broadcast_shapes(s.t.shape, np.shape(z))), deterministic=True)
    np.testing.assert_allclose(reconstruct(b, Representation(2.5, zero1, zero2), JUMP), 2.5)


def test_linear_conditional_derivative_is_sigma():
    path = simulate_batch(JUMP, TimeGrid.uniform(1.0, 16), 1, 73).path(0)
    est, se = conditional_derivative(terminal_value(1.0), JUMP, path, 0.5, None, 50, SeedSpec(1))
    assert est == pytest.approx(0.5) and se == 0


def test_quadratic_conditional_derivatives_match_closed_form():
    F = terminal_square(1.0)
    path = simulate_batch(JUMP, TimeGrid.uniform(1.0, 16), 1, 74).path(0)
    t = 0.375
    xt = path.x[path.times <= t][-1]
    fwd = xt + 0.3 * (1 - t)
    est, se = conditional_derivative(F, JUMP, path, t, None, 4000, SeedSpec(2))
    assert abs(est - 2 * 0.5 * fwd) < 3 * se
    zs = np.array([-0.5, 0.5])
    est, se = conditional_derivative(F, JUMP, path, t, zs, 4000, SeedSpec(3))
    assert np.all(np.abs(est - (2 * zs * fwd + zs**2)) < 3 * se + 1e-12)


def test_inner_budget_zero():
    path = simulate_batch(JUMP, TimeGrid.uniform(1.0, 4), 1, 75).path(0)
    with pytest.raises(InnerBudgetZero):
        conditional_derivative(terminal_value(1.0), JUMP, path, 0.5, None, 0)


def test_nested_integrands_match_closed_form():
    F = terminal_square(1.0)
    b = simulate_batch(JUMP, TimeGrid.uniform(1.0, 8), 4, 76)
    t_grid = np.array([0.0, 0.5])
    z_grid = np.array([0.5])
    nested = nested_integrands(F, JUMP, b, 1500, 77, t_grid, z_grid)
    rep = closed_form_representation(F, JUMP)
    for j, t in enumerate(t_grid):
        idx = b.index_at(t)[:, None]
        x = np.take_along_axis(b.x, idx, axis=1)[:, 0]
        fwd = x + 0.3 * (1 - t)
        assert np.all(np.abs(nested.phi[:, j] - 2 * 0.5 * fwd) < 3.5 * nested.phi_se[:, j])
        assert np.all(np.abs(nested.psi[:, j, 0] - (fwd + 0.25)) < 3.5 * nested.psi_se[:, j, 0])
    assert rep.mean == pytest.approx(0.09 + 0.5)


def test_nested_integrands_reproducible():
    F = terminal_square(1.0)
    b = simulate_batch(JUMP, TimeGrid.uniform(1.0, 4), 3, 78)
    a = nested_integrands(F, JUMP, b, 50, 79, np.array([0.25]), np.array([0.5]))
    c = nested_integrands(F, JUMP, b[1:], 50, 79, np.array([0.25]), np.array([0.5]), first_index=1)
    np.testing.assert_array_equal(a.phi[1:], c.phi)


def test_grid_integrands_reconstruct_linear_case():
    F = terminal_value(1.0)
    b = simulate_batch(JUMP, TimeGrid.uniform(1.0, 8), 3, 80)
    nested = nested_integrands(F, JUMP, b, 5, 81, None, np.array([-0.5, 0.5]))
    np.testing.assert_allclose(reconstruct(b, nested, JUMP, mean=0.3), b.x_terminal, atol=1e-12)


def test_residual_study_quadratic():
    study = residual_study(terminal_square(1.0), JUMP, [32, 128], 4000, 82)
    assert study.decreasing
    assert 0.3 < study.slope < 0.7
    assert study.to_csv().splitlines()[0] == "delta,residual_l2,se,relative,slope,pass"


def test_residual_study_exact_case_has_no_slope():
    study = residual_study(terminal_value(1.0), JUMP, [8, 16], 500, 83, rel_tol=1e-10, require_decrease=False)
    assert study.passed and math.isnan(study.slope)


def test_fitted_slope():
    d = np.array([1 / 64, 1 / 128, 1 / 256])
    assert fitted_slope(d, 3 * np.sqrt(d)) == pytest.approx(0.5)
    assert math.isnan(fitted_slope(d, np.zeros(3)))


def test_variance_identity_quadratic():
    F = terminal_square(1.0)
    vi = variance_identity(F, closed_form_representation(F, JUMP), JUMP, 40_000, 64, 84)
    assert vi.passed


def test_unsupported_closed_form():
    with pytest.raises(UnsupportedVariant):
        closed_form_representation(IteratedIntegral(MultiIndex.of(1)), JUMP)
    with pytest.raises(ValueError):
        closed_form_representation(RunningMax(), BM)
