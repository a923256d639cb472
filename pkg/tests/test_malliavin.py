import numpy as np
import pytest

from levy_malliavin.chaos import MultiIndex, tensor_product
from levy_malliavin.doleans import ExponentParams, doleans_exponential
from levy_malliavin.errors import UnsupportedVariant
from levy_malliavin.malliavin import (
    DoleansTerminal,
    IteratedIntegral,
    RunningMax,
    SmoothKPoint,
    d1_iterated,
    d1_smooth,
    d2_add_mass,
    d2_iterated,
    derivative_field,
    doleans_chaos_d1,
    membership_guard,
    terminal_square,
    terminal_value,
)
from levy_malliavin.max_repr import running_max
from levy_malliavin.model import JumpMeasure, LevyModel, TwoPointLaw
from levy_malliavin.simulate import TimeGrid, simulate_batch

BM = LevyModel(0.0, 1.0, JumpMeasure(0.0), 1.0)
JUMP = LevyModel(0.2, 0.6, JumpMeasure(1.0, TwoPointLaw(0.5, 0.5, -0.5, 0.5)), 1.0)


@pytest.fixture(scope="module")
def paths():
    return simulate_batch(JUMP, TimeGrid.uniform(1.0, 32), 200, 61)


def test_linear_functional(paths):
    F = terminal_value(1.0)
    field = derivative_field(F, paths, JUMP, np.linspace(0, 1, 5), np.array([-0.5, 0.25, 1.0]))
    assert np.all(field.d1 == 0.6)
    np.testing.assert_allclose(field.d2, np.broadcast_to([-0.5, 0.25, 1.0], field.d2.shape), atol=1e-14)


def test_square_functional(paths):
    F = terminal_square(1.0)
    xT = paths.x_terminal
    np.testing.assert_allclose(d1_smooth(F, paths, 0.4, JUMP), 2 * 0.6 * xT, rtol=1e-14)
    np.testing.assert_allclose(d2_add_mass(F, paths, 0.4, 0.3, JUMP), 2 * 0.3 * xT + 0.09, rtol=1e-12, atol=1e-14)


def test_multi_point_functional_switches_off_after_last_time(paths):
    F = SmoothKPoint(lambda x: x[:, 0] * x[:, 1], lambda x: x[:, ::-1], (0.25, 0.5))
    x1, x2 = paths.value_at(0.25), paths.value_at(0.5)
    np.testing.assert_allclose(d1_smooth(F, paths, 0.1, JUMP), 0.6 * (x1 + x2), rtol=1e-13)
    np.testing.assert_allclose(d1_smooth(F, paths, 0.375, JUMP), 0.6 * x1, rtol=1e-13)
    assert np.all(d1_smooth(F, paths, 0.75, JUMP) == 0)


def test_first_order_chaos_derivatives(paths):
    h = lambda t: np.sin(t) + 2
    g = lambda t, z: z * t
    one = MultiIndex.of(1)
    assert np.all(d1_iterated(one, tensor_product(h, g, one), paths, 0.3, JUMP) == pytest.approx(h(0.3)))
    assert np.all(d2_iterated(one, tensor_product(h, g, one), paths, 0.3, 0.5, JUMP) == 0)
    two = MultiIndex.of(2)
    assert np.all(d2_iterated(two, tensor_product(h, g, two), paths, 0.5, 0.4, JUMP) == pytest.approx(0.2))
    assert np.all(d1_iterated(two, tensor_product(h, g, two), paths, 0.5, JUMP) == 0)


def test_double_brownian_derivative_is_endpoint():
    b = simulate_batch(BM, TimeGrid.uniform(1.0, 64), 300, 62)
    for t in (0.25, 0.5, 0.75):
        np.testing.assert_allclose(d1_iterated(MultiIndex.of(1, 1), None, b, t, BM), b.w_terminal, atol=1e-12)


def test_double_jump_derivative_is_compensated_count():
    b = simulate_batch(JUMP, TimeGrid.uniform(1.0, 16), 100, 63)
    t, z = 0.5, 0.7
    d2 = d2_iterated(MultiIndex.of(2, 2), None, b, t, z, JUMP)
    # both slot removals of J_(2,2)(1) leave Ntilde over [0, t] and over [t, T]: together the compensated count
    total = b.jump_counts() - JUMP.intensity * JUMP.T
    np.testing.assert_allclose(d2, total, atol=1e-12)


def test_running_max_add_mass_bounds(paths):
    z = np.array([-1.0, -0.2, 0.0, 0.3, 2.0])
    for t in (0.0, 0.3, 0.9):
        d2 = d2_add_mass(RunningMax(), paths, t, z, JUMP)
        assert np.all(d2[:, z >= 0] >= -1e-15) and np.all(d2[:, z >= 0] <= z[z >= 0] + 1e-15)
        assert np.all(d2[:, z < 0] <= 1e-15) and np.all(d2[:, z < 0] >= z[z < 0] - 1e-15)


def test_running_max_d1_is_indicator_before_argmax():
    b = simulate_batch(BM, TimeGrid.uniform(1.0, 64), 50, 64)
    t_grid = b.grid.times
    field = derivative_field(RunningMax(), b, BM, t_grid, np.zeros(1))
    _, tau = running_max(b)
    np.testing.assert_array_equal(field.d1, 1.0 * (t_grid[None, :] <= tau[:, None] + 1e-12))


def test_doleans_classical_derivative_matches_truncated_chaos():
    model = LevyModel(0.0, 1.0, JumpMeasure(0.0), 1.0)
    params = ExponentParams.special(0.5, 0.0)
    b = simulate_batch(model, TimeGrid.uniform(1.0, 256), 3000, 65)
    classical = doleans_exponential(b, params, model)[:, -1] * 0.5
    series = doleans_chaos_d1(params, b, 0.5, model, max_order=4)
    # residual is the order >= 4 part of Z_T h: its L2 norm is h * sqrt(tail(S=0.25, N=3))
    tail = np.exp(0.25) - (1 + 0.25 + 0.25**2 / 2 + 0.25**3 / 6)
    rms = np.sqrt(np.mean((classical - series) ** 2))
    assert rms < 2.0 * 0.5 * np.sqrt(tail)
    field = derivative_field(DoleansTerminal(params), b, model, np.array([0.5]), np.zeros(1))
    np.testing.assert_allclose(field.d1[:, 0], classical, rtol=1e-14)


def test_iterated_integral_functional_field(paths):
    F = IteratedIntegral(MultiIndex.of(1, 2))
    field = derivative_field(F, paths, JUMP, np.array([0.5]), np.array([0.5]))
    np.testing.assert_allclose(field.d1[:, 0], d1_iterated(F.idx, None, paths, 0.5, JUMP))


def test_unsupported_add_mass():
    b = simulate_batch(JUMP, TimeGrid.uniform(1.0, 4), 3, 66)
    with pytest.raises(UnsupportedVariant):
        d2_add_mass(IteratedIntegral(MultiIndex.of(1)), b, 0.5, 0.1, JUMP)


def test_membership_guard_stable_for_square():
    assert membership_guard(terminal_square(1.0), JUMP, n_paths=2000, steps=16, seed=67).stable


def test_adapted_derivative_after_horizon_vanishes(paths):
    F = SmoothKPoint(lambda x: x[:, 0] ** 3, lambda x: 3 * x**2, (0.5,))
    assert np.all(d2_add_mass(F, paths, 0.75, 0.4, JUMP) == 0)
