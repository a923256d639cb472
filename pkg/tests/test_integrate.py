import numpy as np
import pytest

from levy_malliavin.integrate import (
    Integrand1,
    Integrand2,
    compensator,
    constant1,
    deterministic1,
    deterministic2,
    integral_ntilde,
    ito_integral_w,
    jump_sum,
)
from levy_malliavin.model import JumpMeasure, LevyModel, TwoPointLaw
from levy_malliavin.simulate import TimeGrid, simulate_batch

JUMP = LevyModel(0.0, 1.0, JumpMeasure(2.0, TwoPointLaw(1.0, 0.5, -1.0, 0.5)), 1.0)
SKEW = LevyModel(0.0, 1.0, JumpMeasure(1.5, TwoPointLaw(0.8, 0.25, -0.4, 0.75)), 1.0)


@pytest.fixture(scope="module")
def paths():
    return simulate_batch(JUMP, TimeGrid.uniform(1.0, 64), 100_000, 31)


def test_unit_integrand_gives_brownian_endpoint(paths):
    np.testing.assert_allclose(ito_integral_w(paths, constant1(1.0)), paths.w_terminal, atol=1e-12)


def test_ito_isometry(paths):
    vals = ito_integral_w(paths, deterministic1(lambda t: np.cos(3 * t)))
    ref = 0.5 + np.sin(6.0) / 12.0
    sq = vals**2
    assert abs(sq.mean() - ref) < 3 * sq.std(ddof=1) / np.sqrt(sq.size)


def test_brownian_self_integral_converges():
    errs = []
    for steps in (32, 128, 512):
        b = simulate_batch(JUMP, TimeGrid.uniform(1.0, steps), 4000, 32)
        vals = ito_integral_w(b, Integrand1(lambda s: s.w))
        errs.append(np.sqrt(np.mean((vals - (b.w_terminal**2 - 1.0) / 2) ** 2)))
    assert errs[0] > errs[1] > errs[2]
    slope = np.polyfit(np.log([1 / 32, 1 / 128, 1 / 512]), np.log(errs), 1)[0]
    assert 0.4 < slope < 0.6


def test_identity_mark_integral_is_compensated_jump_sum():
    b = simulate_batch(SKEW, TimeGrid.uniform(1.0, 16), 500, 33)
    psi = deterministic2(lambda t, z: z)
    total = b.jump.sum(axis=1) - 1.0 * SKEW.jumps.first_moment()
    np.testing.assert_allclose(integral_ntilde(b, psi, SKEW), total, atol=1e-12)


def test_bounded_integrand_has_zero_mean(paths):
    vals = integral_ntilde(paths, deterministic2(lambda t, z: np.sin(z + t)), JUMP)
    assert abs(vals.mean()) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_squared_marks_poisson_moment(paths):
    vals = jump_sum(paths, deterministic2(lambda t, z: z**2))
    assert abs(vals.mean() - 2.0) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_compensator_hand_values(paths):
    first = paths[:3]
    assert np.all(compensator(deterministic2(lambda t, z: 0 * z), JUMP, first) == 0)
    np.testing.assert_allclose(compensator(deterministic2(lambda t, z: z), JUMP, first), 0.0, atol=1e-14)
    np.testing.assert_allclose(compensator(deterministic2(lambda t, z: z**2), JUMP, first), 2.0, rtol=1e-12)


def test_compensator_on_interval(paths):
    val = compensator(deterministic2(lambda t, z: z**2), JUMP, paths[:2], interval=(0.25, 0.75))
    np.testing.assert_allclose(val, 1.0, rtol=1e-12)


def test_state_dependent_integrand_uses_left_limit():
    b = simulate_batch(JUMP, TimeGrid.uniform(1.0, 8), 200, 34)
    psi = Integrand2(lambda s, z: s.x * z)
    direct = np.zeros(len(b))
    for i, p in enumerate(b):
        for tau, z in p.jumps:
            k = np.searchsorted(p.times, tau)
            direct[i] += p.x_left[k] * z
    np.testing.assert_allclose(jump_sum(b, psi), direct, atol=1e-12)


def test_running_integral_ends_at_total(paths):
    sub = paths[:10]
    run = ito_integral_w(sub, constant1(2.0), running=True)
    np.testing.assert_allclose(run[:, -1], 2 * sub.w_terminal, atol=1e-12)
