import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levy_malliavin.errors import MassAtZero, ModelError, NegativeIntensity, SigmaNotPositive
from levy_malliavin.model import (
    GaussianLaw,
    JumpMeasure,
    LevyModel,
    TwoPointLaw,
    UniformLaw,
    characteristic_exponent,
    gamma_map,
    gauss_legendre,
    mark_grid,
    validate_model,
    variance_rate,
)


def test_pure_brownian_is_valid():
    m = validate_model({"mu": "0", "sigma": "1", "T": "1", "jump.intensity": "0"})
    assert variance_rate(m) == 1.0
    assert not m.jumps.active


def test_zero_sigma_rejected():
    with pytest.raises(SigmaNotPositive):
        validate_model({"mu": 0, "sigma": 0, "jump.intensity": 1, "jump.law": "gaussian",
                        "jump.mean": 0, "jump.std": 1})


def test_two_point_variance_rate():
    m = validate_model({"mu": 0.1, "sigma": 0.5, "jump.intensity": 2, "jump.law": "two_point",
                        "jump.z1": 1, "jump.p1": 0.5, "jump.z2": -1, "jump.p2": 0.5})
    assert variance_rate(m) == pytest.approx(2.25, abs=1e-15)


@pytest.mark.parametrize("raw, err", [
    ({"sigma": 1, "jump.intensity": -1}, NegativeIntensity),
    ({"sigma": 1, "jump.intensity": 1, "jump.z1": 0, "jump.p1": 0.5, "jump.z2": 1, "jump.p2": 0.5}, MassAtZero),
    ({"sigma": 1, "jump.intensity": 1, "jump.law": "cauchy"}, ModelError),
    ({"sigma": 1, "jump.intensity": 1, "jump.z1": 1, "jump.p1": 0.7, "jump.z2": -1, "jump.p2": 0.7}, ModelError),
])
def test_invalid_models(raw, err):
    with pytest.raises(err):
        validate_model(raw)


def test_gamma_map_values():
    assert gamma_map(0.0) == 0.0
    assert gamma_map(-math.log(2)) == pytest.approx(-0.5, abs=1e-15)
    assert gamma_map(math.log(2)) == pytest.approx(0.5, abs=1e-15)


@given(st.floats(-700, 700, allow_nan=False))
def test_gamma_map_bounded_and_odd(z):
    g = gamma_map(z)
    assert -1.0 <= g <= 1.0
    assert gamma_map(-z) == pytest.approx(-g, abs=1e-15)


def test_characteristic_exponent_cases():
    bm = LevyModel(0.0, 1.0, JumpMeasure(0.0), 1.0)
    assert characteristic_exponent(bm, 0.0) == 0
    y = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(characteristic_exponent(bm, y), -y**2 / 2, atol=1e-15)
    sym = LevyModel(0.0, 1.0, JumpMeasure(1.0, TwoPointLaw(1.0, 0.5, -1.0, 0.5)), 1.0)
    np.testing.assert_allclose(characteristic_exponent(sym, y), -y**2 / 2 + np.cos(y) - 1, atol=1e-14)


@pytest.mark.parametrize("law", [TwoPointLaw(0.5, 0.3, -1.0, 0.7), GaussianLaw(0.2, 0.7), UniformLaw(-0.5, 1.5)])
def test_law_moments_match_quadrature(law):
    nu = JumpMeasure(2.0, law)
    assert nu.integrate(lambda z: np.ones_like(z)) == pytest.approx(2.0, rel=1e-10)
    assert nu.integrate(lambda z: z) == pytest.approx(nu.first_moment(), abs=1e-10)
    assert nu.integrate(lambda z: z**2) == pytest.approx(nu.second_moment(), rel=1e-10)


@pytest.mark.parametrize("law", [TwoPointLaw(0.5, 0.3, -1.0, 0.7), GaussianLaw(0.2, 0.7), UniformLaw(-0.5, 1.5)])
def test_law_cf_matches_sampling(law):
    rng = np.random.default_rng(3)
    z = law.sample(rng, 200_000)
    for y in (0.3, 1.7):
        emp = np.exp(1j * y * z).mean()
        assert abs(law.cf(y) - emp) < 5 / np.sqrt(len(z))


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(0.0, 2.0, 8)
    assert np.sum(w * x**7) == pytest.approx(2.0**8 / 8, rel=1e-13)


def test_mark_grid_avoids_zero():
    m = LevyModel(0.0, 1.0, JumpMeasure(1.0, GaussianLaw(0.0, 1.0)), 1.0)
    marks = mark_grid(m)
    assert np.all(marks != 0.0)
    assert np.all(np.diff(marks) > 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.0, 5.0), st.floats(-2.0, 2.0))
def test_variance_rate_formula(sigma, lam, jump):
    if jump == 0.0:
        jump = 0.5
    m = LevyModel(0.0, sigma, JumpMeasure(lam, TwoPointLaw(jump, 0.5, -jump, 0.5)), 1.0)
    assert variance_rate(m) == pytest.approx(sigma**2 + lam * jump**2, rel=1e-12)
