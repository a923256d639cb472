"""Square-integrable Lévy models with a finite-activity jump part.

A model is the triplet ``(mu, sigma, nu)`` together with a horizon ``T``::

    X_t = mu * t + sigma * W_t + int_0^t int z Ntilde(ds, dz)

where ``nu = intensity * law`` is a finite Lévy measure.  Integrals against
``nu`` use closed forms where they exist and otherwise a fixed 64-node
Gauss-Legendre rule on the effective support of the jump law.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
from scipy import stats

from .errors import MassAtZero, ModelError, NegativeIntensity, SigmaNotPositive

QUAD_NODES = 64
TAIL_MASS = 1e-12

_GL_X, _GL_W = np.polynomial.legendre.leggauss(QUAD_NODES)


def gauss_legendre(a: float, b: float, n: int = QUAD_NODES):
    """Nodes and weights of the ``n``-point Gauss-Legendre rule on ``[a, b]``."""
    if n == QUAD_NODES:
        x, w = _GL_X, _GL_W
    else:
        x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gamma_map(z):
    """The bounded bijection R -> (-1, 1): ``e^z - 1`` for z < 0, ``1 - e^-z`` otherwise."""
    z = np.asarray(z, dtype=float)
    out = np.where(z < 0, np.expm1(np.minimum(z, 0.0)), -np.expm1(-np.maximum(z, 0.0)))
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# jump laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoPointLaw:
    z1: float
    p1: float
    z2: float
    p2: float

    name = "two_point"

    def __post_init__(self):
        if self.p1 < 0 or self.p2 < 0 or not np.isclose(self.p1 + self.p2, 1.0):
            raise ModelError(f"two-point probabilities must be >= 0 and sum to 1, got {self.p1}, {self.p2}")
        for z, p in ((self.z1, self.p1), (self.z2, self.p2)):
            if z == 0.0 and p > 0.0:
                raise MassAtZero("two-point jump law places mass at 0")

    @property
    def atoms(self):
        return np.array([self.z1, self.z2]), np.array([self.p1, self.p2])

    def mean(self) -> float:
        return self.p1 * self.z1 + self.p2 * self.z2

    def second_moment(self) -> float:
        return self.p1 * self.z1**2 + self.p2 * self.z2**2

    def partial_first_moment(self, threshold: float = 1.0) -> float:
        """E[J; |J| >= threshold]."""
        z, p = self.atoms
        return float(np.sum(np.where(np.abs(z) >= threshold, p * z, 0.0)))

    def sample(self, rng: np.random.Generator, size):
        u = rng.random(size)
        return np.where(u < self.p1, self.z1, self.z2)

    def quadrature(self):
        return self.atoms

    def cf(self, y):
        y = np.asarray(y, dtype=float)
        return self.p1 * np.exp(1j * y * self.z1) + self.p2 * np.exp(1j * y * self.z2)

    def quantile(self, q):
        (lo, p_lo), (hi, _) = sorted([(self.z1, self.p1), (self.z2, self.p2)])
        return np.where(np.asarray(q, dtype=float) <= p_lo, lo, hi)

    def support(self):
        return min(self.z1, self.z2), max(self.z1, self.z2)


@dataclass(frozen=True)
class GaussianLaw:
    mean_: float
    std: float

    name = "gaussian"

    def __post_init__(self):
        if not self.std > 0:
            if self.mean_ == 0.0:
                raise MassAtZero("degenerate Gaussian jump law sits at 0")
            raise ModelError(f"Gaussian jump law needs std > 0, got {self.std}")

    def mean(self) -> float:
        return self.mean_

    def second_moment(self) -> float:
        return self.mean_**2 + self.std**2

    def partial_first_moment(self, threshold: float = 1.0) -> float:
        m, s = self.mean_, self.std
        up = (threshold - m) / s
        lo = (-threshold - m) / s
        upper = m * stats.norm.sf(up) + s * stats.norm.pdf(up)
        lower = m * stats.norm.cdf(lo) - s * stats.norm.pdf(lo)
        return float(upper + lower)

    def sample(self, rng: np.random.Generator, size):
        return self.mean_ + self.std * rng.standard_normal(size)

    @cached_property
    def _rule(self):
        a, b = self.support()
        x, w = gauss_legendre(a, b)
        return x, w * stats.norm.pdf(x, self.mean_, self.std)

    def quadrature(self):
        return self._rule

    def cf(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(1j * y * self.mean_ - 0.5 * (self.std * y) ** 2)

    def quantile(self, q):
        return stats.norm.ppf(q, self.mean_, self.std)

    def support(self):
        k = stats.norm.isf(0.5 * TAIL_MASS)
        return self.mean_ - k * self.std, self.mean_ + k * self.std


@dataclass(frozen=True)
class UniformLaw:
    low: float
    high: float

    name = "uniform"

    def __post_init__(self):
        if not self.high > self.low:
            if self.low == self.high == 0.0:
                raise MassAtZero("degenerate uniform jump law sits at 0")
            raise ModelError(f"uniform jump law needs low < high, got [{self.low}, {self.high}]")

    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    def second_moment(self) -> float:
        a, b = self.low, self.high
        return (a * a + a * b + b * b) / 3.0

    def partial_first_moment(self, threshold: float = 1.0) -> float:
        a, b = self.low, self.high

        def piece(lo, hi):
            lo, hi = max(lo, a), min(hi, b)
            return 0.0 if hi <= lo else 0.5 * (hi * hi - lo * lo)

        return (piece(threshold, np.inf) + piece(-np.inf, -threshold)) / (b - a)

    def sample(self, rng: np.random.Generator, size):
        return rng.uniform(self.low, self.high, size)

    @cached_property
    def _rule(self):
        x, w = gauss_legendre(self.low, self.high)
        return x, w / (self.high - self.low)

    def quadrature(self):
        return self._rule

    def cf(self, y):
        y = np.asarray(y, dtype=float)
        a, b = self.low, self.high
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (np.exp(1j * y * b) - np.exp(1j * y * a)) / (1j * y * (b - a))
        return np.where(y == 0, 1.0 + 0j, val)

    def quantile(self, q):
        return self.low + np.asarray(q, dtype=float) * (self.high - self.low)

    def support(self):
        return self.low, self.high


JumpLaw = TwoPointLaw | GaussianLaw | UniformLaw


@dataclass(frozen=True)
class JumpMeasure:
    """Finite Lévy measure ``nu = intensity * law``."""

    intensity: float = 0.0
    law: JumpLaw = field(default_factory=lambda: TwoPointLaw(1.0, 0.5, -1.0, 0.5))

    def __post_init__(self):
        if self.intensity < 0:
            raise NegativeIntensity(f"jump intensity must be >= 0, got {self.intensity}")

    @property
    def active(self) -> bool:
        return self.intensity > 0

    def first_moment(self) -> float:
        """int z nu(dz)"""
        return self.intensity * self.law.mean()

    def second_moment(self) -> float:
        """int z^2 nu(dz)"""
        return self.intensity * self.law.second_moment()

    def quadrature(self):
        """Nodes and weights such that ``sum w f(z) ~= int f dnu`` (weights sum to the intensity)."""
        z, p = self.law.quadrature()
        return z, self.intensity * p

    def integrate(self, f: Callable) -> float:
        if not self.active:
            return 0.0
        z, w = self.quadrature()
        return float(np.sum(w * f(z)))


@dataclass(frozen=True)
class LevyModel:
    mu: float = 0.0
    sigma: float = 1.0
    jumps: JumpMeasure = field(default_factory=JumpMeasure)
    T: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise SigmaNotPositive(f"sigma must be strictly positive, got {self.sigma}")
        if not self.T > 0:
            raise ModelError(f"horizon T must be positive, got {self.T}")

    @property
    def intensity(self) -> float:
        return self.jumps.intensity

    @property
    def variance_rate(self) -> float:
        return variance_rate(self)

    @property
    def alpha(self) -> float:
        """Drift of the decomposition with uncompensated large jumps: mu - int_{|z|>=1} z nu(dz)."""
        return self.mu - self.jumps.intensity * self.jumps.law.partial_first_moment(1.0)

    def with_horizon(self, T: float) -> "LevyModel":
        return LevyModel(self.mu, self.sigma, self.jumps, T)


def variance_rate(model: LevyModel) -> float:
    return model.sigma**2 + model.jumps.second_moment()


def characteristic_exponent(model: LevyModel, y):
    """psi(y) with E[exp(i y X_t)] = exp(t psi(y))."""
    y = np.asarray(y, dtype=float)
    out = 1j * model.mu * y - 0.5 * model.sigma**2 * y**2
    if model.jumps.active:
        law = model.jumps.law
        out = out + model.jumps.intensity * (law.cf(y) - 1.0 - 1j * y * law.mean())
    return out


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_LAW_KEYS = {
    "two_point": ("jump.z1", "jump.p1", "jump.z2", "jump.p2"),
    "gaussian": ("jump.mean", "jump.std"),
    "uniform": ("jump.low", "jump.high"),
}


def _number(raw: Mapping, key: str, default=None) -> float:
    if key not in raw:
        if default is None:
            raise ModelError(f"missing model key '{key}'")
        return default
    try:
        return float(raw[key])
    except (TypeError, ValueError):
        raise ModelError(f"model key '{key}' is not a number: {raw[key]!r}") from None


def validate_model(raw: Mapping) -> LevyModel:
    """Build a :class:`LevyModel` from a flat key-value mapping.

    Keys follow the ``[model]`` config section: ``mu``, ``sigma``, ``T``,
    ``jump.intensity``, ``jump.law`` and the law parameters
    (``jump.z1/p1/z2/p2``, ``jump.mean/std`` or ``jump.low/high``).
    """
    mu = _number(raw, "mu", 0.0)
    sigma = _number(raw, "sigma")
    T = _number(raw, "T", 1.0)
    intensity = _number(raw, "jump.intensity", 0.0)
    if intensity < 0:
        raise NegativeIntensity(f"jump.intensity must be >= 0, got {intensity}")
    law_name = str(raw.get("jump.law", "two_point")).strip().lower()
    if law_name not in _LAW_KEYS:
        raise ModelError(f"unknown jump.law {law_name!r}; expected one of {sorted(_LAW_KEYS)}")
    if intensity == 0 and not any(k in raw for k in _LAW_KEYS[law_name]):
        jumps = JumpMeasure(0.0)
    else:
        params = [_number(raw, k) for k in _LAW_KEYS[law_name]]
        law = {"two_point": TwoPointLaw, "gaussian": GaussianLaw, "uniform": UniformLaw}[law_name](*params)
        jumps = JumpMeasure(intensity, law)
    return LevyModel(mu=mu, sigma=sigma, jumps=jumps, T=T)


def mark_grid(model: LevyModel, n: int = 33, offset: float = 1e-3) -> np.ndarray:
    """Mark grid for D^(2): quantiles of the jump law plus small offsets around 0."""
    if not model.jumps.active:
        base = np.linspace(-1.0, 1.0, n - 2)
    else:
        law = model.jumps.law
        q = law.quantile((np.arange(n - 2) + 0.5) / (n - 2))
        base = np.unique(q)
        if base.size < n - 2:
            lo, hi = law.support()
            base = np.unique(np.concatenate([base, np.linspace(lo, hi, n - 2 - base.size + 2)[1:-1]]))
    pts = np.unique(np.concatenate([base, [-offset, offset]]))
    return pts[pts != 0.0]
