"""Exponential martingales driven by W and Ntilde.

``Z_t = exp{ int h dW - 1/2 int h^2 ds + int int g dN - int int (e^g - 1) nu(dz) ds }``
for deterministic ``h`` and ``g``.  Z is evaluated from this closed form on
each path's union grid; the time integrals use the same left-point sums as
the stochastic ones so that the discrete Z stays an exact martingale whenever
the exponents are constant in time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .integrate import (Integrand2, compensator_increments, deterministic1, deterministic2, ito_increments,
                        jump_increments, ntilde_increments)
from .model import LevyModel, gamma_map, gauss_legendre
from .stats import RunningMoments
from .simulate import PathBatch, SamplePath, SeedSpec, TimeGrid, as_batch, iter_batches, resimulate_batch


def _as_time_fn(f) -> Callable:
    if callable(f):
        return f
    c = float(f)
    return lambda t: np.full(np.shape(t), c)


@dataclass(frozen=True)
class ExponentParams:
    """Deterministic exponents ``h(t)`` and ``g(t, z)``.

    Built with :meth:`special` the jump exponent has the form
    ``g(t, z) = gbar(t) * gamma(z)`` and ``gbar`` is kept for reference.
    """

    h: Callable
    g: Callable
    gbar: Callable | None = None
    is_zero: bool = False

    @classmethod
    def zero(cls) -> "ExponentParams":
        zero = lambda t: np.zeros(np.shape(t))
        return cls(zero, lambda t, z: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(z))), zero, True)

    @classmethod
    def special(cls, h=0.0, gbar=0.0) -> "ExponentParams":
        h, gb = _as_time_fn(h), _as_time_fn(gbar)
        return cls(h, lambda t, z: gb(t) * gamma_map(z), gb)

    @classmethod
    def general(cls, h, g: Callable) -> "ExponentParams":
        return cls(_as_time_fn(h), g)

    def jump_factor(self, t, z):
        """e^{g(t, z)} - 1"""
        return np.expm1(self.g(t, z))

    def h_norm2(self, t: float) -> float:
        """int_0^t h^2 ds"""
        if t <= 0:
            return 0.0
        s, w = gauss_legendre(0.0, t)
        return float(np.sum(w * self.h(s) ** 2))

    def jump_norm2(self, model: LevyModel, t: float) -> float:
        """int_0^t int (e^g - 1)^2 nu(dz) ds"""
        if t <= 0 or not model.jumps.active:
            return 0.0
        s, ws = gauss_legendre(0.0, t)
        z, wz = model.jumps.quadrature()
        vals = self.jump_factor(s[:, None], z[None, :]) ** 2
        return float(ws @ vals @ wz)

    def validate(self, model: LevyModel, T: float | None = None) -> "ExponentParams":
        T = model.T if T is None else T
        a, b = self.h_norm2(T), self.jump_norm2(model, T)
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ValueError("exponents are not square-integrable on [0, T]")
        return self

    def total_energy(self, model: LevyModel, t: float | None = None) -> float:
        """S = ||h||^2 + ||e^g - 1||^2 over [0, t]."""
        t = model.T if t is None else t
        return self.h_norm2(t) + self.jump_norm2(model, t)


def _jump_integrand(params: ExponentParams) -> Integrand2:
    return deterministic2(params.jump_factor)


def log_doleans(paths, params: ExponentParams, model: LevyModel) -> np.ndarray:
    batch = as_batch(paths)
    h_cell = params.h(batch.cell_state.t)
    incr = h_cell * batch.dw - 0.5 * h_cell**2 * batch.dt
    if model.jumps.active:
        incr = incr + jump_increments(batch, deterministic2(params.g))
        incr = incr - compensator_increments(batch, _jump_integrand(params), model)
    out = np.zeros(batch.times.shape)
    np.cumsum(incr, axis=1, out=out[:, 1:])
    return out


def doleans_exponential(paths, params: ExponentParams, model: LevyModel) -> np.ndarray:
    """Z on the union grid, shape ``(n, L)`` (or ``(L,)`` for a single path)."""
    if params.is_zero:
        z = np.ones(as_batch(paths).times.shape)
    else:
        z = np.exp(log_doleans(paths, params, model))
    return z[0] if isinstance(paths, SamplePath) else z


def doleans_euler(paths, params: ExponentParams, model: LevyModel) -> np.ndarray:
    """Z from its SDE dZ = Z_- h dW + Z_- (e^g - 1) dNtilde by a product (Euler) scheme."""
    batch = as_batch(paths)
    incr = ito_increments(batch, deterministic1(params.h))
    if model.jumps.active:
        incr = incr + ntilde_increments(batch, _jump_integrand(params), model)
    out = np.ones(batch.times.shape)
    np.cumprod(1.0 + incr, axis=1, out=out[:, 1:])
    return out


def dense_exponential(paths, h, gbar, model: LevyModel):
    """``Y(h, g) = exp{int h dW + int int gbar(t) gamma(z) Ntilde(dt, dz)}`` at T and the constant theta_T.

    ``Y(h, g) * exp(-theta_T)`` is the terminal value of a martingale started at 1.
    """
    batch = as_batch(paths)
    h, gb = _as_time_fn(h), _as_time_fn(gbar)
    gfun = deterministic2(lambda t, z: gb(t) * gamma_map(z))
    log_y = ito_increments(batch, deterministic1(h)).sum(axis=1)
    if model.jumps.active:
        log_y = log_y + ntilde_increments(batch, gfun, model).sum(axis=1)
    T = batch.T
    s, ws = gauss_legendre(0.0, T)
    theta = 0.5 * float(np.sum(ws * h(s) ** 2))
    if model.jumps.active:
        z, wz = model.jumps.quadrature()
        gz = gb(s)[:, None] * gamma_map(z)[None, :]
        theta += float(ws @ (np.expm1(gz) - gz) @ wz)
    return np.exp(log_y), theta


def z_second_moment(params: ExponentParams, model: LevyModel, t: float) -> float:
    """E[Z_t^2] = exp{int_0^t h^2 ds + int_0^t int (e^g - 1)^2 nu(dz) ds}."""
    return float(np.exp(params.h_norm2(t) + params.jump_norm2(model, t)))


@dataclass(frozen=True)
class CheckpointRow:
    t: float
    mean_z: float
    se: float
    mean_z2: float
    se_z2: float
    closed_form: float
    passed: bool

    CSV_HEADER = "t,mean_Z,se,mean_Z2,se_Z2,closed_form,pass"

    def csv(self) -> str:
        return (f"{self.t:.10g},{self.mean_z:.10g},{self.se:.6g},{self.mean_z2:.10g},{self.se_z2:.6g},"
                f"{self.closed_form:.10g},{int(self.passed)}")


@dataclass(frozen=True)
class DoleansReport:
    rows: list[CheckpointRow]
    n_paths: int
    se_multiplier: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self) -> str:
        return "\n".join([CheckpointRow.CSV_HEADER] + [r.csv() for r in self.rows]) + "\n"


def _grid_with(grid: TimeGrid, points) -> TimeGrid:
    """``grid`` with ``points`` inserted where they are not already nodes."""
    t = grid.times
    extra = [p for p in np.atleast_1d(points) if np.min(np.abs(t - p)) > 1e-12 * max(1.0, abs(p))]
    return grid if not extra else TimeGrid(np.unique(np.concatenate([t, extra])))


def verify_z_martingale(model: LevyModel, params: ExponentParams, n_paths: int, checkpoints, seed: int = 0,
                        steps: int = 256, se_multiplier: float = 3.0, threads: int | None = None) -> DoleansReport:
    """Monte Carlo E[Z_t] against 1 and E[Z_t^2] against its closed form at each checkpoint."""
    params.validate(model)
    checkpoints = np.asarray(checkpoints, dtype=float)
    if np.any(checkpoints < 0) or np.any(checkpoints > model.T):
        raise ValueError("checkpoints must lie in [0, T]")
    grid = _grid_with(TimeGrid.uniform(model.T, steps), checkpoints)
    m1, m2 = RunningMoments(checkpoints.size), RunningMoments(checkpoints.size)
    for batch in iter_batches(model, grid, n_paths, seed, threads=threads):
        z = doleans_exponential(batch, params, model)
        zt = np.stack([np.take_along_axis(z, batch.index_at(t)[:, None], axis=1)[:, 0] for t in checkpoints], axis=1)
        m1.add(zt)
        m2.add(zt**2)
    rows = []
    for k, t in enumerate(checkpoints):
        cf = z_second_moment(params, model, t)
        se1, se2 = m1.se[k], m2.se[k]
        ok1 = abs(m1.mean[k] - 1.0) <= se_multiplier * se1 + 1e-12
        ok2 = abs(m2.mean[k] - cf) <= se_multiplier * se2 + 1e-12 * cf
        rows.append(CheckpointRow(float(t), m1.mean[k], se1, m2.mean[k], se2, cf, bool(ok1 and ok2)))
    return DoleansReport(rows, n_paths, se_multiplier)


def conditional_martingale_check(model: LevyModel, params: ExponentParams, paths: PathBatch, t: float,
                                 n_inner: int, seed: int = 0, first_index: int = 0):
    """Nested estimate of E[Z_T | F_t] per outer path against Z_t.

    Returns ``(z_t, estimate, standard_error)`` arrays over the outer paths.
    """
    z_t, est, se = [], [], []
    for i, path in enumerate(paths):
        inner = resimulate_batch(model, path, t, n_inner, SeedSpec(seed, first_index + i))
        zi = doleans_exponential(inner, params, model)
        zT = zi[:, -1]
        z_t.append(zi[0, inner.index_at(t)[0]])
        est.append(zT.mean())
        se.append(zT.std(ddof=1) / np.sqrt(n_inner))
    return np.array(z_t), np.array(est), np.array(se)
