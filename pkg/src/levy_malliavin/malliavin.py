"""Brownian and jump-direction Malliavin derivatives of concrete path functionals.

Supported functionals:

* :class:`SmoothKPoint`: ``g(X_{t_1}, ..., X_{t_k})`` with a known gradient.
* :class:`IteratedIntegral`: ``J_idx(f)`` for a product-form integrand.
* :class:`DoleansTerminal`: the terminal value ``Z_T`` of an exponential martingale.
* :class:`RunningMax`: ``M_T = sup_{s <= T} X_s``.

The Brownian derivative ``d1`` uses the chain rule (smooth functionals), the
logarithmic derivative (Z_T) or the argmax rule (running maximum).  The jump
derivative ``d2`` is the add-a-mass difference: the change in ``F`` when a
jump of size ``z`` is inserted right after time ``t``.  Iterated integrals use
slot removal over the split simplex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chaos import MultiIndex, SimplexFunction, _check_order, indices_up_to, iterated_integral, tensor_product
from .doleans import ExponentParams, doleans_exponential
from .errors import UnsupportedVariant
from .model import LevyModel, mark_grid
from .simulate import GRID_TOL, PathBatch, SamplePath, TimeGrid, as_batch, iter_batches
from .stats import RunningMoments


class FunctionalSpec:
    """A square-integrable functional of the path with enough structure to differentiate."""

    def evaluate(self, paths, model: LevyModel):
        raise NotImplementedError

    def __call__(self, paths, model: LevyModel):
        return self.evaluate(paths, model)


def _finish(values: np.ndarray, paths):
    return float(values[0]) if isinstance(paths, SamplePath) else values


@dataclass(frozen=True)
class SmoothKPoint(FunctionalSpec):
    """``g(X_{t_1}, ..., X_{t_k})``; ``g`` and ``grad`` act on arrays of shape ``(n, k)``."""

    g: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    times: tuple[float, ...]
    name: str = "smooth"

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("evaluation times must be non-empty and strictly increasing")
        object.__setattr__(self, "times", times)

    def points(self, batch: PathBatch) -> np.ndarray:
        return np.stack([batch.value_at(t) for t in self.times], axis=1)

    def evaluate(self, paths, model: LevyModel):
        batch = as_batch(paths)
        return _finish(np.asarray(self.g(self.points(batch)), dtype=float), paths)

    def gradient_error(self, points, eps: float = 1e-6) -> float:
        """Largest relative gap between ``grad`` and central differences of ``g``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        grad = np.asarray(self.grad(points), dtype=float)
        worst = 0.0
        for j in range(points.shape[1]):
            step = eps * np.maximum(1.0, np.abs(points[:, j]))
            up, dn = points.copy(), points.copy()
            up[:, j] += step
            dn[:, j] -= step
            fd = (self.g(up) - self.g(dn)) / (2 * step)
            worst = max(worst, float(np.max(np.abs(fd - grad[:, j]) / np.maximum(1.0, np.abs(grad[:, j])))))
        return worst


def terminal_value(T: float) -> SmoothKPoint:
    """F = X_T."""
    return SmoothKPoint(lambda x: x[:, 0], lambda x: np.ones_like(x), (T,), "xt")


def terminal_square(T: float) -> SmoothKPoint:
    """F = X_T^2."""
    return SmoothKPoint(lambda x: x[:, 0] ** 2, lambda x: 2.0 * x, (T,), "xt2")


@dataclass(frozen=True)
class IteratedIntegral(FunctionalSpec):
    idx: MultiIndex
    f: SimplexFunction | None = None

    def integrand(self) -> SimplexFunction:
        return SimplexFunction.ones(self.idx) if self.f is None else self.f

    def evaluate(self, paths, model: LevyModel):
        return iterated_integral(paths, self.idx, self.integrand(), model)


@dataclass(frozen=True)
class DoleansTerminal(FunctionalSpec):
    params: ExponentParams

    def evaluate(self, paths, model: LevyModel):
        z = doleans_exponential(as_batch(paths), self.params, model)[:, -1]
        return _finish(z, paths)


@dataclass(frozen=True)
class RunningMax(FunctionalSpec):
    def evaluate(self, paths, model: LevyModel):
        from .max_repr import running_max
        return running_max(paths)[0]


@dataclass(frozen=True)
class DerivativeField:
    """``d1[i, j] = D1_{t_j} F`` and ``d2[i, j, q] = D2_{t_j, z_q} F`` on path ``i``."""

    t_grid: np.ndarray
    z_grid: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def path(self, i: int) -> "DerivativeField":
        return DerivativeField(self.t_grid, self.z_grid, self.d1[i:i + 1], self.d2[i:i + 1])


# --------------------------------------------------------------------------
# smooth k-point functionals and the running maximum
# --------------------------------------------------------------------------


def d1_smooth(F: SmoothKPoint, paths, t: float, model: LevyModel):
    """sigma * sum_j dg/dx_j * 1(t <= t_j)."""
    batch = as_batch(paths)
    grad = np.asarray(F.grad(F.points(batch)), dtype=float)
    active = np.array([t <= tj + GRID_TOL for tj in F.times], dtype=float)
    return _finish(model.sigma * grad @ active, paths)


def _max_split(batch: PathBatch, t: float):
    """Running max over nodes at or before ``t`` and over nodes strictly after ``t``."""
    vals = np.maximum(batch.x, batch.x_left)
    after = batch.times > t + GRID_TOL
    pre = np.max(np.where(after, -np.inf, vals), axis=1)
    post = np.max(np.where(after, vals, -np.inf), axis=1)
    return pre, post


def d2_add_mass(F: FunctionalSpec, paths, t: float, z, model: LevyModel):
    """F(path with an extra jump z right after t) - F(path); ``z`` may be an array of marks."""
    batch = as_batch(paths)
    z = np.asarray(z, dtype=float)
    zz = z.reshape(1, -1) if z.ndim else z.reshape(1, 1)
    if isinstance(F, SmoothKPoint):
        pts = F.points(batch)
        shift = np.array([t <= tj + GRID_TOL for tj in F.times], dtype=float)
        base = np.asarray(F.g(pts), dtype=float)
        moved = pts[:, None, :] + zz[..., None] * shift
        n, q, k = moved.shape
        out = np.asarray(F.g(moved.reshape(n * q, k)), dtype=float).reshape(n, q) - base[:, None]
    elif isinstance(F, RunningMax):
        pre, post = _max_split(batch, t)
        m = np.maximum(pre, post)
        out = np.maximum(pre[:, None], post[:, None] + zz) - m[:, None]
    else:
        raise UnsupportedVariant(f"add-a-mass formula not available for {type(F).__name__}")
    out = out if z.ndim else out[:, 0]
    return out[0] if isinstance(paths, SamplePath) else out


# --------------------------------------------------------------------------
# iterated integrals by slot removal
# --------------------------------------------------------------------------


def _slot_removal(kind: int, idx: MultiIndex, f: SimplexFunction | None, paths, t: float, z, model: LevyModel):
    idx = idx if isinstance(idx, MultiIndex) else MultiIndex.of(idx)
    _check_order(idx.n)
    f = SimplexFunction.ones(idx) if f is None else f
    batch = as_batch(paths)
    total = np.zeros(len(batch))
    for k, i in enumerate(idx):
        if i != kind:
            continue
        value, rest = f.pinned(k, t, z)
        if value == 0.0:
            continue
        total += value if rest is None else value * iterated_integral(batch, rest.index, rest, model)
    return _finish(total, paths)


def d1_iterated(idx, f: SimplexFunction | None, paths, t: float, model: LevyModel):
    """D1_t J_idx(f): sum over Brownian slots k of J_{idx without k}(f pinned at t on the split simplex)."""
    return _slot_removal(1, idx, f, paths, t, None, model)


def d2_iterated(idx, f: SimplexFunction | None, paths, t: float, z: float, model: LevyModel):
    """D2_{t,z} J_idx(f): slot removal over the jump slots with the mark pinned to ``z``."""
    return _slot_removal(2, idx, f, paths, t, z, model)


def doleans_chaos_d1(params: ExponentParams, paths, t: float, model: LevyModel, max_order: int = 4):
    """D1_t of the chaos series of Z_T truncated at ``max_order`` (a cross-check for Z_T h(t))."""
    total = 0.0
    for idx in indices_up_to(max_order):
        total = total + d1_iterated(idx, tensor_product(params.h, params.jump_factor, idx), paths, t, model)
    return total


def doleans_chaos_d2(params: ExponentParams, paths, t: float, z: float, model: LevyModel, max_order: int = 4):
    total = 0.0
    for idx in indices_up_to(max_order):
        total = total + d2_iterated(idx, tensor_product(params.h, params.jump_factor, idx), paths, t, z, model)
    return total


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def derivative_field(F: FunctionalSpec, paths, model: LevyModel, t_grid=None, z_grid=None) -> DerivativeField:
    """Both derivatives of ``F`` on ``t_grid`` x ``z_grid`` for every path."""
    batch = as_batch(paths)
    t_grid = batch.grid.times if t_grid is None else np.asarray(t_grid, dtype=float)
    z_grid = mark_grid(model) if z_grid is None else np.asarray(z_grid, dtype=float)
    n, m, q = len(batch), t_grid.size, z_grid.size
    d1 = np.zeros((n, m))
    d2 = np.zeros((n, m, q))
    if isinstance(F, SmoothKPoint):
        for j, t in enumerate(t_grid):
            d1[:, j] = d1_smooth(F, batch, t, model)
            if model.jumps.active:
                d2[:, j] = d2_add_mass(F, batch, t, z_grid, model)
    elif isinstance(F, RunningMax):
        from .max_repr import running_max
        _, tau = running_max(batch)
        d1[:] = model.sigma * (t_grid[None, :] <= tau[:, None] + GRID_TOL)
        for j, t in enumerate(t_grid):
            d2[:, j] = d2_add_mass(F, batch, t, z_grid, model)
    elif isinstance(F, DoleansTerminal):
        zT = doleans_exponential(batch, F.params, model)[:, -1]
        d1[:] = zT[:, None] * F.params.h(t_grid)[None, :]
        d2[:] = zT[:, None, None] * F.params.jump_factor(t_grid[:, None], z_grid[None, :])[None]
    elif isinstance(F, IteratedIntegral):
        f = F.integrand()
        for j, t in enumerate(t_grid):
            d1[:, j] = d1_iterated(F.idx, f, batch, t, model)
            for k, z in enumerate(z_grid):
                d2[:, j, k] = d2_iterated(F.idx, f, batch, t, z, model)
    else:
        raise UnsupportedVariant(f"no derivative rule for {type(F).__name__}")
    return DerivativeField(t_grid, z_grid, d1, d2)


@dataclass(frozen=True)
class MembershipGuard:
    """E||DF||^2 on ``n`` paths and on ``2n`` paths; ``stable`` when they agree."""

    norm_n: float
    se_n: float
    norm_2n: float
    se_2n: float
    rtol: float

    @property
    def stable(self) -> bool:
        gap = abs(self.norm_2n - self.norm_n)
        return bool(np.isfinite(self.norm_2n) and (gap <= 3.0 * np.hypot(self.se_n, self.se_2n)
                                                  or gap <= self.rtol * abs(self.norm_2n)))


def membership_guard(F: FunctionalSpec, model: LevyModel, n_paths: int = 2000, steps: int = 64, seed: int = 0,
                     rtol: float = 0.1) -> MembershipGuard:
    """Heuristic D^{1,2} check: the Monte Carlo second moment of ||DF|| should not drift as paths double.

    ``||DF||^2 = int (D1_t F)^2 dt + int int (D2_{t,z} F)^2 nu(dz) dt`` with a
    trapezoid rule in time and the jump-law quadrature in ``z``.
    """
    grid = TimeGrid.uniform(model.T, steps)
    z_nodes, z_w = model.jumps.quadrature() if model.jumps.active else (np.zeros(1), np.zeros(1))
    tw = np.full(grid.times.size, grid.dt)
    tw[[0, -1]] *= 0.5
    first, both = RunningMoments(), RunningMoments()
    for batch in iter_batches(model, grid, 2 * n_paths, seed, chunk=n_paths):
        field = derivative_field(F, batch, model, grid.times, z_nodes)
        norm = field.d1**2 @ tw + np.einsum("ijq,j,q->i", field.d2**2, tw, z_w)
        if first.n < n_paths:
            first.add(norm)
        both.add(norm)
    return MembershipGuard(float(first.mean), float(first.se), float(both.mean), float(both.se), rtol)
