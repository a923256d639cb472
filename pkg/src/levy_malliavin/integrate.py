"""Stochastic integrals against W(dt) and the compensated measure Ntilde(dt, dz).

Integrands are predictable: they are evaluated on :class:`PathState` objects
that carry left values only.  Brownian integrals are left-point Itô sums over
each path's union grid; jump integrals add the integrand at every jump
``(tau, J)`` with the state at ``tau-`` and subtract a compensator computed as
a left-point time sum of ``int psi nu(dz)``.

Integrand callables may be evaluated concurrently and must not mutate shared
state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import LevyModel
from .simulate import PathBatch, PathState, SamplePath, as_batch

_EVAL_BUDGET = 1 << 22


@dataclass(frozen=True)
class Integrand1:
    """phi(state) for the Brownian direction."""

    fn: Callable[[PathState], np.ndarray]
    deterministic: bool = False

    def __call__(self, state: PathState) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.fn(state), dtype=float), state.t.shape)


@dataclass(frozen=True)
class Integrand2:
    """psi(state, z) for the jump direction.

    ``nu_integral`` optionally gives ``int psi(state, z) nu(dz)`` in closed
    form; otherwise the jump law quadrature is used.
    """

    fn: Callable[[PathState, np.ndarray], np.ndarray]
    deterministic: bool = False
    nu_integral: Callable[[PathState], np.ndarray] | None = None

    def __call__(self, state: PathState, z) -> np.ndarray:
        return np.asarray(self.fn(state, z), dtype=float)


def deterministic1(h: Callable) -> Integrand1:
    return Integrand1(lambda s: h(s.t), deterministic=True)


def deterministic2(g: Callable) -> Integrand2:
    return Integrand2(lambda s, z: g(s.t, z), deterministic=True)


def constant1(c: float) -> Integrand1:
    return Integrand1(lambda s: np.full(s.t.shape, float(c)), deterministic=True)


def _as1(phi) -> Integrand1:
    if isinstance(phi, Integrand1):
        return phi
    if np.isscalar(phi):
        return constant1(phi)
    return Integrand1(phi)


def _as2(psi) -> Integrand2:
    if isinstance(psi, Integrand2):
        return psi
    return Integrand2(psi)


def _finish(values: np.ndarray, running: bool, single: bool):
    if running:
        out = np.zeros((values.shape[0], values.shape[1] + 1))
        np.cumsum(values, axis=1, out=out[:, 1:])
        return out[0] if single else out
    total = values.sum(axis=1)
    return float(total[0]) if single else total


def ito_increments(batch: PathBatch, phi) -> np.ndarray:
    """Per-cell terms phi(t_c) * (W_{t_{c+1}} - W_{t_c})."""
    if isinstance(phi, np.ndarray):
        return phi * batch.dw
    return _as1(phi)(batch.cell_state) * batch.dw


def ito_integral_w(paths, phi, running: bool = False):
    """Left-point Itô sum of ``phi`` against W; ``running=True`` returns the process on the union grid."""
    batch = as_batch(paths)
    return _finish(ito_increments(batch, phi), running, isinstance(paths, SamplePath))


def nu_integral(psi, state: PathState, model: LevyModel) -> np.ndarray:
    """``int psi(state, z) nu(dz)`` at every entry of ``state``."""
    psi = _as2(psi)
    shape = state.t.shape
    if not model.jumps.active:
        return np.zeros(shape)
    if psi.nu_integral is not None:
        return np.broadcast_to(np.asarray(psi.nu_integral(state), dtype=float), shape)
    z, w = model.jumps.quadrature()
    flat = PathState(*(np.broadcast_to(a, shape).reshape(-1) for a in (state.t, state.x, state.w, state.running_max)))
    out = np.empty(flat.t.size)
    step = max(1, _EVAL_BUDGET // z.size)
    for a in range(0, flat.t.size, step):
        part = flat.take(slice(a, a + step)).expand()
        out[a:a + step] = np.broadcast_to(psi(part, z[None, :]), (part.t.shape[0], z.size)) @ w
    return out.reshape(shape)


def _interval_mask(batch: PathBatch, interval) -> np.ndarray | None:
    if interval is None:
        return None
    lo, hi = interval
    t = batch.times
    return (t[:, :-1] >= lo - 1e-12) & (t[:, 1:] <= hi + 1e-12)


def compensator_increments(batch: PathBatch, psi, model: LevyModel, interval=None) -> np.ndarray:
    vals = nu_integral(psi, batch.cell_state, model) * batch.dt
    mask = _interval_mask(batch, interval)
    return vals if mask is None else np.where(mask, vals, 0.0)


def compensator(psi, model: LevyModel, paths, interval=None, running: bool = False):
    """Left-point time sum of ``int psi nu(dz) dt`` over ``interval`` (default [0, T])."""
    batch = as_batch(paths)
    return _finish(compensator_increments(batch, psi, model, interval), running, isinstance(paths, SamplePath))


def jump_increments(batch: PathBatch, psi) -> np.ndarray:
    """Per-cell terms psi(tau, J) for the jump closing the cell, 0 where there is none."""
    if not batch.is_jump.any():
        return np.zeros(batch.dt.shape)
    mask = batch.cell_is_jump
    out = np.zeros(mask.shape)
    state = batch.jump_state
    rows, cols = np.nonzero(mask)
    sub = PathState(state.t[rows, cols], state.x[rows, cols], state.w[rows, cols], state.running_max[rows, cols])
    out[rows, cols] = np.broadcast_to(_as2(psi)(sub, batch.cell_jump[rows, cols]), rows.shape)
    return out


def jump_sum(paths, psi, running: bool = False):
    """Uncompensated sum of psi over the jumps of each path."""
    batch = as_batch(paths)
    return _finish(jump_increments(batch, psi), running, isinstance(paths, SamplePath))


def ntilde_increments(batch: PathBatch, psi, model: LevyModel) -> np.ndarray:
    return jump_increments(batch, psi) - compensator_increments(batch, psi, model)


def integral_ntilde(paths, psi, model: LevyModel, running: bool = False):
    """``int int psi dNtilde``: jump sum minus compensator."""
    batch = as_batch(paths)
    return _finish(ntilde_increments(batch, psi, model), running, isinstance(paths, SamplePath))
