"""Clark-Ocone integrands and reconstruction of functionals from them.

For ``F`` in the supported classes the representation reads::

    F = E[F] + int_0^T phi(t) dW_t + int_0^T int psi(t, z) Ntilde(dt, dz)

with ``phi(t) = E[D1_t F | F_t]`` and ``psi(t, z) = E[D2_{t,z} F | F_t]``.
Integrands come either in closed form (as predictable functions of the path
state) or from nested Monte Carlo over continuations of each path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InnerBudgetZero, UnsupportedVariant
from .integrate import Integrand1, Integrand2, integral_ntilde, ito_integral_w
from .malliavin import FunctionalSpec, RunningMax, SmoothKPoint, derivative_field
from .max_repr import TailTable, l2_residual, max_integrands
from .model import LevyModel, mark_grid, variance_rate
from .simulate import GRID_TOL, PathBatch, SamplePath, SeedSpec, TimeGrid, as_batch, iter_batches, resimulate_batch
from .stats import RunningMoments


@dataclass(frozen=True)
class Representation:
    """Closed-form representation: E[F] and predictable integrands."""

    mean: float
    phi: Integrand1
    psi: Integrand2
    method: str = "closed_form"


@dataclass(frozen=True)
class ClarkOconeIntegrands:
    """Integrand values per path on ``t_grid`` (and ``t_grid`` x ``z_grid`` for psi)."""

    t_grid: np.ndarray
    z_grid: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    method: str
    n_inner: int
    phi_se: np.ndarray | None = None
    psi_se: np.ndarray | None = None


def closed_form_representation(F: FunctionalSpec, model: LevyModel, table: TailTable | None = None) -> Representation:
    """Representation for F = X_T, F = X_T^2 and (with a tail table) F = M_T."""
    T, mu, sigma = model.T, model.mu, model.sigma
    name = getattr(F, "name", None)
    if isinstance(F, SmoothKPoint) and name == "xt":
        lam_mean = model.jumps.first_moment()
        return Representation(
            mu * T,
            Integrand1(lambda s: np.full(s.t.shape, sigma), deterministic=True),
            Integrand2(lambda s, z: np.broadcast_to(z, np.broadcast_shapes(np.shape(s.t), np.shape(z))),
                       deterministic=True, nu_integral=lambda s: np.full(s.t.shape, lam_mean)))
    if isinstance(F, SmoothKPoint) and name == "xt2":
        m1, m2 = model.jumps.first_moment(), model.jumps.second_moment()
        forward = lambda s: s.x + mu * (T - s.t)
        return Representation(
            (mu * T) ** 2 + T * variance_rate(model),
            Integrand1(lambda s: 2.0 * sigma * forward(s)),
            Integrand2(lambda s, z: 2.0 * z * forward(s) + z * z,
                       nu_integral=lambda s: 2.0 * m1 * forward(s) + m2))
    if isinstance(F, RunningMax):
        if table is None:
            raise ValueError("the running maximum needs a tail table")
        phi, psi = max_integrands(model, table)
        return Representation(float(table.expected_max(T)), phi, psi, "tail_table")
    raise UnsupportedVariant(f"no closed-form integrands for {type(F).__name__}")


def conditional_derivative(F: FunctionalSpec, model: LevyModel, path: SamplePath, t: float, z=None,
                           n_inner: int = 2000, seed: SeedSpec | None = None, z_grid=None):
    """Nested Monte Carlo E[D1_t F | F_t] (``z is None``) or E[D2_{t,z} F | F_t].

    Averages the derivative over ``n_inner`` continuations of ``path`` from
    ``t``.  Returns ``(estimate, standard_error)``; ``z`` may be an array.
    """
    if n_inner < 1:
        raise InnerBudgetZero("nested Monte Carlo needs at least one inner path")
    seed = SeedSpec(0, 0) if seed is None else seed
    inner = resimulate_batch(model, path, t, n_inner, seed)
    marks = np.atleast_1d(np.asarray(z if z is not None else (z_grid if z_grid is not None else [0.0]), dtype=float))
    field = derivative_field(F, inner, model, np.array([t]), marks)
    vals = field.d1[:, 0] if z is None else field.d2[:, 0, :]
    est = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(n_inner) if n_inner > 1 else np.full(np.shape(est), np.inf)
    if z is None or np.ndim(z) == 0:
        return float(np.ravel(est)[0]), float(np.ravel(se)[0])
    return est, se


def nested_integrands(F: FunctionalSpec, model: LevyModel, paths, n_inner: int, seed: int, t_grid=None,
                      z_grid=None, first_index: int = 0) -> ClarkOconeIntegrands:
    """phi and psi by nested Monte Carlo at every ``t_grid`` point of every path.

    Inner streams are keyed by (seed, outer path index, t-index), so the
    result does not depend on how outer paths are scheduled.
    """
    if n_inner < 1:
        raise InnerBudgetZero("nested Monte Carlo needs at least one inner path")
    batch = as_batch(paths)
    t_grid = batch.grid.times if t_grid is None else np.asarray(t_grid, dtype=float)
    z_grid = mark_grid(model) if z_grid is None else np.asarray(z_grid, dtype=float)
    n, m, q = len(batch), t_grid.size, z_grid.size
    phi, phi_se = np.zeros((n, m)), np.zeros((n, m))
    psi, psi_se = np.zeros((n, m, q)), np.zeros((n, m, q))
    for i, path in enumerate(batch):
        spec = SeedSpec(seed, first_index + i)
        for j, t in enumerate(t_grid):
            inner = resimulate_batch(model, path, t, n_inner, spec)
            field = derivative_field(F, inner, model, np.array([t]), z_grid)
            phi[i, j], phi_se[i, j] = _mean_se(field.d1[:, 0])
            if model.jumps.active:
                psi[i, j], psi_se[i, j] = _mean_se(field.d2[:, 0, :])
    return ClarkOconeIntegrands(t_grid, z_grid, phi, psi, "nested_mc", n_inner, phi_se, psi_se)


def _mean_se(vals: np.ndarray):
    k = vals.shape[0]
    se = vals.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros(vals.shape[1:])
    return vals.mean(axis=0), se


def _interp_weights(z_grid: np.ndarray, points: np.ndarray):
    """Left index and weight of linear interpolation on ``z_grid`` (clamped at the ends)."""
    if z_grid.size == 1:
        return np.zeros(points.shape, dtype=np.int64), np.zeros(points.shape)
    p = np.clip(points, z_grid[0], z_grid[-1])
    k = np.clip(np.searchsorted(z_grid, p, side="right") - 1, 0, z_grid.size - 2)
    w = (p - z_grid[k]) / (z_grid[k + 1] - z_grid[k])
    return k, w


def _grid_integrands(batch: PathBatch, ci: ClarkOconeIntegrands, model: LevyModel):
    """Per-cell phi, per-cell psi at the jump closing the cell, and per-cell compensator rate.

    Values at a union-grid time are read from the last ``t_grid`` point at or
    before it, which keeps them adapted.
    """
    rows = np.arange(len(batch))[:, None]
    cell_t = batch.cell_state.t
    gi = np.clip(np.searchsorted(ci.t_grid, cell_t + GRID_TOL, side="right") - 1, 0, ci.t_grid.size - 1)
    phi = ci.phi[rows, gi]
    jumps = np.zeros(cell_t.shape)
    rate = np.zeros(cell_t.shape)
    if model.jumps.active:
        zq, wq = model.jumps.quadrature()
        k, w = _interp_weights(ci.z_grid, zq)
        nu_psi = (ci.psi[:, :, k] * (1 - w) + ci.psi[:, :, np.minimum(k + 1, ci.z_grid.size - 1)] * w) @ wq
        rate = nu_psi[rows, gi]
        r, c = np.nonzero(batch.cell_is_jump)
        if r.size:
            tau = batch.times[r, c + 1]
            gj = np.clip(np.searchsorted(ci.t_grid, tau - GRID_TOL, side="right") - 1, 0, ci.t_grid.size - 1)
            kj, wj = _interp_weights(ci.z_grid, batch.cell_jump[r, c])
            kj1 = np.minimum(kj + 1, ci.z_grid.size - 1)
            jumps[r, c] = ci.psi[r, gj, kj] * (1 - wj) + ci.psi[r, gj, kj1] * wj
    return phi, jumps, rate


def reconstruct(paths, integrands, model: LevyModel, mean: float | None = None):
    """E[F] + int phi dW + int int psi dNtilde for each path.

    ``integrands`` is a :class:`Representation` (its ``mean`` is used unless
    ``mean`` is given) or a :class:`ClarkOconeIntegrands` together with
    ``mean``.
    """
    batch = as_batch(paths)
    if isinstance(integrands, Representation):
        base = integrands.mean if mean is None else mean
        out = base + ito_integral_w(batch, integrands.phi)
        if model.jumps.active:
            out = out + integral_ntilde(batch, integrands.psi, model)
    else:
        if mean is None:
            raise ValueError("grid integrands need E[F] supplied as mean")
        phi, jumps, rate = _grid_integrands(batch, integrands, model)
        out = mean + (phi * batch.dw).sum(axis=1) + (jumps - rate * batch.dt).sum(axis=1)
    return float(out[0]) if isinstance(paths, SamplePath) else out


@dataclass(frozen=True)
class ResidualRow:
    delta: float
    residual_l2: float
    se: float
    relative: float
    passed: bool


@dataclass(frozen=True)
class ResidualStudy:
    functional: str
    rows: list[ResidualRow]
    slope: float
    n_paths: int
    rel_tol: float

    CSV_HEADER = "delta,residual_l2,se,relative,slope,pass"

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def decreasing(self) -> bool:
        ordered = sorted(self.rows, key=lambda r: -r.delta)
        return all(b.residual_l2 < a.residual_l2 for a, b in zip(ordered, ordered[1:]))

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(f"{r.delta:.10g},{r.residual_l2:.10g},{r.se:.6g},{r.relative:.10g},{self.slope:.6g},"
                         f"{int(r.passed)}")
        return "\n".join(lines) + "\n"


def fitted_slope(deltas, residuals) -> float:
    """Least-squares slope of log(residual) against log(delta); NaN when undefined."""
    d, r = np.asarray(deltas, dtype=float), np.asarray(residuals, dtype=float)
    ok = (r > 0) & np.isfinite(r)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(d[ok]), np.log(r[ok]), 1)[0])


def residual_study(F: FunctionalSpec, model: LevyModel, ladder, n_paths: int, seed: int,
                   representation: Representation | None = None, table: TailTable | None = None,
                   rel_tol: float = 0.05, require_decrease: bool = True, threads: int | None = None,
                   chunk: int = 2048, label: str | None = None) -> ResidualStudy:
    """L2 residual of the reconstruction along a ladder of grid step counts.

    A row passes when its residual is below the previous (coarser) one, or
    always when ``require_decrease`` is false; the finest row must also have
    a relative residual below ``rel_tol``.
    """
    rep = closed_form_representation(F, model, table) if representation is None else representation
    steps_list = sorted(int(s) for s in ladder)
    raw = []
    for steps in steps_list:
        grid = TimeGrid.uniform(model.T, steps)
        diffs, values = [], []
        for batch in iter_batches(model, grid, n_paths, seed, chunk=chunk, threads=threads):
            fv = np.asarray(F.evaluate(batch, model), dtype=float)
            diffs.append(fv - reconstruct(batch, rep, model))
            values.append(fv)
        rms, se = l2_residual(np.concatenate(diffs))
        spread = float(np.concatenate(values).std(ddof=1))
        raw.append((model.T / steps, rms, se, rms / spread if spread > 0 else 0.0))
    exact = max(r[3] for r in raw) < 1e-12
    slope = float("nan") if exact else fitted_slope([r[0] for r in raw], [r[1] for r in raw])
    rows = []
    for k, (delta, rms, se, rel) in enumerate(raw):
        ok = True if (k == 0 or not require_decrease) else rms < raw[k - 1][1]
        if k == len(raw) - 1:
            ok = ok and rel < rel_tol
        rows.append(ResidualRow(delta, rms, se, rel, bool(ok)))
    return ResidualStudy(label or getattr(F, "name", type(F).__name__), rows, slope, n_paths, rel_tol)


@dataclass(frozen=True)
class VarianceIdentity:
    variance: float
    variance_se: float
    energy: float
    energy_se: float

    @property
    def passed(self) -> bool:
        return abs(self.variance - self.energy) <= 3.0 * np.hypot(self.variance_se, self.energy_se)


def variance_identity(F: FunctionalSpec, rep: Representation, model: LevyModel, n_paths: int, steps: int,
                      seed: int, threads: int | None = None) -> VarianceIdentity:
    """Var(F) against E int phi^2 dt + E int int psi^2 nu(dz) dt on the same paths."""
    from .integrate import nu_integral

    grid = TimeGrid.uniform(model.T, steps)
    vals, energy = RunningMoments(), RunningMoments()
    sq_psi = Integrand2(lambda s, z: rep.psi(s, z) ** 2)
    f_all = []
    for batch in iter_batches(model, grid, n_paths, seed, threads=threads):
        cells = batch.cell_state
        e = (rep.phi(cells) ** 2 * batch.dt).sum(axis=1)
        if model.jumps.active:
            e = e + (nu_integral(sq_psi, cells, model) * batch.dt).sum(axis=1)
        energy.add(e)
        f_all.append(np.asarray(F.evaluate(batch, model), dtype=float))
    f = np.concatenate(f_all)
    centred = (f - f.mean()) ** 2
    vals.add(centred)
    return VarianceIdentity(float(vals.mean), float(vals.se), float(energy.mean), float(energy.se))
