"""Martingale representation of the running maximum M_T = sup_{s <= T} X_s.

With ``a = M_t - X_t`` and ``Fbar_s(z) = P(M_s > z)`` the conditional
expectation is ``E[M_T | F_t] = M_t + int_a^inf Fbar_{T-t}(x) dx`` and the
representation integrands are::

    phi(t)    = sigma * Fbar_{T-t}(a)
    psi(t, z) = E[(M_{T-t} + z - a)^+] - int_a^inf Fbar_{T-t}(x) dx

Everything about the law of M_s is read from a :class:`TailTable` built once
by Monte Carlo on a uniform (s, z) grid and queried by bilinear
interpolation.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ExtrapolationBeyondTable
from .integrate import Integrand1, Integrand2, integral_ntilde, ito_integral_w
from .model import LevyModel, mark_grid, variance_rate
from .simulate import GRID_TOL, PathBatch, SamplePath, TimeGrid, as_batch, iter_batches

_MAGIC = b"LMTAILTB"
_VERSION = 1
_HEADER = struct.Struct("<8sIIqqqq")  # magic, version, pad, n_s, n_z, n_paths, seed
_TABLE_FIELDS = ("tail", "tail_se", "excess", "excess_se", "integral")


def running_max(paths):
    """``(M_T, tau)`` per path, ``tau`` the first time the supremum (left limits included) is reached."""
    batch = as_batch(paths)
    vals = np.maximum(batch.x, batch.x_left)
    pos = np.argmax(vals, axis=1)
    m = vals[np.arange(len(batch)), pos]
    tau = batch.times[np.arange(len(batch)), pos]
    if isinstance(paths, SamplePath):
        return float(m[0]), float(tau[0])
    return m, tau


def grid_running_max(batch: PathBatch) -> np.ndarray:
    """Running maximum (left limits included) at the time-grid nodes, shape ``(n, m + 1)``."""
    m1 = batch.grid.times.size
    on_grid = ~batch.is_jump
    sel = on_grid & (np.cumsum(on_grid, axis=1) <= m1)
    return batch.running_max[sel].reshape(len(batch), m1)


_BRIDGE_TAG = 0xB41D


def bridge_grid_running_max(batch: PathBatch, model: LevyModel, seed: int, first_index: int = 0) -> np.ndarray:
    """Running maximum of the continuous path at the time-grid nodes.

    Between consecutive union-grid nodes the path is a Brownian motion with
    drift pinned at both ends, whose maximum has the exact law
    ``(a + b + sqrt((b - a)^2 - 2 sigma^2 dt log U)) / 2``.  Uniforms come from
    per-path streams keyed by ``(seed, path index)``.
    """
    a, b, dt = batch.x[:, :-1], batch.x_left[:, 1:], batch.dt
    u = np.ones(dt.shape)
    for i, n in enumerate(batch.lengths):
        ss = np.random.SeedSequence(seed, spawn_key=(first_index + i, _BRIDGE_TAG))
        u[i, : n - 1] = np.random.default_rng(ss).random(n - 1)
    u = np.maximum(u, np.finfo(float).tiny)
    cell = 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * model.sigma**2 * dt * np.log(u)))
    run = np.empty(batch.x.shape)
    run[:, 0] = batch.x[:, 0]
    run[:, 1:] = np.maximum(cell, batch.x[:, 1:])
    run = np.maximum.accumulate(run, axis=1)
    m1 = batch.grid.times.size
    on_grid = ~batch.is_jump
    sel = on_grid & (np.cumsum(on_grid, axis=1) <= m1)
    return run[sel].reshape(len(batch), m1)


@dataclass(frozen=True)
class TailTable:
    """Law of the running maximum on an (s, z) grid.

    ``tail[i, j] = P(M_{s_i} > z_j)``, ``excess[i, j] = E[(M_{s_i} - z_j)^+]``
    (exact sample means at the nodes) and ``integral[i, j] = int_{z_j}^inf
    Fbar_{s_i}`` (trapezoid rule on the z-grid plus the exact excess beyond
    its end).  ``z_grid`` is uniform and starts at 0.
    """

    s_grid: np.ndarray
    z_grid: np.ndarray
    tail: np.ndarray
    tail_se: np.ndarray
    excess: np.ndarray
    excess_se: np.ndarray
    integral: np.ndarray
    n_paths: int
    seed: int
    isotonic_adjustments: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def mean(self) -> np.ndarray:
        """E[M_s] on the s-grid."""
        return self.excess[:, 0]

    @property
    def s_max(self) -> float:
        return float(self.s_grid[-1])

    @property
    def z_max(self) -> float:
        return float(self.z_grid[-1])

    # ------------------------------------------------------------------ interpolation

    def _s_weights(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < -GRID_TOL) or np.any(s > self.s_max + GRID_TOL):
            raise ExtrapolationBeyondTable(f"remaining horizon outside [0, {self.s_max:g}]")
        s = np.clip(s, 0.0, self.s_max)
        i = np.clip(np.searchsorted(self.s_grid, s, side="right") - 1, 0, self.s_grid.size - 2)
        w = (s - self.s_grid[i]) / (self.s_grid[i + 1] - self.s_grid[i])
        return i, np.clip(w, 0.0, 1.0)

    def _lookup(self, table: np.ndarray, s, z):
        """Bilinear interpolation of ``table`` at ``(s, z)`` with ``0 <= z <= z_max``."""
        z = np.asarray(z, dtype=float)
        if np.any(z > self.z_max + GRID_TOL):
            raise ExtrapolationBeyondTable(f"level {float(np.max(z)):g} beyond table end {self.z_max:g}")
        i, ws = self._s_weights(s)
        dz = self.z_grid[1] - self.z_grid[0]
        u = np.clip(z, 0.0, self.z_max) / dz
        j = np.clip(np.floor(u).astype(np.int64), 0, self.z_grid.size - 2)
        wz = np.clip(u - j, 0.0, 1.0)
        i, ws, j, wz = np.broadcast_arrays(i, ws, j, wz)
        lo = table[i, j] * (1 - wz) + table[i, j + 1] * wz
        hi = table[i + 1, j] * (1 - wz) + table[i + 1, j + 1] * wz
        return lo * (1 - ws) + hi * ws

    def fbar(self, s, z):
        """P(M_s > z); equal to 1 for z < 0."""
        z = np.asarray(z, dtype=float)
        return np.where(z < 0, 1.0, self._lookup(self.tail, s, np.maximum(z, 0.0)))

    def expected_max(self, s):
        i, ws = self._s_weights(s)
        return self.mean[i] * (1 - ws) + self.mean[i + 1] * ws

    def positive_part(self, s, c):
        """E[(M_s + c)^+]: the excess table for c < 0, E[M_s] + c for c >= 0."""
        c = np.asarray(c, dtype=float)
        neg = self._lookup(self.excess, s, np.maximum(-c, 0.0))
        return np.where(c >= 0, self.expected_max(s) + np.maximum(c, 0.0), neg)

    def tail_integral(self, s, a):
        """int_a^inf Fbar_s(x) dx; for a < 0 this is E[M_s] - a."""
        a = np.asarray(a, dtype=float)
        pos = self._lookup(self.integral, s, np.maximum(a, 0.0))
        return np.where(a < 0, self.expected_max(s) - np.minimum(a, 0.0), pos)

    def consistency_gap(self) -> float:
        """max |E[(M - a)^+] - int_a^inf Fbar| over the table nodes."""
        return float(np.max(np.abs(self.excess - self.integral)))

    # ------------------------------------------------------------------ persistence

    def save(self, path) -> Path:
        """Binary file with a versioned header plus a CSV twin next to it."""
        path = Path(path)
        ns, nz = self.s_grid.size, self.z_grid.size
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, 0, ns, nz, int(self.n_paths), int(self.seed)))
            fh.write(np.ascontiguousarray(self.s_grid, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.z_grid, dtype="<f8").tobytes())
            for name in _TABLE_FIELDS:
                fh.write(np.ascontiguousarray(getattr(self, name), dtype="<f8").tobytes())
        with open(path.with_suffix(".csv"), "w", newline="") as fh:
            fh.write(self.to_csv())
        return path

    @classmethod
    def load(cls, path) -> "TailTable":
        raw = Path(path).read_bytes()
        magic, version, _, ns, nz, n_paths, seed = _HEADER.unpack_from(raw, 0)
        if magic != _MAGIC:
            raise ValueError(f"{path} is not a tail table file")
        if version != _VERSION:
            raise ValueError(f"unsupported tail table version {version}")
        buf = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        expected = ns + nz + len(_TABLE_FIELDS) * ns * nz
        if buf.size != expected:
            raise ValueError(f"tail table file has {buf.size} values, expected {expected}")
        s_grid, z_grid = buf[:ns].copy(), buf[ns:ns + nz].copy()
        blocks = buf[ns + nz:].reshape(len(_TABLE_FIELDS), ns, nz)
        return cls(s_grid, z_grid, *(b.copy() for b in blocks), n_paths=n_paths, seed=seed)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("s,z,tail,tail_se,excess,excess_se,integral\n")
        for i, s in enumerate(self.s_grid):
            for j, z in enumerate(self.z_grid):
                out.write(f"{s:.10g},{z:.10g}," + ",".join(f"{getattr(self, k)[i, j]:.10g}" for k in _TABLE_FIELDS)
                          + "\n")
        return out.getvalue()


def default_z_max(model: LevyModel) -> float:
    """A level beyond which drawdowns and tail levels are negligible, padded by the mark range."""
    marks = mark_grid(model)
    return abs(model.mu) * model.T + 8.0 * np.sqrt(variance_rate(model) * model.T) + 2.0 * float(np.max(np.abs(marks)))


def build_tail_table(model: LevyModel, steps: int, n_paths: int, seed: int, z_max: float | None = None,
                     nz: int = 801, threads: int | None = None, chunk: int = 2048, s_stride: int = 1,
                     bridge: bool = False) -> TailTable:
    """Monte Carlo table of the law of M_s for s on the uniform ``steps`` grid of [0, T].

    Paths are simulated with ``steps`` cells; only every ``s_stride``-th node
    enters the s-grid.  Per (s, level-bin) counts, sums and sums of squares
    are accumulated over path chunks, which gives exact empirical tail
    probabilities and excess means at the grid levels.

    By default M_s is the maximum over the simulated nodes (the discretely
    monitored maximum the test paths also see).  ``bridge=True`` samples the
    exact within-cell maxima instead, so the table describes the continuous
    maximum whatever ``steps`` is.
    """
    if steps % s_stride:
        raise ValueError("s_stride must divide the number of steps")
    grid = TimeGrid.uniform(model.T, steps)
    z_max = default_z_max(model) if z_max is None else float(z_max)
    z_grid = np.linspace(0.0, z_max, nz)
    s_grid = grid.times[::s_stride]
    ns = s_grid.size
    bins = ns * (nz + 1)
    count = np.zeros(bins)
    s1 = np.zeros(bins)
    s2 = np.zeros(bins)
    offset = (np.arange(ns) * (nz + 1))[None, :]
    start = 0
    for batch in iter_batches(model, grid, n_paths, seed, chunk=chunk, threads=threads):
        if bridge:
            m = bridge_grid_running_max(batch, model, seed, start)[:, ::s_stride]
        else:
            m = grid_running_max(batch)[:, ::s_stride]
        start += len(batch)
        flat = (offset + np.searchsorted(z_grid, m, side="left")).ravel()
        count += np.bincount(flat, minlength=bins)
        s1 += np.bincount(flat, weights=m.ravel(), minlength=bins)
        s2 += np.bincount(flat, weights=(m * m).ravel(), minlength=bins)
    shape = (ns, nz + 1)
    count, s1, s2 = (a.reshape(shape) for a in (count, s1, s2))
    # suffix sums over bins k >= j + 1 give the statistics of {M > z_j}
    above = lambda a: np.cumsum(a[:, ::-1], axis=1)[:, ::-1][:, 1:]
    n_above, s1_above, s2_above = above(count), above(s1), above(s2)
    n = float(n_paths)
    z = z_grid[None, :]
    tail = n_above / n
    excess = (s1_above - z * n_above) / n
    second = (s2_above - 2 * z * s1_above + z * z * n_above) / n
    tail_se = np.sqrt(tail * (1 - tail) / max(n - 1, 1))
    excess_se = np.sqrt(np.maximum(second - excess**2, 0.0) / max(n - 1, 1))
    tail_iso = np.maximum.accumulate(np.minimum.accumulate(tail, axis=1), axis=0)
    adjustments = int(np.count_nonzero(tail_iso != tail))
    dz = z_grid[1] - z_grid[0]
    trap = 0.5 * dz * (tail_iso[:, 1:] + tail_iso[:, :-1])
    integral = np.zeros_like(tail_iso)
    integral[:, -1] = excess[:, -1]
    integral[:, :-1] = excess[:, -1:] + np.cumsum(trap[:, ::-1], axis=1)[:, ::-1]
    return TailTable(s_grid.copy(), z_grid, tail_iso, tail_se, excess, excess_se, integral, int(n_paths),
                     int(seed), adjustments, {"steps": steps, "s_stride": s_stride, "bridge": bridge})


# --------------------------------------------------------------------------
# conditional expectation and integrands
# --------------------------------------------------------------------------


def _drawdown_state(paths, t: float):
    batch = as_batch(paths)
    idx = batch.index_at(t)[:, None]
    m_t = np.take_along_axis(batch.running_max, idx, axis=1)[:, 0]
    x_t = np.take_along_axis(batch.x, idx, axis=1)[:, 0]
    return m_t, x_t


def shiryaev_yor(model: LevyModel, paths, t: float, table: TailTable):
    """E[M_T | F_t] = M_t + int_a^inf Fbar_{T-t}, a = M_t - X_t."""
    m_t, x_t = _drawdown_state(paths, t)
    out = m_t + table.tail_integral(model.T - t, m_t - x_t)
    return float(out[0]) if isinstance(paths, SamplePath) else out


def integrands_max(model: LevyModel, paths, t: float, z_grid, table: TailTable):
    """``(phi(t), psi(t, z))`` per path from the tail table."""
    m_t, x_t = _drawdown_state(paths, t)
    a = m_t - x_t
    s = model.T - t
    z = np.asarray(z_grid, dtype=float)
    phi = model.sigma * table.fbar(s, a)
    psi = table.positive_part(s, z[None, :] - a[:, None]) - table.tail_integral(s, a)[:, None]
    if isinstance(paths, SamplePath):
        return float(phi[0]), psi[0]
    return phi, psi


def max_integrands(model: LevyModel, table: TailTable) -> tuple[Integrand1, Integrand2]:
    """The representation integrands as predictable functions of the path state."""
    T = model.T

    def phi(state):
        return model.sigma * table.fbar(T - state.t, state.running_max - state.x)

    def psi(state, z):
        a = state.running_max - state.x
        return table.positive_part(T - state.t, z - a) - table.tail_integral(T - state.t, a)

    return Integrand1(phi), Integrand2(psi)


@dataclass(frozen=True)
class MaxRepresentationReport:
    steps: int
    n_paths: int
    residual_l2: float
    se: float
    spread: float
    expected_max: float
    phi_min: float
    phi_max: float
    psi_excess: float
    psi_tolerance: float
    sigma_bound: float

    @property
    def relative(self) -> float:
        return self.residual_l2 / self.spread

    @property
    def phi_in_bounds(self) -> bool:
        return self.phi_min >= -1e-12 and self.phi_max <= self.sigma_bound + 1e-12

    @property
    def psi_in_bounds(self) -> bool:
        return self.psi_excess <= self.psi_tolerance


def l2_residual(diff: np.ndarray) -> tuple[float, float]:
    """Root mean square of ``diff`` and its delta-method standard error."""
    sq = diff**2
    ms = float(sq.mean())
    rms = np.sqrt(ms)
    se_ms = float(sq.std(ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else 0.0
    return float(rms), (se_ms / (2 * rms) if rms > 0 else 0.0)


def verify_max_representation(model: LevyModel, table: TailTable, n_paths: int, steps: int, seed: int,
                              threads: int | None = None, z_grid=None, chunk: int = 1024) -> MaxRepresentationReport:
    """L2 residual of M_T against E[M_T] + int phi dW + int int psi dNtilde, plus the integrand bounds.

    The bounds are checked at every cell of every path, ``psi`` on the mark
    grid and at the jump-law quadrature nodes.
    """
    if abs(table.s_max - model.T) > GRID_TOL:
        raise ExtrapolationBeyondTable("tail table horizon differs from the model horizon")
    grid = TimeGrid.uniform(model.T, steps)
    phi, psi = max_integrands(model, table)
    marks = mark_grid(model) if z_grid is None else np.asarray(z_grid, dtype=float)
    if model.jumps.active:
        marks = np.unique(np.concatenate([marks, model.jumps.quadrature()[0]]))
    mean_m = float(table.expected_max(model.T))
    diffs, values = [], []
    phi_lo, phi_hi, psi_excess = np.inf, -np.inf, -np.inf
    for batch in iter_batches(model, grid, n_paths, seed, chunk=chunk, threads=threads):
        m_T = running_max(batch)[0]
        recon = mean_m + ito_integral_w(batch, phi)
        if model.jumps.active:
            recon = recon + integral_ntilde(batch, psi, model)
        diffs.append(m_T - recon)
        values.append(m_T)
        cells = batch.cell_state
        ph = phi(cells)
        phi_lo, phi_hi = min(phi_lo, float(ph.min())), max(phi_hi, float(ph.max()))
        if model.jumps.active:
            for z in marks:
                psi_excess = max(psi_excess, float(np.max(np.abs(psi(cells, z)) - abs(z))))
    diff = np.concatenate(diffs)
    vals = np.concatenate(values)
    rms, se = l2_residual(diff)
    return MaxRepresentationReport(
        steps=steps, n_paths=n_paths, residual_l2=rms, se=se, spread=float(vals.std(ddof=1)), expected_max=mean_m,
        phi_min=phi_lo, phi_max=phi_hi, psi_excess=psi_excess if model.jumps.active else 0.0,
        psi_tolerance=max(table.consistency_gap(), 1e-12), sigma_bound=model.sigma)


@dataclass(frozen=True)
class CheckRow:
    """One estimate against its reference: ``label`` and coordinates are free-form."""

    label: str
    s: float
    z: float
    estimate: float
    se: float
    reference: float
    passed: bool

    CSV_HEADER = "check,s,z,estimate,se,reference,pass"

    def csv(self) -> str:
        return (f"{self.label},{self.s:.10g},{self.z:.10g},{self.estimate:.10g},{self.se:.6g},{self.reference:.10g},"
                f"{int(self.passed)}")


def reflection_check(model: LevyModel, table: TailTable, s_values, z_values,
                     se_multiplier: float = 3.0) -> list[CheckRow]:
    """Pure Brownian motion without drift: E[M_T] = sigma sqrt(2T/pi) and Fbar_s(z) = 2(1 - Phi(z / sigma sqrt s)).

    Tail probabilities are tested with the binomial se under the reference
    value, so far-tail cells with no exceedances are judged correctly.
    """
    from scipy import stats

    if model.jumps.active or model.mu != 0.0:
        raise ValueError("the reflection formulas need a driftless Brownian model")
    sig, T = model.sigma, model.T
    rows = []
    i = int(np.argmin(np.abs(table.s_grid - T)))
    ref = sig * np.sqrt(2.0 * T / np.pi)
    est, se = float(table.mean[i]), float(table.excess_se[i, 0])
    rows.append(CheckRow("expected_max", T, 0.0, est, se, ref, abs(est - ref) <= se_multiplier * se))
    for s in s_values:
        for z in z_values:
            est = float(table.fbar(s, z))
            ref = float(2.0 * stats.norm.sf(z / (sig * np.sqrt(s))))
            se = float(np.sqrt(ref * (1.0 - ref) / table.n_paths))
            rows.append(CheckRow("tail", float(s), float(z), est, se, ref, abs(est - ref) <= se_multiplier * se))
    return rows


@dataclass(frozen=True)
class ShiryaevYorRow:
    t: float
    table_mean: float
    nested_mean: float
    mean_diff: float
    se: float
    fraction_within: float
    passed: bool

    CSV_HEADER = "t,table_mean,nested_mean,mean_diff,se,fraction_within,pass"

    def csv(self) -> str:
        return (f"{self.t:.10g},{self.table_mean:.10g},{self.nested_mean:.10g},{self.mean_diff:.6g},{self.se:.6g},"
                f"{self.fraction_within:.6g},{int(self.passed)}")


def verify_shiryaev_yor(model: LevyModel, table: TailTable, paths: PathBatch, times, n_inner: int, seed: int,
                        se_multiplier: float = 3.0, min_fraction: float = 0.95, first_index: int = 0):
    """Table-based E[M_T | F_t] against nested Monte Carlo over continuations, per path and time.

    Returns ``(rows, per_path)``.  Each row aggregates one time: the mean
    difference over paths with its standard error (inner noise plus the
    table's own error), passing when it is within ``se_multiplier`` standard
    errors and at least ``min_fraction`` of the paths agree individually.
    ``per_path`` holds ``(t, table, nested, combined_se)`` arrays.
    """
    from .simulate import SeedSpec, resimulate_batch

    rows, per_path = [], []
    for t in times:
        sy = shiryaev_yor(model, paths, t, table)
        m_t, x_t = _drawdown_state(paths, t)
        table_se = table._lookup(table.excess_se, model.T - t, np.maximum(m_t - x_t, 0.0))
        nested, nested_se = np.zeros(len(paths)), np.zeros(len(paths))
        for i, path in enumerate(paths):
            inner = resimulate_batch(model, path, t, n_inner, SeedSpec(seed, first_index + i))
            mt = running_max(inner)[0]
            nested[i] = mt.mean()
            nested_se[i] = mt.std(ddof=1) / np.sqrt(n_inner)
        combined = np.sqrt(nested_se**2 + table_se**2)
        within = np.abs(sy - nested) <= se_multiplier * combined + 1e-12
        diff = float(np.mean(sy - nested))
        se = float(np.sqrt(np.sum(nested_se**2)) / len(paths) + np.mean(table_se))
        ok = abs(diff) <= se_multiplier * se + 1e-12 and within.mean() >= min_fraction
        rows.append(ShiryaevYorRow(float(t), float(np.mean(sy)), float(np.mean(nested)), diff, se,
                                   float(within.mean()), bool(ok)))
        per_path.append((float(t), sy, nested, combined))
    return rows, per_path
