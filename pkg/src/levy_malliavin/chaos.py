"""Iterated integrals over ordered simplices and chaos-level estimators.

A :class:`MultiIndex` ``(i_1, ..., i_n)`` names the integrators slot by slot,
innermost first: ``1`` integrates against W(dt) and ``2`` against Ntilde(dt, dz).
Integrands are :class:`SimplexFunction` objects.  Product-form integrands
(one deterministic factor per slot, optionally restricted to a time window)
are integrated recursively: the running inner integral is kept on the union
grid and integrated left-point against the next integrator.  General
integrands fall back to an explicit sum over ordered cell tuples, which is
only practical for small grids and orders up to 3 and serves as an oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate

from .doleans import ExponentParams, doleans_exponential
from .errors import FourierTailTooHeavy, OrderTooLarge
from .integrate import compensator_increments, deterministic2, jump_increments
from .model import LevyModel, characteristic_exponent, gauss_legendre
from .stats import RunningMoments
from .simulate import GRID_TOL, PathBatch, SamplePath, TimeGrid, as_batch, iter_batches

MAX_ORDER = 6
_NESTED_GL_MAX = 3
_CUMULATIVE_POINTS = 4097


@dataclass(frozen=True, order=True)
class MultiIndex:
    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(i) for i in self.entries)
        if not entries:
            raise ValueError("a multi-index needs at least one slot")
        if any(i not in (1, 2) for i in entries):
            raise ValueError(f"multi-index entries must be 1 or 2, got {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, *entries) -> "MultiIndex":
        if len(entries) == 1 and not isinstance(entries[0], (int, np.integer)):
            entries = tuple(entries[0])
        return cls(tuple(entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def brownian_count(self) -> int:
        """Number of Brownian slots, sum of (2 - i_k)."""
        return sum(2 - i for i in self.entries)

    @property
    def jump_count(self) -> int:
        return self.n - self.brownian_count

    def without(self, k: int) -> "MultiIndex | None":
        rest = self.entries[:k] + self.entries[k + 1:]
        return MultiIndex(rest) if rest else None

    def __str__(self):
        return "(" + ",".join(map(str, self.entries)) + ")"

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        return cls(tuple(int(c) for c in text.strip("() ").split(",") if c.strip()))


def all_indices(n: int) -> list[MultiIndex]:
    """Every multi-index of length ``n`` in lexicographic order."""
    return [MultiIndex(e) for e in itertools.product((1, 2), repeat=n)]


def indices_up_to(N: int) -> list[MultiIndex]:
    return [idx for n in range(1, N + 1) for idx in all_indices(n)]


def _check_order(n: int):
    if n > MAX_ORDER:
        raise OrderTooLarge(f"order {n} exceeds the supported maximum {MAX_ORDER}")


def _one_t(t):
    return np.ones(np.shape(t))


def _one_tz(t, z):
    return np.ones(np.broadcast_shapes(np.shape(t), np.shape(z)))


@dataclass(frozen=True)
class SimplexFunction:
    """Integrand on the marked simplex of a multi-index.

    Product form: ``factors[k]`` is ``f_k(t)`` on Brownian slots and
    ``f_k(t, z)`` on jump slots, each optionally restricted to ``windows[k] =
    (lo, hi)``.  On a path a window keeps the cells ``(t_c, t_{c+1}]`` inside
    ``[lo, hi]``, so ``lo`` and ``hi`` should be grid points.  General form: ``general(*args)`` where a Brownian slot
    receives its time and a jump slot a ``(t, z)`` pair.
    """

    index: MultiIndex
    factors: tuple[Callable, ...] | None = None
    windows: tuple[tuple[float, float] | None, ...] | None = None
    general: Callable | None = None
    scale: float = 1.0

    def __post_init__(self):
        if (self.factors is None) == (self.general is None):
            raise ValueError("give either product factors or a general callable")
        if self.factors is not None and len(self.factors) != self.index.n:
            raise ValueError("one factor per slot is required")
        if self.windows is not None and len(self.windows) != self.index.n:
            raise ValueError("one window per slot is required")

    @classmethod
    def ones(cls, index: MultiIndex) -> "SimplexFunction":
        return cls(index, tuple(_one_t if i == 1 else _one_tz for i in index))

    @property
    def is_product(self) -> bool:
        return self.factors is not None

    def window(self, k: int):
        return None if self.windows is None else self.windows[k]

    def scaled(self, c: float) -> "SimplexFunction":
        return SimplexFunction(self.index, self.factors, self.windows, self.general, self.scale * c)

    def restricted(self, windows) -> "SimplexFunction":
        return SimplexFunction(self.index, self.factors, tuple(windows), self.general, self.scale)

    def _factor_value(self, k: int, arg):
        if self.index[k] == 1:
            t = np.asarray(arg, dtype=float)
            val = self.factors[k](t)
        else:
            t, z = (np.asarray(a, dtype=float) for a in arg)
            val = self.factors[k](t, z)
        win = self.window(k)
        if win is not None:
            # half-open [lo, hi): a left point equal to hi starts a cell outside the window
            val = np.where((t >= win[0] - GRID_TOL) & (t < win[1] - GRID_TOL), val, 0.0)
        return val

    def __call__(self, *args):
        if len(args) != self.index.n:
            raise ValueError(f"expected {self.index.n} arguments")
        if self.general is not None:
            return self.scale * np.asarray(self.general(*args), dtype=float)
        out = self.scale
        for k, arg in enumerate(args):
            out = out * self._factor_value(k, arg)
        return out

    def pinned(self, k: int, t: float, z: float | None = None) -> tuple[float, "SimplexFunction | None"]:
        """Fix slot ``k`` at ``t`` (and mark ``z``) and restrict the rest to the split simplex.

        Slots before ``k`` are restricted to ``[0, t]`` and slots after ``k``
        to ``[t, T]``.  Returns the pinned factor value and the remaining
        product-form integrand (``None`` when nothing remains).
        """
        if not self.is_product:
            raise ValueError("slot pinning needs a product-form integrand")
        arg = t if self.index[k] == 1 else (t, z)
        value = float(self.scale * self._factor_value(k, arg))
        rest = self.index.without(k)
        if rest is None:
            return value, None
        windows = []
        for j in range(self.index.n):
            if j == k:
                continue
            lo, hi = self.window(j) or (-np.inf, np.inf)
            windows.append((lo, min(hi, t)) if j < k else (max(lo, t), hi))
        factors = self.factors[:k] + self.factors[k + 1:]
        return value, SimplexFunction(rest, factors, tuple(windows))


def tensor_product(h: Callable, g: Callable, idx: MultiIndex) -> SimplexFunction:
    """``h`` on every Brownian slot and ``g`` on every jump slot, multiplied together."""
    idx = idx if isinstance(idx, MultiIndex) else MultiIndex.of(idx)
    return SimplexFunction(idx, tuple(h if i == 1 else g for i in idx))


# --------------------------------------------------------------------------
# pathwise evaluation
# --------------------------------------------------------------------------


def _cell_window_mask(batch: PathBatch, window) -> np.ndarray | None:
    if window is None:
        return None
    lo, hi = window
    t = batch.times
    return (t[:, :-1] >= lo - GRID_TOL) & (t[:, 1:] <= hi + GRID_TOL)


def slot_increments(batch: PathBatch, kind: int, factor: Callable, model: LevyModel, window=None) -> np.ndarray:
    """Per-cell increments ``int_cell factor dM`` for one slot (left-point in time)."""
    if kind == 1:
        m = factor(batch.cell_state.t) * batch.dw
    else:
        psi = deterministic2(factor)
        m = jump_increments(batch, psi)
        if model.jumps.active:
            m = m - compensator_increments(batch, psi, model)
    mask = _cell_window_mask(batch, window)
    return m if mask is None else np.where(mask, m, 0.0)


def integrate_running(inner: np.ndarray, increments: np.ndarray) -> np.ndarray:
    """Running left-point integral of the node process ``inner`` against per-cell increments."""
    out = np.zeros(inner.shape)
    np.cumsum(inner[:, :-1] * increments, axis=1, out=out[:, 1:])
    return out


def _product_running(batch: PathBatch, f: SimplexFunction, model: LevyModel) -> np.ndarray:
    running = np.ones(batch.times.shape)
    for k, kind in enumerate(f.index):
        running = integrate_running(running, slot_increments(batch, kind, f.factors[k], model, f.window(k)))
    return f.scale * running


def _atoms(path_batch: PathBatch, row: int, kind: int, model: LevyModel):
    """Signed atoms (cell, time, mark, weight) of one slot's integrator on one path."""
    n_cells = int(path_batch.lengths[row]) - 1
    t = path_batch.times[row]
    cells = np.arange(n_cells)
    if kind == 1:
        return cells, t[:-1][:n_cells], np.zeros(n_cells), path_batch.dw[row, :n_cells]
    jumps = np.nonzero(path_batch.cell_is_jump[row, :n_cells])[0]
    c_parts = [jumps]
    t_parts = [t[1:][jumps]]
    z_parts = [path_batch.cell_jump[row, jumps]]
    w_parts = [np.ones(jumps.size)]
    if model.jumps.active:
        zq, wq = model.jumps.quadrature()
        dt = path_batch.dt[row, :n_cells]
        c_parts.append(np.repeat(cells, zq.size))
        t_parts.append(np.repeat(t[:-1][:n_cells], zq.size))
        z_parts.append(np.tile(zq, n_cells))
        w_parts.append(-(dt[:, None] * wq[None, :]).reshape(-1))
    return tuple(np.concatenate(p) for p in (c_parts, t_parts, z_parts, w_parts))


def _brute_force(batch: PathBatch, f: SimplexFunction, model: LevyModel) -> np.ndarray:
    n = f.index.n
    if n > 3:
        raise OrderTooLarge("general integrands are supported up to order 3")
    out = np.zeros(len(batch))
    for row in range(len(batch)):
        atoms = [_atoms(batch, row, kind, model) for kind in f.index]
        shape = lambda k: tuple(-1 if j == k else 1 for j in range(n))
        args, weight, ordered = [], 1.0, True
        for k, (c, t, z, w) in enumerate(atoms):
            t, z, w = t.reshape(shape(k)), z.reshape(shape(k)), w.reshape(shape(k))
            args.append(t if f.index[k] == 1 else (t, z))
            weight = weight * w
            if k:
                ordered = ordered & (atoms[k - 1][0].reshape(shape(k - 1)) < c.reshape(shape(k)))
        out[row] = np.sum(np.where(ordered, f(*args) * weight, 0.0))
    return out


def iterated_integral(paths, idx: MultiIndex, f: SimplexFunction | None, model: LevyModel,
                      running: bool = False, method: str = "auto"):
    """J_idx(f) for each path; ``running=True`` returns the process on the union grid.

    ``method`` is ``"recursive"`` (product form), ``"brute"`` (explicit
    ordered sum, any integrand, order <= 3) or ``"auto"``.
    """
    idx = idx if isinstance(idx, MultiIndex) else MultiIndex.of(idx)
    _check_order(idx.n)
    f = SimplexFunction.ones(idx) if f is None else f
    if f.index != idx:
        raise ValueError(f"integrand is defined for {f.index}, not {idx}")
    batch = as_batch(paths)
    single = isinstance(paths, SamplePath)
    if method == "auto":
        method = "recursive" if f.is_product else "brute"
    if method == "recursive":
        proc = _product_running(batch, f, model)
        if running:
            return proc[0] if single else proc
        out = proc[:, -1]
    elif method == "brute":
        if running:
            raise ValueError("running values are only available for product-form integrands")
        out = _brute_force(batch, f, model)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out[0]) if single else out


def all_iterated_integrals(batch: PathBatch, model: LevyModel, max_order: int,
                           h: Callable = _one_t, g: Callable = _one_tz) -> dict[MultiIndex, np.ndarray]:
    """Terminal J_idx(h (x) g) for every index up to ``max_order``, sharing common prefixes."""
    _check_order(max_order)
    incr = {1: slot_increments(batch, 1, h, model), 2: slot_increments(batch, 2, g, model)}
    out: dict[MultiIndex, np.ndarray] = {}

    def walk(prefix: tuple[int, ...], running: np.ndarray):
        for kind in (1, 2):
            nxt = integrate_running(running, incr[kind])
            entries = prefix + (kind,)
            out[MultiIndex(entries)] = nxt[:, -1]
            if len(entries) < max_order:
                walk(entries, nxt)

    walk((), np.ones(batch.times.shape))
    return {idx: out[idx] for idx in indices_up_to(max_order)}


# --------------------------------------------------------------------------
# deterministic simplex inner products
# --------------------------------------------------------------------------


def _slot_density(f: SimplexFunction, g: SimplexFunction, k: int, model: LevyModel) -> Callable:
    """t -> f_k g_k (Brownian slot) or t -> int f_k g_k nu(dz) (jump slot), windows applied."""
    kind = f.index[k]

    def rho(t):
        t = np.asarray(t, dtype=float)
        if kind == 1:
            val = f._factor_value(k, t) * g._factor_value(k, t)
        else:
            if not model.jumps.active:
                return np.zeros(t.shape)
            z, w = model.jumps.quadrature()
            tt = t[..., None]
            val = (f._factor_value(k, (tt, z)) * g._factor_value(k, (tt, z))) @ w
        return np.broadcast_to(val, t.shape)

    return rho


def simplex_inner_product(f: SimplexFunction, g: SimplexFunction, model: LevyModel, T: float | None = None) -> float:
    """``(f, g)`` on the marked simplex: int_{t_1 < ... < t_n < T} prod_k rho_k(t_k) dt.

    Nested 64-node Gauss-Legendre up to order 3, cumulative Simpson on a
    fine uniform grid beyond.
    """
    if f.index != g.index:
        return 0.0
    if not (f.is_product and g.is_product):
        raise ValueError("simplex inner products need product-form integrands")
    T = model.T if T is None else T
    n = f.index.n
    _check_order(n)
    rho = [_slot_density(f, g, k, model) for k in range(n)]
    scale = f.scale * g.scale
    if n <= _NESTED_GL_MAX:
        x01, w01 = gauss_legendre(0.0, 1.0)

        def nested(k: int, s: np.ndarray) -> np.ndarray:
            # int_0^s rho_k(u) * nested(k - 1, u) du for every entry of s
            u = s[..., None] * x01
            w = s[..., None] * w01
            inner = nested(k - 1, u) if k else 1.0
            return np.sum(w * rho[k](u) * inner, axis=-1)

        return float(scale * nested(n - 1, np.array(T)))
    t = np.linspace(0.0, T, _CUMULATIVE_POINTS)
    acc = np.ones_like(t)
    for k in range(n):
        acc = sp_integrate.cumulative_simpson(rho[k](t) * acc, x=t, initial=0.0)
    return float(scale * acc[-1])


# --------------------------------------------------------------------------
# Monte Carlo estimators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InnerProductEstimate:
    index_a: MultiIndex
    index_b: MultiIndex
    estimate: float
    se: float
    reference: float
    se_multiplier: float = 3.0

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.reference) <= self.se_multiplier * self.se + 1e-12

    @property
    def z_score(self) -> float:
        return (self.estimate - self.reference) / self.se if self.se > 0 else 0.0


def estimate_inner_product(idx_a, f: SimplexFunction | None, idx_b, g: SimplexFunction | None, model: LevyModel,
                           n_paths: int, steps: int = 256, seed: int = 0, threads: int | None = None,
                           se_multiplier: float = 3.0) -> InnerProductEstimate:
    """Monte Carlo E[J_a(f) J_b(g)] with its reference (simplex inner product or 0)."""
    idx_a = idx_a if isinstance(idx_a, MultiIndex) else MultiIndex.of(idx_a)
    idx_b = idx_b if isinstance(idx_b, MultiIndex) else MultiIndex.of(idx_b)
    f = SimplexFunction.ones(idx_a) if f is None else f
    g = SimplexFunction.ones(idx_b) if g is None else g
    grid = TimeGrid.uniform(model.T, steps)
    acc = RunningMoments(())
    for batch in iter_batches(model, grid, n_paths, seed, threads=threads):
        acc.add(iterated_integral(batch, idx_a, f, model) * iterated_integral(batch, idx_b, g, model))
    ref = simplex_inner_product(f, g, model) if idx_a == idx_b else 0.0
    return InnerProductEstimate(idx_a, idx_b, float(acc.mean), float(acc.se), ref, se_multiplier)


@dataclass(frozen=True)
class OrthogonalityReport:
    indices: list[MultiIndex]
    estimates: list[InnerProductEstimate]
    n_paths: int

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.estimates)

    @property
    def off_diagonal(self) -> list[InnerProductEstimate]:
        return [e for e in self.estimates if e.index_a != e.index_b]

    @property
    def diagonal(self) -> list[InnerProductEstimate]:
        return [e for e in self.estimates if e.index_a == e.index_b]

    def to_csv(self) -> str:
        lines = ["index_a,index_b,estimate,se,reference,pass"]
        for e in self.estimates:
            lines.append(f"\"{e.index_a}\",\"{e.index_b}\",{e.estimate:.10g},{e.se:.6g},{e.reference:.10g},"
                         f"{int(e.passed)}")
        return "\n".join(lines) + "\n"


def orthogonality_matrix(model: LevyModel, max_length: int = 3, n_paths: int = 100_000, steps: int = 1024,
                         seed: int = 0, threads: int | None = None, se_multiplier: float = 3.0,
                         chunk: int = 2048) -> OrthogonalityReport:
    """E[J_a J_b] with unit integrands for every pair of indices up to ``max_length`` (upper triangle)."""
    indices = indices_up_to(max_length)
    grid = TimeGrid.uniform(model.T, steps)
    k = len(indices)
    n = 0
    s1 = np.zeros((k, k))
    s2 = np.zeros((k, k))
    for batch in iter_batches(model, grid, n_paths, seed, chunk=chunk, threads=threads):
        J = np.stack([v for v in all_iterated_integrals(batch, model, max_length).values()], axis=1)
        prod = J[:, :, None] * J[:, None, :]
        s1 += prod.sum(axis=0)
        s2 += (prod**2).sum(axis=0)
        n += J.shape[0]
    mean = s1 / n
    se = np.sqrt(np.maximum(s2 / n - mean**2, 0.0) / (n - 1))
    ones = {idx: SimplexFunction.ones(idx) for idx in indices}
    rows = []
    for a in range(k):
        for b in range(a, k):
            ia, ib = indices[a], indices[b]
            ref = simplex_inner_product(ones[ia], ones[ib], model) if a == b else 0.0
            rows.append(InnerProductEstimate(ia, ib, float(mean[a, b]), float(se[a, b]), ref, se_multiplier))
    return OrthogonalityReport(indices, rows, n)


# --------------------------------------------------------------------------
# chaos expansion of the Doleans exponential
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChaosRow:
    order: int
    index: str
    energy_mc: float
    energy_analytic: float
    se: float
    passed: bool

    def csv(self) -> str:
        return (f"{self.order},\"{self.index}\",{self.energy_mc:.10g},{self.energy_analytic:.10g},{self.se:.6g},"
                f"{int(self.passed)}")


@dataclass(frozen=True)
class ChaosReport:
    S: float
    max_order: int
    index_rows: list[ChaosRow]
    order_rows: list[ChaosRow]
    truncation: ChaosRow
    second_moment: ChaosRow
    n_paths: int

    CSV_HEADER = "order,index,energy_mc,energy_analytic,se,pass"

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.order_rows) and self.truncation.passed

    def to_csv(self) -> str:
        rows = self.index_rows + self.order_rows + [self.truncation, self.second_moment]
        return "\n".join([self.CSV_HEADER] + [r.csv() for r in rows]) + "\n"


def _sum_sq_tail(S: float, N: int) -> float:
    return math.exp(S) - sum(S**n / math.factorial(n) for n in range(N + 1))


def chaos_expand_Z(params: ExponentParams, model: LevyModel, N: int, n_paths: int, steps: int = 1024,
                   seed: int = 0, threads: int | None = None, energy_rtol: float = 0.05, tail_rtol: float = 0.10,
                   energy_orders: int = 3, chunk: int = 2048) -> ChaosReport:
    """Truncated chaos series of Z_T against Z_T itself.

    Order totals are compared with S^n/n! for ``n <= energy_orders`` within
    ``energy_rtol``; the truncation L2 error with the analytic tail within
    ``tail_rtol``.  Per-index rows pass within 3 standard errors or the same
    relative tolerance.
    """
    _check_order(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    params.validate(model)
    S = params.total_energy(model)
    grid = TimeGrid.uniform(model.T, steps)
    indices = indices_up_to(N)
    per_index = RunningMoments(len(indices))
    per_order = RunningMoments(N)
    trunc = RunningMoments(())
    z2 = RunningMoments(())
    for batch in iter_batches(model, grid, n_paths, seed, chunk=chunk, threads=threads):
        J = all_iterated_integrals(batch, model, N, params.h, params.jump_factor)
        Jm = np.stack([J[i] for i in indices], axis=1)
        per_index.add(Jm**2)
        orders = np.array([i.n for i in indices])
        per_order.add(np.stack([(Jm[:, orders == n] ** 2).sum(axis=1) for n in range(1, N + 1)], axis=1))
        zT = doleans_exponential(batch, params, model)[:, -1]
        trunc.add((zT - 1.0 - Jm.sum(axis=1)) ** 2)
        z2.add(zT**2)

    def rel_ok(est, ref, se, rtol):
        return abs(est - ref) <= rtol * abs(ref) + 1e-12

    index_rows = []
    for k, idx in enumerate(indices):
        f = tensor_product(params.h, params.jump_factor, idx)
        ref = simplex_inner_product(f, f, model)
        est, se = float(per_index.mean[k]), float(per_index.se[k])
        ok = abs(est - ref) <= 3.0 * se + 1e-12 or rel_ok(est, ref, se, energy_rtol)
        index_rows.append(ChaosRow(idx.n, str(idx), est, ref, se, ok))
    order_rows = []
    for n in range(1, N + 1):
        ref = S**n / math.factorial(n)
        est, se = float(per_order.mean[n - 1]), float(per_order.se[n - 1])
        ok = rel_ok(est, ref, se, energy_rtol) if n <= energy_orders else True
        order_rows.append(ChaosRow(n, f"order {n}", est, ref, se, ok))
    tail = _sum_sq_tail(S, N)
    est, se = float(trunc.mean), float(trunc.se)
    trunc_row = ChaosRow(N, "truncation", est, tail, se, rel_ok(est, tail, se, tail_rtol))
    ez2 = math.exp(S)
    est, se = float(z2.mean), float(z2.se)
    z2_row = ChaosRow(0, "E[Z_T^2]", est, ez2, se, abs(est - ez2) <= 3.0 * se)
    return ChaosReport(S, N, index_rows, order_rows, trunc_row, z2_row, per_order.n)


# --------------------------------------------------------------------------
# first-order Fourier coefficients of f(X_T)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierFunction:
    """A smooth test function with its unitary Fourier transform.

    ``fhat(y) = (2 pi)^(-1/2) int f(x) exp(-i x y) dx``.
    """

    f: Callable
    fhat: Callable
    derivative: Callable | None = None


def gaussian_bump(center: float = 0.0, width: float = 1.0) -> FourierFunction:
    """``f(x) = exp(-(x - center)^2 / (2 width^2))``."""
    c, w = float(center), float(width)
    return FourierFunction(
        f=lambda x: np.exp(-0.5 * ((np.asarray(x) - c) / w) ** 2),
        fhat=lambda y: w * np.exp(-0.5 * (w * np.asarray(y)) ** 2 - 1j * c * np.asarray(y)),
        derivative=lambda x: -(np.asarray(x) - c) / w**2 * np.exp(-0.5 * ((np.asarray(x) - c) / w) ** 2),
    )


@dataclass(frozen=True)
class FirstOrderCoefficients:
    t_grid: np.ndarray
    z_grid: np.ndarray
    c0: float
    f1: np.ndarray
    f2: np.ndarray


_FOURIER_ABS_TOL = 1e-10


def _fourier_cutoff(weight: Callable, max_cutoff: float = 1e4) -> float:
    """Smallest doubling Y with |weight| on [Y, 2Y] below 1e-14 of its peak."""
    probe = np.linspace(0.0, 1.0, 257)
    peak = float(np.max(np.abs(weight(np.linspace(-1.0, 1.0, 513)))))
    Y = 1.0
    while Y <= max_cutoff:
        ys = Y + Y * probe
        tail = max(np.max(np.abs(weight(ys))), np.max(np.abs(weight(-ys))))
        peak = max(peak, float(np.max(np.abs(weight(np.linspace(-Y, Y, 1025))))))
        if tail <= 1e-14 * max(peak, 1e-300):
            return Y
        Y *= 2.0
    raise FourierTailTooHeavy(f"Fourier integrand has not decayed by |y| = {max_cutoff:g}")


def _fourier_integral(fn: Callable, Y: float) -> float:
    re, err_re = sp_integrate.quad(lambda y: float(np.real(fn(y))), -Y, Y, limit=400, epsabs=1e-13, epsrel=1e-11)
    im, err_im = sp_integrate.quad(lambda y: float(np.imag(fn(y))), -Y, Y, limit=400, epsabs=1e-13, epsrel=1e-11)
    if max(err_re, err_im) > _FOURIER_ABS_TOL:
        raise FourierTailTooHeavy(f"Fourier quadrature error {max(err_re, err_im):.2e} exceeds tolerance")
    if abs(im) > 1e-8 * max(1.0, abs(re)):
        raise FourierTailTooHeavy(f"Fourier integral has imaginary part {im:.2e}")
    return re / math.sqrt(2.0 * math.pi)


def first_order_coefficients(F: FourierFunction, model: LevyModel, t_grid=None, z_grid=None) -> FirstOrderCoefficients:
    """Order-0 and order-1 chaos coefficients of ``f(X_T)``.

    With ``chi(y) = E[exp(i y X_T)]``::

        c0      = (2 pi)^(-1/2) int fhat(y) chi(y) dy            = E f(X_T)
        f1(t)   = (2 pi)^(-1/2) int fhat(y) chi(y) i sigma y dy  = sigma E f'(X_T)
        f2(t,z) = (2 pi)^(-1/2) int fhat(y) chi(y) (e^{izy} - 1) dy

    Both order-one coefficients are constant in ``t`` on [0, T].
    """
    T = model.T
    t_grid = np.linspace(0.0, T, 5) if t_grid is None else np.asarray(t_grid, dtype=float)
    z_grid = np.zeros(0) if z_grid is None else np.asarray(z_grid, dtype=float)
    base = lambda y: F.fhat(y) * np.exp(T * characteristic_exponent(model, y))
    Y = _fourier_cutoff(base)
    c0 = _fourier_integral(base, Y)
    f1 = _fourier_integral(lambda y: base(y) * 1j * model.sigma * y, Y)
    if model.jumps.active:
        f2z = np.array([_fourier_integral(lambda y, z=z: base(y) * np.expm1(1j * z * y), Y) for z in z_grid])
    else:
        f2z = np.zeros(z_grid.size)
    return FirstOrderCoefficients(t_grid, z_grid, c0, np.full(t_grid.size, f1),
                                  np.broadcast_to(f2z, (t_grid.size, z_grid.size)).copy())
