"""Path simulation on a refinable time grid.

Jumps are drawn exactly (Poisson count, uniform times, i.i.d. sizes) and then
merged into the time grid, so every jump time is a node of the path's *union
grid*.  The Brownian motion is sampled directly at the union grid by adding
independent Gaussian increments; no bridge interpolation is involved.

Each path has its own random stream derived from ``(master_seed,
path_index)`` via :class:`numpy.random.SeedSequence` spawn keys, which makes
batch output independent of chunking and of the number of worker threads.
Within a stream the jump record is drawn before the Brownian increments, so
refining the grid leaves the jumps of a given path unchanged.

Batches are stored as rectangular arrays padded at the right end with copies
of the terminal state (zero time step, zero increments, no jumps), which lets
every downstream computation run along ``axis=1``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .errors import TNotOnGrid
from .model import LevyModel

GRID_TOL = 1e-12
DEFAULT_CHUNK = 4096
_CONTINUATION_TAG = 0x5EED


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("LEVY_MALLIAVIN_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two points")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T: float, steps: int) -> "TimeGrid":
        t = np.linspace(0.0, T, int(steps) + 1)
        t[-1] = T
        return cls(t)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> float:
        """Mean step (the exact step for uniform grids)."""
        return self.T / self.steps

    def index_of(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t - GRID_TOL))
        if i >= self.times.size or abs(self.times[i] - t) > GRID_TOL * max(1.0, abs(t)):
            raise TNotOnGrid(f"t={t!r} is not a point of the time grid")
        return i

    def refine(self, factor: int = 2) -> "TimeGrid":
        fine = [np.linspace(a, b, factor + 1)[:-1] for a, b in zip(self.times[:-1], self.times[1:])]
        return TimeGrid(np.concatenate(fine + [self.times[-1:]]))

    def after(self, t: float) -> "np.ndarray":
        """Grid points from ``t`` (a grid point) to ``T`` inclusive."""
        return self.times[self.index_of(t):]

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


@dataclass(frozen=True)
class SeedSpec:
    """Counter-style seed: the stream of path ``path_index`` under ``master_seed``."""

    master_seed: int
    path_index: int = 0

    def generator(self, *extra: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.path_index), *map(int, extra)))
        return np.random.Generator(np.random.PCG64(ss))

    def continuation(self, t_index: int) -> np.random.Generator:
        """Stream for continuations of this path from grid node ``t_index``."""
        return self.generator(int(t_index), _CONTINUATION_TAG)


@dataclass(frozen=True)
class PathState:
    """Predictable path information at a set of evaluation times.

    ``x``, ``w`` and ``running_max`` are left values: they never include a
    jump occurring exactly at ``t``.
    """

    t: np.ndarray
    x: np.ndarray
    w: np.ndarray
    running_max: np.ndarray

    def expand(self) -> "PathState":
        """Add a trailing axis so the state broadcasts against a mark array."""
        return PathState(self.t[..., None], self.x[..., None], self.w[..., None], self.running_max[..., None])

    def take(self, sl) -> "PathState":
        return PathState(self.t[sl], self.x[sl], self.w[sl], self.running_max[sl])


@dataclass(frozen=True)
class SamplePath:
    """One realisation on its union grid (time grid plus jump times)."""

    grid: TimeGrid
    times: np.ndarray
    w: np.ndarray
    x: np.ndarray
    jump: np.ndarray
    is_jump: np.ndarray

    @property
    def jumps(self) -> list[tuple[float, float]]:
        return list(zip(self.times[self.is_jump].tolist(), self.jump[self.is_jump].tolist()))

    @property
    def x_left(self) -> np.ndarray:
        return self.x - self.jump

    @property
    def x_values(self) -> np.ndarray:
        return self.x

    @property
    def brownian(self) -> np.ndarray:
        """W at the points of the time grid."""
        return self.w[~self.is_jump]

    @property
    def T(self) -> float:
        return self.grid.T

    def as_batch(self) -> "PathBatch":
        return PathBatch(self.grid, self.times[None], self.w[None], self.x[None], self.jump[None],
                         self.is_jump[None], np.array([self.times.size]))


@dataclass(frozen=True)
class PathBatch:
    """A batch of paths on padded union grids, arrays of shape ``(n, L)``."""

    grid: TimeGrid
    times: np.ndarray
    w: np.ndarray
    x: np.ndarray
    jump: np.ndarray
    is_jump: np.ndarray
    lengths: np.ndarray

    def __len__(self):
        return self.times.shape[0]

    def __iter__(self) -> Iterator[SamplePath]:
        return (self.path(i) for i in range(len(self)))

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return self.path(int(key))
        idx = np.arange(len(self))[key]
        return PathBatch(self.grid, self.times[idx], self.w[idx], self.x[idx], self.jump[idx],
                         self.is_jump[idx], self.lengths[idx])

    def path(self, i: int) -> SamplePath:
        n = int(self.lengths[i])
        return SamplePath(self.grid, self.times[i, :n].copy(), self.w[i, :n].copy(), self.x[i, :n].copy(),
                          self.jump[i, :n].copy(), self.is_jump[i, :n].copy())

    @property
    def T(self) -> float:
        return self.grid.T

    @property
    def n_paths(self) -> int:
        return len(self)

    @cached_property
    def x_left(self) -> np.ndarray:
        return self.x - self.jump

    @cached_property
    def dt(self) -> np.ndarray:
        return np.diff(self.times, axis=1)

    @cached_property
    def dw(self) -> np.ndarray:
        return np.diff(self.w, axis=1)

    @cached_property
    def running_max(self) -> np.ndarray:
        """M at each node, including left limits at jump times."""
        return np.maximum.accumulate(np.maximum(self.x, self.x_left), axis=1)

    @cached_property
    def cell_state(self) -> PathState:
        """State at the left end ``t_c`` of every cell ``(t_c, t_{c+1}]``."""
        return PathState(self.times[:, :-1], self.x[:, :-1], self.w[:, :-1], self.running_max[:, :-1])

    @cached_property
    def jump_state(self) -> PathState:
        """State just before the node closing each cell, i.e. at a potential jump ``tau-``."""
        xl = self.x_left[:, 1:]
        return PathState(self.times[:, 1:], xl, self.w[:, 1:], np.maximum(self.running_max[:, :-1], xl))

    @property
    def cell_jump(self) -> np.ndarray:
        return self.jump[:, 1:]

    @property
    def cell_is_jump(self) -> np.ndarray:
        return self.is_jump[:, 1:]

    def index_at(self, t: float) -> np.ndarray:
        """Union index of the last node with time <= t, per path."""
        return np.sum(self.times <= t + GRID_TOL, axis=1) - 1

    def value_at(self, t: float, which: str = "x") -> np.ndarray:
        arr = getattr(self, which)
        return np.take_along_axis(arr, self.index_at(t)[:, None], axis=1)[:, 0]

    @property
    def x_terminal(self) -> np.ndarray:
        return self.x[:, -1]

    @property
    def w_terminal(self) -> np.ndarray:
        return self.w[:, -1]

    def jump_counts(self) -> np.ndarray:
        return self.is_jump.sum(axis=1)

    @classmethod
    def concat(cls, batches: Sequence["PathBatch"]) -> "PathBatch":
        batches = list(batches)
        if len(batches) == 1:
            return batches[0]
        L = max(b.times.shape[1] for b in batches)
        parts = [b._padded(L) for b in batches]
        return cls(batches[0].grid, *(np.concatenate([p[k] for p in parts]) for k in range(5)),
                   np.concatenate([b.lengths for b in batches]))

    @classmethod
    def from_paths(cls, paths: Sequence[SamplePath]) -> "PathBatch":
        return cls.concat([p.as_batch() for p in paths])

    def _padded(self, L: int):
        extra = L - self.times.shape[1]
        if extra == 0:
            return self.times, self.w, self.x, self.jump, self.is_jump
        edge = lambda a: np.pad(a, ((0, 0), (0, extra)), mode="edge")
        zero = lambda a: np.pad(a, ((0, 0), (0, extra)))
        return edge(self.times), edge(self.w), edge(self.x), zero(self.jump), zero(self.is_jump)


def as_batch(paths) -> PathBatch:
    if isinstance(paths, PathBatch):
        return paths
    if isinstance(paths, SamplePath):
        return paths.as_batch()
    return PathBatch.from_paths(list(paths))


# --------------------------------------------------------------------------
# drawing and assembly
# --------------------------------------------------------------------------


def _draw(model: LevyModel, grid_times: np.ndarray, rng: np.random.Generator):
    """Random inputs of one path on ``grid_times``: jump times, sizes, standard normals."""
    t0, t1 = grid_times[0], grid_times[-1]
    if model.jumps.active:
        k = int(rng.poisson(model.jumps.intensity * (t1 - t0)))
        tau = np.sort(rng.uniform(t0, t1, k))
        tau = np.where(tau <= t0, np.nextafter(t0, np.inf), tau)
        sizes = model.jumps.law.sample(rng, k).astype(float)
    else:
        tau = sizes = np.empty(0)
    z = rng.standard_normal(grid_times.size - 1 + tau.size)
    return tau, sizes, z


def _assemble(model: LevyModel, grid: TimeGrid, grid_times: np.ndarray, taus, sizes, normals,
              w0=None, x0=None) -> PathBatch:
    """Merge per-path jump records into ``grid_times`` and integrate increments."""
    n = len(taus)
    m1 = grid_times.size
    counts = np.fromiter((t.size for t in taus), dtype=np.int64, count=n)
    kmax = int(counts.max()) if n else 0
    L = m1 + kmax
    t0, t1 = grid_times[0], grid_times[-1]

    times = np.full((n, L), t1)
    jump = np.zeros((n, L))
    is_jump = np.zeros((n, L), dtype=bool)
    rows_g = np.repeat(np.arange(n), m1).reshape(n, m1)
    if kmax:
        tau_flat = np.concatenate(taus)
        size_flat = np.concatenate(sizes)
        jrow = np.repeat(np.arange(n), counts)
        rank = np.arange(tau_flat.size) - np.repeat(np.cumsum(counts) - counts, counts)
        # jump sits strictly after grid point b-1 and at or before grid point b
        b = np.searchsorted(grid_times, tau_flat, side="left")
        jpos = b + rank
        hist = np.zeros((n, m1 + 1), dtype=np.int64)
        np.add.at(hist, (jrow, b), 1)
        before = np.cumsum(hist, axis=1)[:, :m1]
        gpos = np.arange(m1)[None, :] + before
        times[rows_g, gpos] = grid_times[None, :]
        times[jrow, jpos] = tau_flat
        jump[jrow, jpos] = size_flat
        is_jump[jrow, jpos] = True
    else:
        times[:, :m1] = grid_times[None, :]

    dt = np.diff(times, axis=1)
    z = np.zeros((n, L - 1))
    mask = np.arange(L - 1)[None, :] < (m1 - 1 + counts)[:, None]
    if n:
        z[mask] = np.concatenate(normals)
    w = np.zeros((n, L))
    np.cumsum(z * np.sqrt(dt), axis=1, out=w[:, 1:])
    comp = model.jumps.first_moment()
    x = (model.mu - comp) * (times - t0) + model.sigma * w + np.cumsum(jump, axis=1)
    if w0 is not None:
        w = w + w0
    if x0 is not None:
        x = x + x0
    return PathBatch(grid, times, w, x, jump, is_jump, m1 + counts)


def _simulate_range(model: LevyModel, grid: TimeGrid, start: int, stop: int, master_seed: int) -> PathBatch:
    draws = [_draw(model, grid.times, SeedSpec(master_seed, i).generator()) for i in range(start, stop)]
    taus, sizes, normals = zip(*draws) if draws else ((), (), ())
    return _assemble(model, grid, grid.times, taus, sizes, normals)


def simulate_path(model: LevyModel, grid: TimeGrid, seed: SeedSpec) -> SamplePath:
    """Simulate one path from the stream ``seed``."""
    tau, sizes, z = _draw(model, grid.times, seed.generator())
    return _assemble(model, grid, grid.times, [tau], [sizes], [z]).path(0)


def iter_batches(model: LevyModel, grid: TimeGrid, n_paths: int, master_seed: int,
                 chunk: int = DEFAULT_CHUNK, threads: int | None = None, start: int = 0) -> Iterator[PathBatch]:
    """Yield consecutive chunks of paths ``start .. start + n_paths - 1`` in index order."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    threads = default_threads() if threads is None else max(1, int(threads))
    bounds = [(a, min(a + chunk, start + n_paths)) for a in range(start, start + n_paths, chunk)]
    if threads == 1 or len(bounds) == 1:
        for a, b in bounds:
            yield _simulate_range(model, grid, a, b, master_seed)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # bounded look-ahead keeps memory proportional to the thread count
        pending = []
        it = iter(bounds)
        for a, b in it:
            pending.append(pool.submit(_simulate_range, model, grid, a, b, master_seed))
            if len(pending) >= threads:
                break
        for a, b in it:
            yield pending.pop(0).result()
            pending.append(pool.submit(_simulate_range, model, grid, a, b, master_seed))
        for fut in pending:
            yield fut.result()


def simulate_batch(model: LevyModel, grid: TimeGrid, n_paths: int, master_seed: int,
                   threads: int | None = None, chunk: int = DEFAULT_CHUNK) -> PathBatch:
    """Simulate paths ``0 .. n_paths - 1``; identical output for any ``threads``."""
    return PathBatch.concat(list(iter_batches(model, grid, n_paths, master_seed, chunk, threads)))


def _continuations(model: LevyModel, path: SamplePath, t: float, n: int, rng: np.random.Generator) -> PathBatch:
    grid = path.grid
    k = grid.index_of(t)
    tail_grid = grid.times[k:]
    node = int(np.sum(path.times <= t + GRID_TOL)) - 1
    if tail_grid.size == 1:
        return PathBatch.from_paths([path] * n)
    draws = [_draw(model, tail_grid, rng) for _ in range(n)]
    taus, sizes, normals = zip(*draws)
    cont = _assemble(model, grid, tail_grid, taus, sizes, normals, w0=path.w[node], x0=path.x[node])
    head = slice(0, node + 1)

    def glue(prefix, tail):
        return np.concatenate([np.broadcast_to(prefix[head], (n, node + 1)), tail[:, 1:]], axis=1)

    return PathBatch(grid, glue(path.times, cont.times), glue(path.w, cont.w), glue(path.x, cont.x),
                     glue(path.jump, cont.jump), glue(path.is_jump, cont.is_jump), cont.lengths + node)


def resimulate_from(model: LevyModel, path: SamplePath, t: float, seed: SeedSpec) -> SamplePath:
    """Keep ``path`` on [0, t] and draw fresh independent increments on (t, T]."""
    return _continuations(model, path, t, 1, seed.continuation(path.grid.index_of(t))).path(0)


def resimulate_batch(model: LevyModel, path: SamplePath, t: float, n: int, seed: SeedSpec) -> PathBatch:
    """``n`` continuations of ``path`` from ``t``, all drawn from the stream keyed by (seed, t-index)."""
    if n < 1:
        raise ValueError("need at least one continuation")
    return _continuations(model, path, t, n, seed.continuation(path.grid.index_of(t)))


def write_paths_csv(batch: PathBatch, fh, first_index: int = 0) -> None:
    """CSV dump with columns path_index, t, W_t, X_t, is_jump, jump_size."""
    fh.write("path_index,t,W_t,X_t,is_jump,jump_size\n")
    for i, p in enumerate(batch):
        for t, w, x, j, s in zip(p.times, p.w, p.x, p.is_jump, p.jump):
            fh.write(f"{first_index + i},{t:.17g},{w:.17g},{x:.17g},{int(j)},{s:.17g}\n")
