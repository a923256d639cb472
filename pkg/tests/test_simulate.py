import io

import numpy as np
import pytest

from levy_malliavin.errors import TNotOnGrid
from levy_malliavin.model import JumpMeasure, LevyModel, TwoPointLaw, variance_rate
from levy_malliavin.simulate import (
    SeedSpec,
    TimeGrid,
    iter_batches,
    resimulate_batch,
    resimulate_from,
    simulate_batch,
    simulate_path,
    write_paths_csv,
)

BM = LevyModel(0.0, 1.0, JumpMeasure(0.0), 1.0)
DRIFT = LevyModel(0.3, 1.0, JumpMeasure(0.0), 1.0)
JUMP = LevyModel(0.1, 0.5, JumpMeasure(2.0, TwoPointLaw(1.0, 0.5, -1.0, 0.5)), 1.0)
GRID = TimeGrid.uniform(1.0, 32)


def test_no_jumps_without_intensity():
    assert simulate_path(BM, GRID, SeedSpec(1)).jumps == []


def test_same_seed_same_path():
    a = simulate_path(JUMP, GRID, SeedSpec(9, 4))
    b = simulate_path(JUMP, GRID, SeedSpec(9, 4))
    for field in ("times", "w", "x", "jump", "is_jump"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_single_path_batch_matches_simulate_path():
    batch = simulate_batch(JUMP, GRID, 1, 17)
    path = simulate_path(JUMP, GRID, SeedSpec(17, 0))
    assert np.array_equal(batch.path(0).x, path.x)
    assert np.array_equal(batch.path(0).times, path.times)


def test_batch_independent_of_chunking_and_threads():
    a = simulate_batch(JUMP, GRID, 300, 5, threads=1, chunk=64)
    b = simulate_batch(JUMP, GRID, 300, 5, threads=3, chunk=100)
    assert np.array_equal(a.x_terminal, b.x_terminal)
    c = next(iter_batches(JUMP, GRID, 50, 5, start=250))
    assert np.array_equal(c.x_terminal, a.x_terminal[250:])


def test_union_grid_contains_time_grid_and_jumps():
    path = simulate_path(JUMP, GRID, SeedSpec(2, 3))
    assert np.all(np.diff(path.times) > 0)
    assert np.allclose(path.times[~path.is_jump], GRID.times)
    assert np.array_equal(path.brownian.size, GRID.times.size)
    assert np.all(path.jump[~path.is_jump] == 0)


def test_gaussian_moments():
    x = simulate_batch(DRIFT, TimeGrid.uniform(1.0, 4), 100_000, 21).x_terminal
    se_mean = x.std(ddof=1) / np.sqrt(x.size)
    assert abs(x.mean() - 0.3) < 3 * se_mean
    dev = (x - 0.3) ** 2
    assert abs(dev.mean() - 1.0) < 3 * dev.std(ddof=1) / np.sqrt(x.size)


def test_jump_model_moments():
    x = simulate_batch(JUMP, TimeGrid.uniform(1.0, 4), 100_000, 22).x_terminal
    assert abs(x.mean() - 0.1) < 3 * x.std(ddof=1) / np.sqrt(x.size)
    dev = (x - 0.1) ** 2
    assert abs(dev.mean() - variance_rate(JUMP)) < 3 * dev.std(ddof=1) / np.sqrt(x.size)


def test_resimulate_edges():
    path = simulate_path(JUMP, GRID, SeedSpec(3))
    same = resimulate_from(JUMP, path, 1.0, SeedSpec(4))
    assert np.array_equal(same.x, path.x)
    fresh = resimulate_from(JUMP, path, 0.0, SeedSpec(4))
    assert fresh.x[0] == 0.0 and not np.array_equal(fresh.x, path.x)


def test_resimulate_keeps_prefix():
    path = simulate_path(JUMP, GRID, SeedSpec(3))
    new = resimulate_from(JUMP, path, 0.5, SeedSpec(8))
    keep = path.times <= 0.5
    assert np.array_equal(new.x[: keep.sum()], path.x[keep])


def test_resimulate_off_grid_rejected():
    path = simulate_path(JUMP, GRID, SeedSpec(3))
    with pytest.raises(TNotOnGrid):
        resimulate_from(JUMP, path, 0.3, SeedSpec(8))


def test_conditional_mean_by_resimulation():
    path = simulate_path(JUMP, GRID, SeedSpec(6))
    t = 0.5
    inner = resimulate_batch(JUMP, path, t, 20_000, SeedSpec(7))
    xt = path.x[path.times <= t][-1]
    xT = inner.x_terminal
    assert abs(xT.mean() - (xt + 0.1 * (1 - t))) < 3 * xT.std(ddof=1) / np.sqrt(xT.size)


def test_paths_csv_roundtrip_header():
    buf = io.StringIO()
    write_paths_csv(simulate_batch(JUMP, GRID, 2, 1), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("path")
    assert len(lines) > 2 * GRID.times.size
