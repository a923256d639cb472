"""Acceptance criteria at full Monte Carlo scale.

Each test prints one ``[PASS]``/``[FAIL]`` line (collected again in the
pytest terminal summary).  Tolerances are the published ones; the whole file
takes several minutes on one core.  Run ``python tests/test_acceptance.py``
for the lines alone.
"""

from __future__ import annotations

import filecmp
import math
import subprocess
import sys

import numpy as np
import pytest

from levy_malliavin import chaos, clark_ocone, doleans, malliavin, max_repr
from levy_malliavin.model import JumpMeasure, LevyModel, TwoPointLaw
from levy_malliavin.simulate import TimeGrid, simulate_batch

K = 3.0
BROWNIAN = LevyModel(0.0, 1.0, JumpMeasure(0.0), 1.0)
JUMP = LevyModel(0.0, 0.5, JumpMeasure(1.0, TwoPointLaw(-0.5, 0.5, 0.5, 0.5)), 1.0)
# Brownian-dominated exponent with mild jumps keeps E[Z_T^4] moderate.
CHAOS_MODEL = LevyModel(0.0, 1.0, JumpMeasure(2.0, TwoPointLaw(-0.3, 0.5, 0.3, 0.5)), 1.0)
CHAOS_PARAMS = doleans.ExponentParams.special(1.35, 1.0)


@pytest.fixture(scope="module")
def brownian_table():
    """Finest-grid table for the T/1024 reconstruction."""
    return max_repr.build_tail_table(BROWNIAN, 1024, 1_000_000, seed=601)


def test_doleans_second_moment(report_line):
    pure = doleans.verify_z_martingale(BROWNIAN, doleans.ExponentParams.special(1.0, 0.0), 100_000,
                                       [0.2, 0.4, 0.6, 0.8, 1.0], seed=101, steps=256, se_multiplier=K)
    jumps = doleans.verify_z_martingale(JUMP, doleans.ExponentParams.special(0.5, 1.0), 100_000,
                                        [0.2, 0.4, 0.6, 0.8, 1.0], seed=102, steps=256, se_multiplier=K)
    last, jlast = pure.rows[-1], jumps.rows[-1]
    ok = pure.passed and jumps.passed and math.isclose(last.closed_form, math.e, rel_tol=1e-12)
    report_line(1, "Doleans second moment", ok,
                f"E[Z_T^2]={last.mean_z2:.4f}+-{last.se_z2:.4f} vs e; jump model {jlast.mean_z2:.4f}+-{jlast.se_z2:.4f} "
                f"vs {jlast.closed_form:.4f}; E[Z_t] rows {sum(r.passed for r in pure.rows + jumps.rows)}/10")
    assert ok


def test_orthogonality_isometry(report_line):
    rep = chaos.orthogonality_matrix(JUMP, 3, 100_000, 1024, seed=201, se_multiplier=K)
    off = rep.off_diagonal
    diag = rep.diagonal
    worst = max(abs(e.z_score) for e in rep.estimates)
    report_line(2, "orthogonality/isometry", rep.passed,
                f"off-diagonal {sum(e.passed for e in off)}/{len(off)}, diagonal {sum(e.passed for e in diag)}/"
                f"{len(diag)} within {K:g} se (max |z|={worst:.2f})")
    assert rep.passed


def test_chaos_energy_ladder(report_line):
    rep = chaos.chaos_expand_Z(CHAOS_PARAMS, CHAOS_MODEL, 4, 100_000, 1024, seed=301)
    energies = ", ".join(f"n={r.order}: {r.energy_mc:.4f}/{r.energy_analytic:.4f}" for r in rep.order_rows[:3])
    tr = rep.truncation
    ok = all(r.passed for r in rep.order_rows[:3]) and tr.passed
    report_line(3, "chaos energy ladder", ok,
                f"S={rep.S:.4f}; {energies}; truncation {tr.energy_mc:.4f}+-{tr.se:.4f} vs {tr.energy_analytic:.4f}")
    assert ok


def test_clark_ocone_exact(report_line):
    F = malliavin.terminal_value(JUMP.T)
    study = clark_ocone.residual_study(F, JUMP, [64, 128, 256, 512], 10_000, seed=401, rel_tol=1e-10,
                                       require_decrease=False)
    worst = max(r.relative for r in study.rows)
    report_line(4, "Clark-Ocone exact (X_T)", study.passed, f"max relative residual {worst:.2e} < 1e-10")
    assert study.passed


def test_clark_ocone_quadratic(report_line):
    F = malliavin.terminal_square(JUMP.T)
    study = clark_ocone.residual_study(F, JUMP, [64, 128, 256, 512], 10_000, seed=501, rel_tol=0.05)
    rel = ", ".join(f"{r.relative:.4f}" for r in study.rows)
    report_line(5, "Clark-Ocone quadratic (X_T^2)", study.passed and study.decreasing,
                f"relative residuals {rel} (T/64..T/512), slope {study.slope:.2f}")
    assert study.passed and study.decreasing


def test_max_representation(report_line, brownian_table):
    ref = max_repr.build_tail_table(BROWNIAN, 100, 1_000_000, seed=602, z_max=10.0, nz=101, bridge=True)
    rows = max_repr.reflection_check(BROWNIAN, ref, np.linspace(0.1, 1.0, 10), np.linspace(0.1, 2.0, 20), K)
    em, tails = rows[0], rows[1:]
    fine = max_repr.verify_max_representation(BROWNIAN, brownian_table, 10_000, 1024, seed=603)

    jump_table = max_repr.build_tail_table(JUMP, 1024, 200_000, seed=604)
    ladder = [max_repr.verify_max_representation(JUMP, jump_table, 10_000, s, seed=605) for s in (128, 256, 512, 1024)]
    residuals = [r.residual_l2 for r in ladder]
    monotone = all(b < a for a, b in zip(residuals, residuals[1:]))
    bounds = all(r.phi_in_bounds and r.psi_in_bounds for r in ladder + [fine])

    ok = em.passed and all(r.passed for r in tails) and fine.relative < 0.05 and monotone and bounds
    report_line(6, "maximum representation", ok,
                f"E[M_T]={em.estimate:.4f}+-{em.se:.4f} vs {em.reference:.4f}; reflection {sum(r.passed for r in tails)}/"
                f"{len(tails)}; Brownian residual {fine.relative:.4f} at T/1024; jump residuals "
                + "/".join(f"{r:.4f}" for r in residuals) + f" monotone={monotone}; bounds={bounds}")
    assert ok


def test_shiryaev_yor(report_line):
    table = max_repr.build_tail_table(BROWNIAN, 256, 200_000, seed=701)
    paths = simulate_batch(BROWNIAN, TimeGrid.uniform(1.0, 256), 200, 702)
    rows, _ = max_repr.verify_shiryaev_yor(BROWNIAN, table, paths, [0.0, 0.25, 0.5, 0.75], 2000, seed=703,
                                           se_multiplier=K)
    ok = all(r.passed for r in rows)
    detail = "; ".join(f"t={r.t:g}: diff {r.mean_diff:+.4f}+-{r.se:.4f}, {r.fraction_within:.1%} paths" for r in rows)
    report_line(7, "Shiryaev-Yor identity", ok, detail)
    assert ok


def test_fourier_first_order(report_line):
    bump = chaos.gaussian_bump(0.2, 0.8)
    times = np.linspace(0.0, JUMP.T, 5)
    coeffs = chaos.first_order_coefficients(bump, JUMP, times)
    F = malliavin.SmoothKPoint(lambda x: bump.f(x[:, 0]), lambda x: bump.derivative(x), (JUMP.T,))
    paths = simulate_batch(JUMP, TimeGrid.uniform(JUMP.T, 64), 100_000, 801)
    d1 = malliavin.derivative_field(F, paths, JUMP, times, np.zeros(0)).d1
    mean, se = d1.mean(axis=0), d1.std(axis=0, ddof=1) / math.sqrt(len(paths))
    hits = np.abs(mean - coeffs.f1) <= K * se
    report_line(8, "Fourier first-order cross-check", bool(hits.all()),
                f"f1={coeffs.f1[0]:.5f}; MC phi means " + ", ".join(f"{m:.5f}" for m in mean)
                + f" (se {se.max():.5f}); {int(hits.sum())}/5 within {K:g} se")
    assert hits.all()


DETERMINISM_INI = """
[model]
mu = 0.1
sigma = 0.5
T = 1.0
jump.intensity = 1.0
jump.law = two_point
jump.z1 = -0.5
jump.p1 = 0.5
jump.z2 = 0.5
jump.p2 = 0.5

[run]
master_seed = 77
n_inner = 20

[simulate]
moment_paths = 3000

[doleans]
n_paths = 3000

[chaos]
n_paths = 1500
steps = 128
orth_paths = 1500
orth_steps = 128

[clark_ocone]
n_paths = 1000
check_paths = 3
check_times = 2

[max]
table_paths = 4000
ladder = 32,64
n_paths = 500
sy_paths = 5
sy_inner = 50
sy_steps = 64
sy_table_paths = 4000
"""


def test_determinism(report_line, tmp_path):
    cfg = tmp_path / "det.ini"
    cfg.write_text(DETERMINISM_INI)
    outs = []
    for tag, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        out = tmp_path / tag
        subprocess.run([sys.executable, "-m", "levy_malliavin.cli", "all", "--config", str(cfg), "--out", str(out),
                        "--threads", threads], capture_output=True, check=False)
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    same = bool(files) and all(
        (o / f).exists() and filecmp.cmp(outs[0] / f, o / f, shallow=False) for o in outs[1:] for f in files)
    suites = {f.parts[0] for f in files}
    report_line(9, "determinism", same,
                f"{len(files)} CSVs from {len(suites)} suites byte-identical across reruns and --threads 1/3")
    assert same


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
