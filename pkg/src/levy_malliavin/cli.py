"""Command-line entry point: ``levy-malliavin <command> --config run.ini``.

Each command writes CSV reports into the output directory, prints one
summary line per suite and exits 0 when every check passes, 1 when a check
fails and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import chaos, clark_ocone, doleans, malliavin, max_repr
from .config import RunConfig, load_config
from .errors import ConfigError, LevyMalliavinError
from .model import mark_grid, variance_rate
from .simulate import PathState, SeedSpec, TimeGrid, iter_batches, simulate_batch, write_paths_csv
from .stats import RunningMoments

COMMANDS = ("simulate", "verify-doleans", "verify-chaos", "verify-clark-ocone", "max-representation", "all")


class Suite:
    """Collects CSV outputs and pass flags for one command."""

    def __init__(self, name: str, out: Path):
        self.name = name
        self.out = out
        self.checks: list[tuple[str, bool]] = []
        out.mkdir(parents=True, exist_ok=True)

    def write(self, filename: str, text: str) -> Path:
        path = self.out / filename
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return path

    def check(self, label: str, ok: bool) -> None:
        self.checks.append((label, bool(ok)))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks)

    def summary(self) -> str:
        failed = [label for label, ok in self.checks if not ok]
        status = "PASS" if not failed else "FAIL"
        tail = "" if not failed else " failed: " + ", ".join(failed)
        return f"{self.name}: {status} ({len(self.checks) - len(failed)}/{len(self.checks)} checks){tail}"


def _csv(header: str, rows) -> str:
    return "\n".join([header] + [r.csv() for r in rows]) + "\n"


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, args, suite: Suite) -> None:
    model, seed = cfg.model, cfg.seed
    k = cfg.get_float("tolerances", "se_multiplier")
    steps = cfg.get_int("simulate", "steps")
    grid = TimeGrid.uniform(model.T, steps)
    dump = simulate_batch(model, grid, max(1, cfg.get_int("simulate", "n_paths")), seed, threads=args.threads)
    with open(suite.out / "paths.csv", "w", newline="") as fh:
        write_paths_csv(dump, fh)
    n = args.paths or cfg.get_int("simulate", "moment_paths")
    xs, xs2, jumps = RunningMoments(), RunningMoments(), RunningMoments()
    for batch in iter_batches(model, grid, n, seed, threads=args.threads):
        x = batch.x_terminal
        xs.add(x)
        xs2.add((x - model.mu * model.T) ** 2)
        jumps.add(batch.jump_counts() / model.T)
    rows = [
        max_repr.CheckRow("mean_XT", model.T, 0.0, float(xs.mean), float(xs.se), model.mu * model.T, False),
        max_repr.CheckRow("var_XT", model.T, 0.0, float(xs2.mean), float(xs2.se), model.T * variance_rate(model), False),
        max_repr.CheckRow("jump_rate", model.T, 0.0, float(jumps.mean), float(jumps.se), model.intensity, False),
    ]
    rows = [max_repr.CheckRow(r.label, r.s, r.z, r.estimate, r.se, r.reference,
                              abs(r.estimate - r.reference) <= k * r.se + 1e-12) for r in rows]
    suite.write("moments.csv", _csv(max_repr.CheckRow.CSV_HEADER, rows))
    for r in rows:
        suite.check(r.label, r.passed)


def _exponent_params(cfg: RunConfig, section: str) -> doleans.ExponentParams:
    h, gbar = cfg.get_float(section, "h"), cfg.get_float(section, "gbar")
    if h == 0.0 and gbar == 0.0:
        return doleans.ExponentParams.zero()
    return doleans.ExponentParams.special(h, gbar)


def cmd_verify_doleans(cfg: RunConfig, args, suite: Suite) -> None:
    model = cfg.model
    params = _exponent_params(cfg, "doleans")
    report = doleans.verify_z_martingale(
        model, params, args.paths or cfg.get_int("doleans", "n_paths"), cfg.get_floats("doleans", "checkpoints"),
        seed=cfg.seed, steps=cfg.get_int("doleans", "steps"),
        se_multiplier=cfg.get_float("tolerances", "se_multiplier"), threads=args.threads)
    suite.write("doleans.csv", report.to_csv())
    for row in report.rows:
        suite.check(f"t={row.t:g}", row.passed)


def cmd_verify_chaos(cfg: RunConfig, args, suite: Suite) -> None:
    model = cfg.model
    k = cfg.get_float("tolerances", "se_multiplier")
    orth = chaos.orthogonality_matrix(
        model, cfg.get_int("chaos", "orth_length"), args.paths or cfg.get_int("chaos", "orth_paths"),
        cfg.get_int("chaos", "orth_steps"), cfg.seed, args.threads, k)
    suite.write("orthogonality.csv", orth.to_csv())
    suite.check("orthogonality", orth.passed)
    params = _exponent_params(cfg, "chaos")
    report = chaos.chaos_expand_Z(
        params, model, cfg.get_int("chaos", "max_order"), args.paths or cfg.get_int("chaos", "n_paths"),
        cfg.get_int("chaos", "steps"), cfg.seed + 1, args.threads,
        energy_rtol=cfg.get_float("tolerances", "energy_rtol"), tail_rtol=cfg.get_float("tolerances", "tail_rtol"))
    suite.write("chaos_energy.csv", report.to_csv())
    for row in report.order_rows:
        suite.check(f"order {row.order} energy", row.passed)
    suite.check("truncation", report.truncation.passed)


def _functional(name: str, T: float) -> malliavin.FunctionalSpec:
    if name == "xt":
        return malliavin.terminal_value(T)
    if name == "xt2":
        return malliavin.terminal_square(T)
    if name == "max":
        return malliavin.RunningMax()
    raise ConfigError(f"unknown functional {name!r}; expected xt, xt2 or max", "clark_ocone.functional")


def _state_at(batch, t: float) -> PathState:
    idx = batch.index_at(t)[:, None]
    take = lambda a: np.take_along_axis(a, idx, axis=1)[:, 0]
    return PathState(np.full(len(batch), t), take(batch.x), take(batch.w), take(batch.running_max))


def _nested_rows(cfg: RunConfig, args, F, rep, model, suite: Suite, steps: int | None = None) -> None:
    """Closed-form (or table) integrands against nested Monte Carlo at a few nodes.

    ``steps`` pins the check grid; the running max needs the table's grid so
    both sides carry the same discrete-monitoring bias.
    """
    n_inner = args.inner if args.inner is not None else cfg.get_int("run", "n_inner")
    if n_inner == 0:
        return
    k = cfg.get_float("tolerances", "se_multiplier")
    steps = steps or cfg.get_int("clark_ocone", "check_steps")
    n_times = cfg.get_int("clark_ocone", "check_times")
    grid = TimeGrid.uniform(model.T, steps)
    times = grid.times[:-1][:: max(1, steps // max(1, n_times))][:n_times]
    marks = np.quantile(mark_grid(model), [0.25, 0.75]) if model.jumps.active else np.zeros(0)
    paths = simulate_batch(model, grid, cfg.get_int("clark_ocone", "check_paths"), cfg.seed + 7)
    lines = ["path,t,quantity,z,closed,nested,se,pass"]
    hits = []
    for i, path in enumerate(paths):
        spec = SeedSpec(cfg.seed + 8, i)
        for t in times:
            state = _state_at(path.as_batch(), t)
            closed_phi = float(rep.phi(state)[0])
            est, se = clark_ocone.conditional_derivative(F, model, path, t, None, n_inner, spec)
            entries = [("phi", 0.0, closed_phi, est, se)]
            if marks.size:
                zest, zse = clark_ocone.conditional_derivative(F, model, path, t, marks, n_inner, spec)
                for z, e, s in zip(marks, zest, zse):
                    entries.append(("psi", float(z), float(rep.psi(state.expand(), np.array([[z]]))[0, 0]), e, s))
            for name, z, closed, e, s in entries:
                ok = abs(closed - e) <= k * s + 1e-9
                hits.append(ok)
                lines.append(f"{i},{t:.10g},{name},{z:.10g},{closed:.10g},{e:.10g},{s:.6g},{int(ok)}")
    suite.write("nested_check.csv", "\n".join(lines) + "\n")
    fraction = float(np.mean(hits)) if hits else 1.0
    suite.check(f"nested agreement {fraction:.3f}", fraction >= cfg.get_float("tolerances", "nested_fraction"))


def cmd_verify_clark_ocone(cfg: RunConfig, args, suite: Suite) -> None:
    model = cfg.model
    name = args.functional or cfg.get_str("clark_ocone", "functional")
    F = _functional(name, model.T)
    ladder = _ladder(args.grid_ladder) if args.grid_ladder else cfg.get_ints("clark_ocone", "ladder")
    n_paths = args.paths or cfg.get_int("clark_ocone", "n_paths")
    table = None
    if name == "max":
        table = max_repr.build_tail_table(model, max(ladder), cfg.get_int("clark_ocone", "table_paths"), cfg.seed + 1,
                                          threads=args.threads)
    rep = clark_ocone.closed_form_representation(F, model, table)
    if name == "xt":
        rel_tol, decrease = cfg.get_float("tolerances", "exact_rtol"), False
    else:
        rel_tol, decrease = cfg.get_float("tolerances", "residual_rtol"), True
    study = clark_ocone.residual_study(F, model, ladder, n_paths, cfg.seed, rep, rel_tol=rel_tol,
                                       require_decrease=decrease, threads=args.threads)
    suite.write(f"residual_{name}.csv", study.to_csv())
    for row in study.rows:
        suite.check(f"delta={row.delta:g}", row.passed)
    _nested_rows(cfg, args, F, rep, model, suite, max(ladder) if name == "max" else None)


def cmd_max_representation(cfg: RunConfig, args, suite: Suite) -> None:
    model, seed = cfg.model, cfg.seed
    k = cfg.get_float("tolerances", "se_multiplier")
    ladder = _ladder(args.grid_ladder) if args.grid_ladder else cfg.get_ints("max", "ladder")
    table_paths = args.table_paths or cfg.get_int("max", "table_paths")
    table = max_repr.build_tail_table(model, max(ladder), table_paths, seed + 1, threads=args.threads)
    table.save(suite.out / "tail_table.bin")
    n_paths = args.paths or cfg.get_int("max", "n_paths")
    lines = ["delta,residual_l2,se,relative,phi_min,phi_max,psi_excess,psi_tolerance,pass"]
    previous = np.inf
    reports = [max_repr.verify_max_representation(model, table, n_paths, steps, seed, threads=args.threads)
               for steps in sorted(ladder)]
    for j, r in enumerate(reports):
        ok = r.phi_in_bounds and r.psi_in_bounds and r.residual_l2 < previous
        if j == len(reports) - 1:
            ok = ok and r.relative < cfg.get_float("tolerances", "residual_rtol")
        previous = r.residual_l2
        lines.append(f"{model.T / r.steps:.10g},{r.residual_l2:.10g},{r.se:.6g},{r.relative:.10g},{r.phi_min:.10g},"
                     f"{r.phi_max:.10g},{r.psi_excess:.6g},{r.psi_tolerance:.6g},{int(ok)}")
        suite.check(f"residual delta={model.T / r.steps:g}", ok)
    suite.write("max_residual.csv", "\n".join(lines) + "\n")

    if not model.jumps.active and model.mu == 0.0:
        ref_steps = cfg.get_int("max", "reference_steps")
        stride = max(1, ref_steps // 100)
        ref = max_repr.build_tail_table(model, ref_steps, cfg.get_int("max", "reference_paths"), seed + 2,
                                        z_max=10.0 * model.sigma, nz=101, threads=args.threads,
                                        s_stride=stride, bridge=True)
        rows = max_repr.reflection_check(model, ref, np.linspace(0.1, 1.0, 10) * model.T,
                                         np.linspace(0.1, 2.0, 20) * model.sigma, k)
        suite.write("reflection.csv", _csv(max_repr.CheckRow.CSV_HEADER, rows))
        suite.check("expected max", rows[0].passed)
        suite.check("tail vs reflection", all(r.passed for r in rows[1:]))

    sy_paths = cfg.get_int("max", "sy_paths")
    if sy_paths:
        sy_steps = cfg.get_int("max", "sy_steps")
        sy_table = max_repr.build_tail_table(model, sy_steps, cfg.get_int("max", "sy_table_paths"), seed + 3,
                                             threads=args.threads)
        test = simulate_batch(model, TimeGrid.uniform(model.T, sy_steps), sy_paths, seed + 4)
        times = [0.0, model.T / 4, model.T / 2, 3 * model.T / 4]
        rows, _ = max_repr.verify_shiryaev_yor(model, sy_table, test, times, cfg.get_int("max", "sy_inner"), seed + 5,
                                               k, cfg.get_float("tolerances", "nested_fraction"))
        suite.write("shiryaev_yor.csv", _csv(max_repr.ShiryaevYorRow.CSV_HEADER, rows))
        for r in rows:
            suite.check(f"shiryaev-yor t={r.t:g}", r.passed)


def _ladder(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--grid-ladder must be a comma list of step counts, got {text!r}", "--grid-ladder") from None
    if not values or any(v < 1 for v in values):
        raise ConfigError("--grid-ladder needs positive step counts", "--grid-ladder")
    return values


HANDLERS: dict[str, Callable] = {
    "simulate": cmd_simulate,
    "verify-doleans": cmd_verify_doleans,
    "verify-chaos": cmd_verify_chaos,
    "verify-clark-ocone": cmd_verify_clark_ocone,
    "max-representation": cmd_max_representation,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levy-malliavin", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="INI run configuration")
    parser.add_argument("--out", help="output directory (overrides run.out)")
    parser.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    parser.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    parser.add_argument("--paths", type=int, help="outer path count for the command")
    parser.add_argument("--inner", type=int, help="inner path count for nested Monte Carlo (0 disables)")
    parser.add_argument("--functional", choices=("xt", "xt2", "max"), help="verify-clark-ocone functional")
    parser.add_argument("--grid-ladder", help="comma list of step counts, e.g. 64,128,256,512")
    parser.add_argument("--table-paths", type=int, help="paths for the max-representation tail table")
    return parser


def run(command: str, config_path, argv_args=None) -> int:
    """Run ``command`` with the config at ``config_path``; returns the exit code."""
    args = argv_args or build_parser().parse_args([command, "--config", str(config_path)])
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out:
        overrides["out"] = args.out
    try:
        cfg = load_config(config_path, overrides)
        root = cfg.out_dir
        names = list(HANDLERS) if command == "all" else [command]
        suites = []
        for name in names:
            suite = Suite(name, root / name if command == "all" else root)
            HANDLERS[name](cfg, args, suite)
            print(suite.summary(), flush=True)
            suites.append(suite)
    except ConfigError as exc:
        key = f" [key: {exc.key}]" if exc.key else ""
        print(f"config error{key}: {exc}", file=sys.stderr)
        return 2
    except LevyMalliavinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ok = all(s.passed for s in suites)
    if command == "all":
        print(f"all: {'PASS' if ok else 'FAIL'} ({sum(s.passed for s in suites)}/{len(suites)} suites)")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args)


if __name__ == "__main__":
    sys.exit(main())
