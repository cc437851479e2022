"""Command-line entry point.

Subcommands::

    bernoulli-ledger simulate --config run.ini [--output DIR]
    bernoulli-ledger verify   (--config run.ini | --snapshot FILE ...) [--output DIR]
    bernoulli-ledger sweep    (--config run.ini | --snapshot FILE ...) [--output DIR]
    bernoulli-ledger converge --config run.ini [--output DIR]

Exit status: 0 when every check passes, 1 when a check fails, 2 for usage or
setup errors (bad config, unreadable snapshot, CFL violation, ...).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bernoulli import compute_bundle
from .config import ExperimentConfig
from .dynamics import (
    CFL_LIMIT,
    FlowState,
    build_initial_state,
    cfl_number,
    enstrophy,
    kinetic_energy,
    step_rk4,
)
from .errors import CFLViolation, ConfigError, UnresolvedField
from .ledger import LevelCache, convergence_study, sweep_levels, write_json
from .levelset import write_isosurface
from .snapshot import encode_snapshot, read_snapshot
from .spectral import Grid
from .verification import run_checks, select_levels

log = logging.getLogger("bernoulli_ledger")

EXIT_OK, EXIT_FAIL, EXIT_SETUP = 0, 1, 2


class SetupError(Exception):
    """Anything that stops a command before a verdict can be reached."""


# -- helpers ----------------------------------------------------------------


def _load_config(args) -> ExperimentConfig | None:
    if args.config is None:
        return None
    return ExperimentConfig.from_file(args.config)


def _output_dir(args, config: ExperimentConfig | None) -> Path | None:
    if args.output is not None:
        return Path(args.output)
    if config is not None:
        return Path(config.output_dir)
    return None


def _initial_state(config: ExperimentConfig, n: int | None = None) -> FlowState:
    grid = Grid(config.dim, config.resolution if n is None else n)
    try:
        return build_initial_state(config.initial_condition, grid, config.nu, **config.flow_params)
    except ValueError as exc:
        raise SetupError(f"cannot build initial condition: {exc}") from exc


def _run(config: ExperimentConfig):
    """Integrate the configured flow in memory.

    Returns (snapshot states, trajectory rows).  Nothing touches the disk, so
    a failure part-way leaves no partial output behind.
    """
    state = _initial_state(config)
    cfl = cfl_number(state.v, config.dt)
    if cfl > CFL_LIMIT:
        raise SetupError(f"dt = {config.dt} gives CFL number {cfl:.3f} > {CFL_LIMIT} on the initial data")
    wanted = config.snapshot_steps()
    last = max(wanted, default=0)
    snaps, rows = [], []

    def record(step, s):
        rows.append((step, s.t, kinetic_energy(s), enstrophy(s)))
        snaps.extend(s for k in wanted if k == step)

    record(0, state)
    try:
        for step in range(1, max(config.n_steps, last) + 1):
            state = step_rk4(state, config.dt)
            record(step, state)
    except (CFLViolation, UnresolvedField) as exc:
        raise SetupError(f"integration stopped at t = {state.t:.6g}: {exc}") from exc
    return snaps, rows


def _states(args, config):
    """(state, label, seed, condition) for every snapshot the command should treat."""
    if args.snapshot:
        out = []
        for path in args.snapshot:
            state, header = read_snapshot(path)
            out.append((state, Path(path).stem, header.get("seed"), header.get("condition", "")))
        return out
    if config is None:
        raise SetupError("either --config or --snapshot is required")
    snaps, _ = _run(config)
    return [(s, f"snapshot_{i:04d}", config.seed, config.initial_condition) for i, s in enumerate(snaps)]


def _level_spec(config):
    if config is None:
        defaults = ExperimentConfig()
        return defaults.level_mode, defaults.levels
    return config.level_mode, config.levels


def _config_block(config):
    if config is None:
        return None
    return {"resolved": config.to_dict(), "overridden_tolerances": config.overridden_tolerances}


def _emit(args, report: dict, out_dir: Path | None, name: str) -> None:
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(report, out_dir / name)
    if not args.quiet:
        print(json.dumps(report, indent=2, default=str))


# -- commands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = _load_config(args)
    if config is None:
        raise SetupError("simulate needs --config")
    snaps, rows = _run(config)
    out = _output_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, s in enumerate(snaps):
        path = out / f"snapshot_{i:04d}.bin"
        path.write_bytes(encode_snapshot(s, config.seed, config.initial_condition))
        files.append({"file": path.name, "t": s.t})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "t", "energy", "enstrophy"])
    for step, t, e, z in rows:
        writer.writerow([step, repr(t), repr(e), repr(z)])
    (out / "trajectory.csv").write_text(buf.getvalue())
    report = {"command": "simulate", "config": _config_block(config), "snapshots": files}
    _emit(args, report, out, "simulate.json")
    log.info("wrote %d snapshots to %s", len(files), out)
    return EXIT_OK


def cmd_verify(args) -> int:
    config = _load_config(args)
    if args.snapshot:
        items = _states(args, config)
    elif config is not None:
        items = [(_initial_state(config), "initial", config.seed, config.initial_condition)]
    else:
        raise SetupError("verify needs --config or --snapshot")
    mode, values = _level_spec(config)
    tolerances = config.tolerances if config is not None else None
    results, ok = [], True
    for state, label, seed, condition in items:
        checks = run_checks(state, mode, values, tolerances)
        ok &= all(c.passed for c in checks)
        for c in checks:
            log.info("%s %-16s %s value=%s threshold=%g", label, c.name,
                     "PASS" if c.passed else "FAIL", c.value, c.threshold)
        results.append({
            "label": label,
            "t": state.t,
            "nu": state.nu,
            "resolution": state.grid.n,
            "dim": state.grid.dim,
            "seed": seed,
            "condition": condition,
            "checks": [c.to_dict() for c in checks],
            "passed": all(c.passed for c in checks),
        })
    report = {"command": "verify", "config": _config_block(config), "passed": ok, "states": results}
    _emit(args, report, _output_dir(args, config), "verify.json")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args) -> int:
    config = _load_config(args)
    items = _states(args, config)
    mode, values = _level_spec(config)
    out = _output_dir(args, config)
    if out is None:
        raise SetupError("sweep needs --output when run from snapshots")
    tables = []
    for state, label, seed, condition in items:
        bundle = compute_bundle(state)
        levels = select_levels(bundle, mode, values)
        cache = LevelCache(bundle)
        meta = {"seed": seed, "initial_condition": condition, "label": label}
        tables.append((label, levels, cache, sweep_levels(bundle, state, levels, meta, cache)))
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for label, levels, cache, table in tables:
        table.write_csv(out / f"ledger_{label}.csv")
        if config is not None and config.mesh_dump:
            for j, c in enumerate(levels):
                write_isosurface(cache.level(c)[0], out / f"mesh_{label}_level{j:02d}.txt")
        summary.append({"label": label, "levels": levels, "table": table.to_dict()})
    report = {"command": "sweep", "config": _config_block(config), "tables": summary}
    _emit(args, report, out, "sweep.json")
    return EXIT_OK


def cmd_converge(args) -> int:
    config = _load_config(args)
    if config is None:
        raise SetupError("converge needs --config")
    if len(config.resolutions) < 3:
        raise SetupError(f"converge needs at least 3 resolutions, got {config.resolutions}")

    def initial(grid):
        return build_initial_state(config.initial_condition, grid, config.nu, **config.flow_params)

    try:
        report = convergence_study(initial, config.nu, config.strip_quantiles, config.resolutions, config.dim)
    except (ValueError, UnresolvedField) as exc:
        raise SetupError(str(exc)) from exc
    threshold = config.tolerances["convergence_order"]
    if report.status == "ok":
        passed = report.monotone and report.fitted_order >= threshold
    else:
        passed = True  # exact, or excluded by the guard: no order claim
    body = {
        "command": "converge",
        "config": _config_block(config),
        "order_threshold": threshold,
        "passed": passed,
        "study": report.to_dict(),
    }
    _emit(args, body, _output_dir(args, config), "convergence.json")
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {
    "simulate": (cmd_simulate, "integrate a flow and store velocity snapshots"),
    "verify": (cmd_verify, "run the identity, energy and strip checks on a state"),
    "sweep": (cmd_sweep, "write the strip ledger for a list of levels"),
    "converge": (cmd_converge, "measure the strip residual under grid refinement"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bernoulli-ledger",
        description="Check strip-wise energy balance between levels of the Bernoulli function.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="INI experiment configuration")
        p.add_argument("--output", type=Path, help="output directory (overrides [output] dir)")
        p.add_argument("--quiet", action="store_true", help="suppress the report on stdout")
        if name in ("verify", "sweep"):
            p.add_argument("--snapshot", type=Path, action="append", help="snapshot file; repeatable")
        else:
            p.set_defaults(snapshot=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command][0](args)
    except (SetupError, ConfigError, UnresolvedField) as exc:
        log.error("%s", exc)
        return EXIT_SETUP


if __name__ == "__main__":
    sys.exit(main())
