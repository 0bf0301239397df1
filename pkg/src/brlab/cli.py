"""
Command-line scenario runner.

    brlab solve    --config run.json [--out DIR]   solve the eps family (continuation)
    brlab sweep    --config run.json --workers K   independent members in parallel
    brlab analyze  --config run.json               analysis suites -> report.json + CSV
    brlab report   --config run.json               analyze + gnuplot .dat + PNG figures
    brlab validate [--config run.json]             exact-layer oracle battery

The output directory is ``--out``, else the config's ``output``, else the
``BRLAB_OUT`` environment variable.  Exit codes: 0 ok, 1 oracle/check
failure, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .pipeline import (
    CONVERGENCE_HEADER,
    ENERGY_HEADER,
    Analysis,
    analyze,
    convergence_rows,
    energy_rows,
    load_solutions,
    save_solutions,
    solve_scenario,
    validate_oracle,
)
from .report import new_report, write_csv, write_dat, write_json
from .solver import SolverError

logger = logging.getLogger("brlab")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

SOLUTIONS_FILE = "solutions.npz"

DEFAULT_VALIDATE_CONFIG = {
    "grid": {"n": 1, "h": "1/256"},
    "potential": "peierls_nabarro",
    "scenario": "layer-trace",
    "epsilons": [0.25],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brlab", description="Boundary-reaction scenario runner.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON scenario configuration")
    common.add_argument("--out", type=Path, help="output directory (default: config 'output', then $BRLAB_OUT)")
    common.add_argument("--workers", type=int, help="worker processes for independent eps members")
    common.add_argument("--seed", type=int, help="seed for calibration translates (unsigned 64-bit)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the eps family with continuation")
    sub.add_parser("sweep", parents=[common], help="solve eps members independently (parallel)")
    sub.add_parser("analyze", parents=[common], help="run the analysis suites and write the report")
    sub.add_parser("report", parents=[common], help="analyze, then render plot data and figures")
    sub.add_parser("validate", parents=[common], help="exact-layer oracle battery")
    return parser


def _load(args, required: bool = True) -> ScenarioConfig:
    if args.config is None:
        if required:
            raise ConfigError("--config", "a configuration file is required for this command")
        cfg = parse_config(DEFAULT_VALIDATE_CONFIG, source="<default>")
    else:
        cfg = load_config(args.config)
    return cfg.with_overrides(out=args.out, seed=args.seed, workers=args.workers)


def _out_dir(cfg: ScenarioConfig, required: bool = True) -> Optional[Path]:
    out = cfg.output or os.environ.get("BRLAB_OUT")
    if not out:
        if required:
            raise ConfigError("output", "no output directory: pass --out, set 'output' in the config, or set BRLAB_OUT")
        return None
    return Path(out)


def _print_checks(A: Analysis) -> None:
    for name, ok, detail in A.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


def _write_tables(out: Path, A: Analysis) -> None:
    for name, (header, rows) in A.tables.items():
        write_csv(out / f"{name}.csv", header, rows)


def _write_solve_outputs(out: Path, cfg: ScenarioConfig, sols, kind: str) -> int:
    save_solutions(out / SOLUTIONS_FILE, cfg, sols)
    write_csv(out / "convergence.csv", CONVERGENCE_HEADER, convergence_rows(sols))
    write_csv(out / "energies.csv", ENERGY_HEADER, energy_rows(sols))
    report = new_report(kind, cfg.to_dict())
    report["convergence"] = [dict(zip(CONVERGENCE_HEADER, r)) for r in convergence_rows(sols)]
    report["energies"] = [dict(zip(ENERGY_HEADER, r)) for r in energy_rows(sols)]
    failed = [s.epsilon for s in sols if not s.converged]
    if failed:
        report["status"] = "solver_failure"
        report["unconverged_epsilons"] = failed
    write_json(out / "report.json", report)
    for row in report["convergence"]:
        print(f"eps={row['epsilon']:g} converged={row['converged']} residual={row['final_residual']:.3e} steps={row['steps']}")
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_solve(args, continuation: bool) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    sols = solve_scenario(cfg, continuation=continuation)
    return _write_solve_outputs(out, cfg, sols, "solve" if continuation else "sweep")


def _plot_data(out: Path, cfg: ScenarioConfig, sols, A: Analysis) -> None:
    """gnuplot-ready whitespace tables; one data block per eps where it applies."""
    data = out / "data"
    grid = sols[0].grid
    if grid.n == 1:
        x = grid.axes[0]
        write_dat(data / "face_traces.dat", ["x1", *[f"u_eps={s.epsilon:g}" for s in sols]], [[xi, *[s.u[i, 0] for s in sols]] for i, xi in enumerate(x)])
    header, rows = A.tables["monotonicity"]
    blocks = []
    for s in sols:
        blocks.extend([r[header.index("r")], r[header.index("I")], r[header.index("term_sphere")], r[header.index("term_disc")]] for r in rows if r[0] == s.epsilon and r[1] == 0)
        blocks.append(None)
    write_dat(data / "monotonicity.dat", ["r", "I", "term_sphere", "term_disc"], blocks, blocks=True)
    header, rows = A.tables["varifold"]
    cols = ["raw_residual", "raw_residual_off_sigma", "combined_residual"]
    write_dat(data / "stationarity.dat", ["epsilon", *cols], [[r[0], *[r[header.index(c)] for c in cols]] for r in rows])
    header, rows = A.tables["energies"]
    write_dat(data / "energies.dat", header, rows)
    if "decay" in A.tables:
        header, rows = A.tables["decay"]
        write_dat(data / "decay.dat", header, rows)


def _figures(out: Path, sols, A: Analysis) -> None:
    from . import plotting

    figs = out / "figures"
    grid = sols[0].grid
    eps = [s.epsilon for s in sols]
    if grid.n == 1:
        plotting.plot_face_traces(figs / "face_traces.png", grid.axes[0], [s.u[:, 0] for s in sols], eps)
    plotting.plot_monotonicity(figs / "monotonicity.png", [[r[0], r[1], r[-5], r[-4]] for r in A.tables["monotonicity"][1]])
    _, erows = A.tables["energies"]
    plotting.plot_energy(figs / "energies.png", eps, [r[1] for r in erows], [r[2] for r in erows])
    header, vrows = A.tables["varifold"]
    raw = [r[header.index("raw_residual_off_sigma")] for r in vrows]
    comb = [r[header.index("combined_residual")] for r in vrows]
    if all(v is not None and v > 0 for v in raw):
        plotting.plot_stationarity(figs / "stationarity.png", eps, raw, comb)
    if "decay" in A.tables and A.summary.get("decay", {}).get("slope") is not None:
        _, drows = A.tables["decay"]
        plotting.plot_decay(figs / "decay.png", [r[0] for r in drows], [r[1] for r in drows], A.summary["decay"]["slope"])


def cmd_analyze(args, render: bool) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    sols = load_solutions(out / SOLUTIONS_FILE, cfg)
    if sols is None:
        sols = solve_scenario(cfg, continuation=True)
        save_solutions(out / SOLUTIONS_FILE, cfg, sols)
    kind = "report" if render else "analyze"
    if not all(s.converged for s in sols):
        code = _write_solve_outputs(out, cfg, sols, kind)
        print("solver failure: analysis skipped (partial report written)")
        return code
    A = analyze(cfg, sols)
    _write_tables(out, A)
    report = new_report(kind, cfg.to_dict())
    report["summary"] = A.summary
    report["checks"] = [{"name": n, "passed": ok, "detail": d} for n, ok, d in A.checks]
    report["tables"] = {name: f"{name}.csv" for name in A.tables}
    if A.failed:
        report["status"] = "check_failure"
    if render:
        _plot_data(out, cfg, sols, A)
        _figures(out, sols, A)
        report["figures"] = sorted(p.name for p in (out / "figures").glob("*.png"))
    write_json(out / "report.json", report)
    _print_checks(A)
    return EXIT_CHECK_FAILED if A.failed else EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args, required=False)
    try:
        A = validate_oracle(cfg)
    except ValueError as exc:
        raise ConfigError("potential", str(exc)) from None
    out = _out_dir(cfg, required=False)
    if out is not None:
        _write_tables(out, A)
        report = new_report("validate", cfg.to_dict())
        report["summary"] = A.summary
        report["checks"] = [{"name": n, "passed": ok, "detail": d} for n, ok, d in A.checks]
        report["status"] = "check_failure" if A.failed else "ok"
        write_json(out / "report.json", report)
    _print_checks(A)
    return EXIT_CHECK_FAILED if A.failed else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            return cmd_solve(args, continuation=True)
        if args.command == "sweep":
            return cmd_solve(args, continuation=False)
        if args.command == "analyze":
            return cmd_analyze(args, render=False)
        if args.command == "report":
            return cmd_analyze(args, render=True)
        if args.command == "validate":
            return cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    parser.error(f"unknown command {args.command}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
