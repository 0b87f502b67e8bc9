"""Run orchestration, artifact export and the ``cnsctrl`` command line."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, config_echo, list_presets, load_preset, parse_config, serialize
from .diagnostics import (
    compare_trajectories,
    entropy_dissipation_report,
    kkt_residuals,
    mass_drift,
    mass_drift_bound,
)
from .explicit import CFLError, ExplicitRunSpec, PositivityError, run_explicit
from .grid import Grid
from .pdhg import LinearSolverError, SolveResult, solve
from .physics import DomainError, hamiltonian_functional
from .scheme import ControlState, ForwardSolveError, forward_warm_start, reduced_warm_start, residuals

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ITERATION_CAP = 3
EXIT_DIVERGED = 4
EXIT_CFL = 5
EXIT_IO = 6
EXIT_RUNTIME = 7

EXIT_CODES = {
    "ok": EXIT_OK,
    "config-error": EXIT_CONFIG,
    "iteration-cap": EXIT_ITERATION_CAP,
    "diverged": EXIT_DIVERGED,
    "cfl-error": EXIT_CFL,
    "io-error": EXIT_IO,
    "runtime-error": EXIT_RUNTIME,
}

FIELD_COLUMNS = ("t", "x", "rho", "m", "a", "phi", "psi")


@dataclass
class RunOutcome:
    exit_code: int
    status: str
    summary: dict
    files: dict = field(default_factory=dict)
    state: ControlState | None = None
    solve_result: SolveResult | None = None


# --- writers ----------------------------------------------------------------------


def write_fields_csv(path, grid: Grid, rho, m, a=None, phi=None, psi=None) -> None:
    """One row per space-time node, level-major, shortest round-trip floats."""
    zeros = np.zeros(grid.shape)
    cols = [np.asarray(v if v is not None else zeros, dtype=float) for v in (rho, m, a, phi, psi)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_COLUMNS)
        for l, t in enumerate(grid.t):
            for i, x in enumerate(grid.x):
                w.writerow([repr(float(t)), repr(float(x))] + [repr(float(c[l, i])) for c in cols])


def read_fields_csv(path) -> dict:
    """Inverse of :func:`write_fields_csv`: ``{column: (levels, n_x) array}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    n_x = len(np.unique(body[:, 1]))
    return {name: body[:, j].reshape(-1, n_x) for j, name in enumerate(header)}


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


def write_summary(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- modes -------------------------------------------------------------------------


def _initial_state(cfg: RunConfig, grid, spec, physics, summary: dict) -> ControlState:
    rho0, m0 = cfg.initial_data(grid)
    if cfg.start == "forward":
        return forward_warm_start(grid, rho0, m0, spec, physics)
    if cfg.start == "reduced":
        state, info = reduced_warm_start(grid, rho0, m0, spec, physics, max_iters=cfg.start_max_iters)
        summary["reduced_start"] = dataclasses.asdict(info)
        return state
    return ControlState.initial(grid, rho0, m0, physics)


def _control_summary(result: SolveResult, spec, physics) -> dict:
    st = result.state
    g = st.grid
    r1, r2 = residuals(st, spec, physics)
    w = g.cell_weight
    drift = mass_drift(st.rho, g)
    report = entropy_dissipation_report(st.rho, st.m, physics, g)
    return {
        "pdhg_status": result.status,
        "iterations": result.iterations,
        "r1_norm": math.sqrt(w * float(np.sum(r1**2))),
        "r2_norm": math.sqrt(w * float(np.sum(r2**2))),
        "combined_residual": result.residual,
        "kkt": kkt_residuals(st, spec, physics),
        "mass_drift_max": float(np.max(np.abs(drift))),
        "mass_drift_bound": float(mass_drift_bound(st, spec)[-1]),
        "entropy": report.entropy,
        "control_linf": float(np.max(np.abs(st.a))),
        "momentum_linf": float(np.max(np.abs(st.m))),
        "terminal_density_argmax_x": float(g.x[int(np.argmax(st.rho[-1]))]),
    }


def _run_control(cfg: RunConfig, out: Path, summary: dict, files: dict):
    grid = cfg.make_grid()
    physics = cfg.make_physics()
    spec = cfg.make_scheme(grid)
    pdhg = cfg.make_pdhg()
    state = _initial_state(cfg, grid, spec, physics, summary)
    result = solve(state, pdhg, spec, physics)
    st = result.state
    files["fields"] = out / "fields.csv"
    files["iterations"] = out / "iterations.csv"
    write_fields_csv(files["fields"], grid, st.rho, st.m, st.a, st.phi, st.psi)
    result.log.write_csv(files["iterations"], include_time=not cfg.deterministic)
    with np.errstate(over="ignore", invalid="ignore"):  # diverged iterates may be huge
        summary.update(_control_summary(result, spec, physics))
    status = {"converged": "ok", "skipped": "ok"}.get(result.status, result.status)
    return status, result


def _run_explicit(cfg: RunConfig, out: Path | None, summary: dict, files: dict, name="fields.csv"):
    grid = cfg.make_explicit_grid()
    physics = cfg.make_physics()
    spec = ExplicitRunSpec(grid, physics, cfg.make_scheme(grid), cfg.explicit.cfl_safety)
    rho0, m0 = cfg.initial_data(grid)
    traj = run_explicit(spec, rho0, m0)
    report = entropy_dissipation_report(traj.rho, traj.m, physics, grid)
    drift = mass_drift(traj.rho, grid)
    summary.update(
        {
            "explicit_n_t": grid.n_t,
            "explicit_mass_drift_max": float(np.max(np.abs(drift))),
            "explicit_entropy": report.entropy,
            "explicit_fisher": report.fisher,
            "explicit_entropy_non_increasing": report.non_increasing(),
            "explicit_min_rho": float(traj.min_rho.min()),
        }
    )
    if out is not None:
        files[name.removesuffix(".csv")] = out / name
        write_fields_csv(out / name, grid, traj.rho, traj.m)
    return traj


def _run_diagnose(cfg: RunConfig, out: Path, summary: dict, files: dict):
    status, result = _run_control(cfg, out, summary, files)
    st = result.state
    g = st.grid
    physics = cfg.make_physics()
    report = entropy_dissipation_report(st.rho, st.m, physics, g)
    files["entropy"] = out / "entropy.csv"
    report.write_csv(files["entropy"], g)
    summary["fisher"] = report.fisher
    summary["entropy_balance"] = report.balance
    summary["entropy_non_increasing"] = report.non_increasing()
    summary["hamiltonian"] = [
        hamiltonian_functional(st.rho[l], st.m[l], st.phi[l], st.psi[l], g, physics) for l in range(g.n_t + 1)
    ]
    summary["mass_drift_bound_series"] = mass_drift_bound(st, cfg.make_scheme(g))
    return status, result


def _run_compare(cfg: RunConfig, out: Path, summary: dict, files: dict):
    status, result = _run_control(cfg, out, summary, files)
    traj = _run_explicit(cfg, out, summary, files, name="explicit_fields.csv")
    st = result.state
    report = compare_trajectories(st.rho, st.m, traj.rho, traj.m)
    summary["comparison"] = report.to_dict()
    summary.update({k: v for k, v in report.to_dict().items() if not k.startswith("traj_")})
    return status, result


def run(cfg: RunConfig, out: str | Path | None = None) -> RunOutcome:
    """Execute ``cfg.mode`` and write the artifacts into ``out`` (default
    ``cfg.out``). Never raises for solver failures: they are mapped to exit
    codes and recorded in ``summary.json``."""
    out = Path(out if out is not None else cfg.out)
    summary: dict = {"version": __version__, "mode": cfg.mode, "config": config_echo(cfg)}
    files: dict = {}
    result = None
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return RunOutcome(EXIT_IO, "io-error", {**summary, "error": str(exc)})
    try:
        if cfg.mode == "control-solve":
            status, result = _run_control(cfg, out, summary, files)
        elif cfg.mode == "diagnose":
            status, result = _run_diagnose(cfg, out, summary, files)
        elif cfg.mode == "compare":
            status, result = _run_compare(cfg, out, summary, files)
        else:
            _run_explicit(cfg, out, summary, files)
            status = "ok"
    except CFLError as exc:
        status, summary["error"] = "cfl-error", str(exc)
        for path in files.values():
            Path(path).unlink(missing_ok=True)
        files = {}
    except OSError as exc:
        status, summary["error"] = "io-error", str(exc)
    except (PositivityError, ForwardSolveError, DomainError, LinearSolverError) as exc:
        status, summary["error"] = "runtime-error", f"{type(exc).__name__}: {exc}"
    summary["status"] = status
    summary["exit_code"] = EXIT_CODES[status]
    if not cfg.deterministic:
        summary["seconds"] = time.perf_counter() - t0
    files["summary"] = out / "summary.json"
    try:
        write_summary(files["summary"], summary)
    except OSError as exc:
        status = "io-error"
        summary["error"] = str(exc)
    return RunOutcome(
        EXIT_CODES[status], status, summary, files, result.state if result else None, result
    )


# --- command line -----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnsctrl",
        description="Optimal control of the 1D barotropic compressible Navier-Stokes system by a primal-dual solver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def source_args(p):
        p.add_argument("--config", metavar="PATH", help="configuration file (key = value grammar)")
        p.add_argument("--preset", metavar="NAME", help="start from a named preset")

    p_run = sub.add_parser("run", help="execute a configuration and write CSV/JSON artifacts")
    source_args(p_run)
    p_run.add_argument("--out", metavar="DIR", help="output directory (overrides 'out')")
    p_run.add_argument("--max-iters", type=int, metavar="N", help="override pdhg.max_iters")
    p_run.add_argument("--deterministic", action="store_true", help="single-threaded, timing-free outputs")
    p_run.add_argument("--log-stride", type=int, metavar="N", help="iteration log stride")
    p_run.add_argument("--mode", choices=("control-solve", "explicit-solve", "diagnose", "compare"))
    p_run.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("presets", help="list the built-in presets")

    p_val = sub.add_parser("validate", help="parse a configuration and print its complete form")
    source_args(p_val)
    return parser


def resolve_config(args) -> RunConfig:
    if args.config and args.preset:
        text = Path(args.config).read_text()
        cfg = parse_config(f"preset = {args.preset}\n{text}")
    elif args.config:
        cfg = parse_config(Path(args.config))
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        raise ConfigError("give --config PATH and/or --preset NAME")
    overrides = {}
    if getattr(args, "deterministic", False):
        overrides["deterministic"] = True
    if getattr(args, "log_stride", None) is not None:
        if args.log_stride < 1:
            raise ConfigError("--log-stride must be >= 1")
        overrides["log_stride"] = args.log_stride
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "out", None):
        overrides["out"] = args.out
    if getattr(args, "max_iters", None) is not None:
        if args.max_iters < 0:
            raise ConfigError("--max-iters must be >= 0")
        overrides["pdhg"] = dataclasses.replace(cfg.pdhg, max_iters=args.max_iters)
    return dataclasses.replace(cfg, **overrides)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "presets":
        for name, desc in list_presets():
            print(f"{name:10s}  {desc}")
        return EXIT_OK
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.command == "validate":
        sys.stdout.write(serialize(cfg))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    outcome = run(cfg)
    line = f"{outcome.status} (exit {outcome.exit_code})"
    if "error" in outcome.summary:
        line += f": {outcome.summary['error']}"
    print(line, file=sys.stderr if outcome.exit_code else sys.stdout)
    for name, path in outcome.files.items():
        print(f"  {name}: {path}")
    return outcome.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
