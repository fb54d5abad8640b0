from __future__ import annotations

import argparse
import logging
import sys

from modules.check_service import format_table, require_all_passed, run_checks
from modules.config import RUN_MODES, SWEEP_PARAMS, load_config, overrides_from_flags
from modules.errors import SimulationError
from modules.log_setup import configure_logging
from modules.pde import PDE_SCHEMES
from modules.records import dumps_record, error_record, ok_record
from modules.run_service import run_compare, run_simulation, run_sweep
from modules.scenarios import SCENARIOS

logger = logging.getLogger(__name__)

# flag destination -> dotted config key
FLAG_KEYS = {
    "scenario": "run.scenario",
    "mode": "run.mode",
    "seed": "run.seed",
    "t_end": "run.t_end",
    "out_dir": "run.out_dir",
    "replicates": "run.replicates",
    "N": "model.N",
    "N_scale": "model.N_scale",
    "delta": "model.delta",
    "s": "model.s",
    "m": "model.m",
    "rho": "model.rho",
    "h": "reflect.h",
    "dt": "pde.dt",
    "nx": "pde.nx",
    "nu": "pde.nu",
    "scheme": "pde.scheme",
    "event_log": "engine.event_log",
    "check_bounds": "engine.check_bounds",
    "param": "sweep.param",
    "values": "sweep.values",
    "workers": "sweep.workers",
    "log_level": "logging.level",
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML run configuration (flags override its values)")
    parser.add_argument("--scenario", choices=SCENARIOS)
    parser.add_argument("--mode", choices=RUN_MODES)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--t-end", dest="t_end", type=float)
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--N", dest="N", type=int, help="initial population size")
    parser.add_argument("--N-scale", dest="N_scale", type=int, help="population scaling K")
    parser.add_argument("--delta", type=float, help="interaction range")
    parser.add_argument("--s", type=float, help="mutation step")
    parser.add_argument("--m", type=float, help="diffusion coefficient")
    parser.add_argument("--rho", type=float, help="growth-rate width")
    parser.add_argument("--h", type=float, help="Euler substep of the reflected diffusion")
    parser.add_argument("--dt", type=float, help="solver time step")
    parser.add_argument("--nx", type=int)
    parser.add_argument("--nu", type=int)
    parser.add_argument("--scheme", choices=PDE_SCHEMES)
    parser.add_argument("--event-log", dest="event_log", action="store_true", default=None)
    parser.add_argument("--check-bounds", dest="check_bounds", action="store_true", default=None)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--log-level", dest="log_level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.py", description="Spatial birth-death-mutation simulator")
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "one simulation or solve"),
        ("check", "invariant and generator diagnostics"),
        ("compare", "binned IBM replicates against the solver"),
    ):
        _add_common(commands.add_parser(name, help=help_text))
    sweep = commands.add_parser("sweep", help="convergence sweep over one parameter")
    _add_common(sweep)
    sweep.add_argument("--param", choices=SWEEP_PARAMS)
    sweep.add_argument("--values", help="comma-separated values, e.g. 0.2,0.1,0.05")
    return parser


def _flags(args: argparse.Namespace) -> dict:
    return {dotted: getattr(args, dest, None) for dest, dotted in FLAG_KEYS.items()}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides_from_flags(_flags(args)))
        configure_logging(cfg.logging, cfg.out_dir)
        if args.command == "run":
            data = run_simulation(cfg).summary
        elif args.command == "sweep":
            data = run_sweep(cfg)
        elif args.command == "compare":
            data = run_compare(cfg)
        else:
            rows = run_checks(cfg)
            print(format_table(rows))
            require_all_passed(rows)
            data = [row.to_record() for row in rows]
    except SimulationError as exc:
        logger.error("%s failed: [%d %s] %s", args.command, exc.code, exc.name, exc.message)
        print(dumps_record(error_record(exc.message, exc.code)), file=sys.stderr)
        return exc.exit_status
    print(dumps_record(ok_record(data)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
