"""
Command-line entry point

    bessel-lab run <experiment> [--mu 0.5] [--paths N] [--steps N] [--seed S] [--zero-threshold bridge|sigma|LEVEL] ...
    bessel-lab list
    bessel-lab dump-paths [--mu 0.5] [--paths N] [--construction direct|time_change] ...

Exit status: 0 acceptance passed, 1 failed, 2 usage error, 3 numeric failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pydantic

from bessel_lab.config.settings import settings
from bessel_lab.core.pathsim import dump_paths, simulate_direct, simulate_time_change
from bessel_lab.models.schemas import BesselParams, Construction, ExperimentConfig, SimConfig
from bessel_lab.services.experiment_service import experiment_service
from bessel_lab.services.simulation_service import SimulationService
from bessel_lab.utils.validators import NumericError, UsageError

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

# Command-line / config-file keys -> ExperimentConfig fields
CONFIG_KEYS = {
    "mu": "mu",
    "paths": "n_paths",
    "steps": "n_steps",
    "horizon": "horizon",
    "seed": "seed",
    "epsilon": "epsilon",
    "eps": "epsilon",
    "zero_threshold": "zero_threshold_rule",
    "zero_threshold_rule": "zero_threshold_rule",
    "workers": "workers",
    "batch_size": "batch_size",
    "out": "out_dir",
    "as_printed": "as_printed",
    "dump_paths": "dump_paths",
}


def configure_logging(level: Optional[str] = None):
    """File + stream logging at the configured level."""
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(settings.log_file),
            logging.StreamHandler()
        ]
    )


def read_config_file(path: str) -> Dict[str, str]:
    """
    Parses a flat 'key = value' file (blank lines and '#' comments ignored)

    Raises:
        UsageError: For unreadable files, malformed lines or unknown keys
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise UsageError(f"Cannot read config file {path}: {e}")

    values = {}
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{number}: unknown key '{key}'")
        values[CONFIG_KEYS[key]] = value
    return values


def build_experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merges config file and flags (flags win) into a validated ExperimentConfig."""
    values: Dict[str, object] = {"workers": settings.workers, "out_dir": settings.output_dir}
    if args.config:
        values.update(read_config_file(args.config))
    for key, field in CONFIG_KEYS.items():
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[field] = flag
    values["experiment_id"] = args.experiment
    return ExperimentConfig(**values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bessel-lab",
        description="Simulation and verification lab for Bessel processes of dimension 0 < delta < 2",
    )
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a registered experiment")
    run.add_argument("experiment", help="Experiment id (see 'list')")
    run.add_argument("--mu", type=float)
    run.add_argument("--paths", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--horizon", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--eps", "--epsilon", dest="epsilon", type=float)
    run.add_argument("--zero-threshold", dest="zero_threshold",
                     help="Zero-set rule: bridge (default), sigma, or an explicit positive level")
    run.add_argument("--workers", type=int)
    run.add_argument("--batch-size", dest="batch_size", type=int)
    run.add_argument("--out", help="Output directory for JSON/CSV artifacts")
    run.add_argument("--config", help="Flat key = value config file (flags win)")
    run.add_argument("--as-printed", dest="as_printed", action="store_true",
                     help="Also evaluate M-hat with the alternative weights (documentation only)")
    run.add_argument("--dump-paths", dest="dump_paths", action="store_true",
                     help="Write simulated paths, one CSV per batch")

    sub.add_parser("list", help="List registered experiments")

    dump = sub.add_parser("dump-paths", help="Simulate paths and write them as CSV")
    dump.add_argument("--mu", type=float, default=0.5)
    dump.add_argument("--paths", type=int, default=10)
    dump.add_argument("--steps", type=int, default=1000)
    dump.add_argument("--horizon", type=float, default=1.0)
    dump.add_argument("--seed", type=int, default=settings.default_seed)
    dump.add_argument("--construction", choices=[c.value for c in Construction], default=Construction.DIRECT.value)
    dump.add_argument("--out", default=settings.path_dump_dir)
    return parser


def describe_defaults(cfg: ExperimentConfig) -> str:
    return (
        f"paths={cfg.n_paths} steps={cfg.n_steps} horizon={cfg.horizon:g} batch={cfg.batch_size} "
        f"eps={cfg.epsilon:g} zero_threshold={cfg.zero_threshold_rule}"
    )


def command_list() -> int:
    """One line per experiment: id, the result it checks, and its default configuration."""
    for experiment in experiment_service.list_experiments():
        cfg = experiment_service.default_config(experiment.experiment_id)
        print(f"{experiment.experiment_id:24s} [{experiment.anchor}] {describe_defaults(cfg)}")
    return EXIT_PASS


def command_run(args: argparse.Namespace) -> int:
    cfg = build_experiment_config(args)
    summary = experiment_service.run(cfg)
    status = "PASS" if summary.passed else "FAIL"
    print(f"{summary.experiment_id} mu={summary.mu:g} seed={summary.seed}: {status}")
    for report in summary.reports:
        print(f"  [{'ok' if report.passed else '--'}] {report.label}: {report.estimate:.6g} vs {report.target:.6g}")
    return EXIT_PASS if summary.passed else EXIT_FAIL


def command_dump_paths(args: argparse.Namespace) -> int:
    params = BesselParams(mu=args.mu)
    construction = Construction(args.construction)
    if construction == Construction.TIME_CHANGE:
        cfg = SimulationService().time_change_config(
            params, args.paths, args.steps, args.horizon, args.seed, args.paths,
        )
        path = simulate_time_change(params, cfg, args.horizon, args.steps, 0, args.paths)
    else:
        cfg = SimConfig(n_steps=args.steps, horizon=args.horizon, seed=args.seed, n_paths=args.paths, batch_size=args.paths)
        path = simulate_direct(params, cfg, 0, args.paths)
    target = dump_paths(path, args.out)
    print(target)
    return EXIT_PASS


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        if args.command == "list":
            return command_list()
        if args.command == "run":
            return command_run(args)
        return command_dump_paths(args)
    except (UsageError, pydantic.ValidationError) as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        context = getattr(args, "experiment", args.command)
        logger.error(f"❌ Numeric failure in {context}: {e}")
        print(f"numeric error in {context}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
