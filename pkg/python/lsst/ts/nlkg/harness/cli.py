import argparse
import sys
from pathlib import Path
from typing import Sequence

from lsst.ts.nlkg.config import config, configure_logging, nlkg_logger
from lsst.ts.nlkg.errors import EXIT_OK, EXIT_UNEXPECTED, exit_code_for
from lsst.ts.nlkg.harness.commands import (
    cmd_analyze,
    cmd_construct,
    cmd_spectrum,
    cmd_sweep,
    cmd_verify,
)
from lsst.ts.nlkg.models.models import ExperimentConfig
from lsst.ts.nlkg.models.models_init import (
    describe_validation_error,
    load_experiment_config,
)
from lsst.ts.nlkg.utils import canonical_json, get_exception_traceback_str
from pydantic import ValidationError

__all__ = ["build_parser", "resolve_config", "run_nlkg", "main"]

logger = nlkg_logger()

# Preset used when --config is not given.
DEFAULT_PRESETS = {
    "spectrum": "spectrum",
    "construct": "single",
    "analyze": "single",
    "verify": "acceptance",
    "sweep": "single",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlkg",
        description="Solitons and multi-solitons of the nonlinear Klein-Gordon"
        " equation: spectra, backward construction and analysis.",
    )
    parser.add_argument("--log-level", default=None, help="Override NLKG_LOG_LEVEL.")
    parser.add_argument(
        "--log-json", action="store_true", default=None, help="JSON log lines."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("spectrum", "Ground state, lambda0 and spectral bundles."),
        ("construct", "Backward construction of a family member."),
        ("analyze", "Modulation and functional analysis of a stored run."),
        ("verify", "Run the acceptance suite."),
        ("sweep", "Construct every amplitude vector of the sweep list."),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument(
            "--config",
            default=None,
            help="TOML, JSON or YAML file, or a preset name"
            f" (default: {DEFAULT_PRESETS[name]}).",
        )
        sub.add_argument("--out", default=None, help="Run directory.")
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument(
            "--resolution",
            type=float,
            default=1.0,
            help="Multiply n and divide dt by this factor.",
        )
        if name == "analyze":
            sub.add_argument(
                "--source", required=True, help="Directory of a construct run."
            )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment_config(args.config or DEFAULT_PRESETS[args.command])
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg.with_resolution(args.resolution)


def _output_dir(args: argparse.Namespace, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output:
        return Path(cfg.output)
    return Path(config.output_dir) / f"{args.command}-{cfg.name}"


def run_nlkg(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``nlkg`` command; returns the exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_json)
    try:
        cfg = resolve_config(args)
        out = _output_dir(args, cfg)
        logger.info("Running", command=args.command, config=cfg.name, out=str(out))
        if args.command == "spectrum":
            summary = cmd_spectrum(cfg, out)
        elif args.command == "construct":
            summary = cmd_construct(cfg, out)
        elif args.command == "analyze":
            summary = cmd_analyze(cfg, Path(args.source), out)
        elif args.command == "verify":
            summary = cmd_verify(cfg, out)
        else:
            summary = cmd_sweep(cfg, out)
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_UNEXPECTED:
            logger.error(
                "Unexpected failure", traceback=get_exception_traceback_str(e)
            )
        else:
            message = (
                describe_validation_error(e)
                if isinstance(e, ValidationError)
                else str(e)
            )
            logger.error("Command failed", error=type(e).__name__, detail=message)
            print(f"nlkg {args.command}: {message}", file=sys.stderr)
        return code
    print(canonical_json(summary))
    return EXIT_OK


def main() -> None:
    sys.exit(run_nlkg())


if __name__ == "__main__":
    main()
