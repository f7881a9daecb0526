"""Command-line entry point.

Exit codes: 0 success, 2 invalid config or arguments, 3 a protocol run
aborted (QBER threshold, failed verification, key exhaustion).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, Mode, OutputFormat
from .errors import ConfigError, ProtocolAbort, QKDError
from .experiment import run_experiment
from .report import DATA_DIR, table1_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

DEFAULT_CONFIGS = {
    Mode.LINK_BUDGET: "link_25km.yaml",
    Mode.BB84: "bb84_ideal.yaml",
    Mode.PROTOCOL_A_CHAIN: "chain_sweep.yaml",
    Mode.PROTOCOL_B: "protocol_b_sweep.yaml",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkdnet", description="BB84 link and trusted-relay network simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", type=Path, help="experiment YAML file")
    run.add_argument("--mode", choices=[m.value for m in Mode],
                     help="bundled default experiment for this mode (or a check against --config)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--format", choices=[f.value for f in OutputFormat])
    run.add_argument("--output", type=Path, help="write the artifact here instead of stdout")
    run.add_argument("--jobs", type=int, help="parallel sweep points")

    t1 = sub.add_parser("table1", help="fitted calibration report for reference link experiments")
    t1.add_argument("--seed", type=int, default=2007)
    t1.add_argument("--sifted-bits", type=int)
    t1.add_argument("--format", choices=[f.value for f in OutputFormat], default="csv")
    t1.add_argument("--output", type=Path)

    dump = sub.add_parser("dump-config", help="print a bundled default config")
    dump.add_argument("--mode", required=True, choices=[m.value for m in DEFAULT_CONFIGS])
    return parser


def _load_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.load(args.config)
        if args.mode and cfg.mode.value != args.mode:
            raise ConfigError(f"--mode {args.mode} does not match config mode {cfg.mode.value}",
                              source=str(args.config))
    elif args.mode:
        mode = Mode(args.mode)
        if mode not in DEFAULT_CONFIGS:
            raise ConfigError(f"no bundled default for mode {mode.value}; pass --config")
        cfg = ExperimentConfig.load(DATA_DIR / DEFAULT_CONFIGS[mode])
    else:
        raise ConfigError("give --config or --mode")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.format:
        cfg.output_format = OutputFormat(args.format)
    if args.output is not None:
        cfg.output_path = str(args.output)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg.jobs = args.jobs
    return cfg


def _emit(text: str, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "dump-config":
            sys.stdout.write((DATA_DIR / DEFAULT_CONFIGS[Mode(args.mode)]).read_text())
            return EXIT_OK
        if args.command == "table1":
            art = table1_report(args.seed, sifted_bits=args.sifted_bits)
            _emit(art.render(OutputFormat(args.format)), args.output)
            return EXIT_OK
        cfg = _load_config(args)
        art = run_experiment(cfg)
    except ConfigError as exc:
        print(f"qkdnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolAbort as exc:
        print(f"qkdnet: protocol aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except QKDError as exc:
        print(f"qkdnet: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(art.render(cfg.output_format), cfg.output_path)
    if art.aborted:
        print(f"qkdnet: {art.aborted} of {len(art.rows)} runs aborted", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
