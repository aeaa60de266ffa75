"""Command-line entry point ``spdefind``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .exceptions import ConfigError, MissingTruth, NumericalError, SpdeFindError
from .fileio import read_field, write_field

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _config(path) -> ExperimentConfig:
    try:
        return load_config(path)
    except OSError as exc:
        # an unreadable config is still a config problem from the user's side
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc


def cmd_simulate(args) -> int:
    from .pipeline import simulate_from_config
    config = _config(args.config)
    out = Path(args.out or config.output_field)
    data = simulate_from_config(config)
    write_field(out, data)
    ns, nt, nx = data.u.shape
    print(f"wrote {out}: ns={ns} nt={nt} nx={nx}")
    return EXIT_OK


def cmd_discover(args) -> int:
    from .pipeline import check_field_matches, discover, save_discovery
    config = _config(args.config)
    data = check_field_matches(read_field(args.data, config.boundary), config)
    found = discover(data, config)
    out_dir = Path(args.out_dir or config.output_dir)
    report = save_discovery(found, config, out_dir)
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .pipeline import evaluate, load_models
    config = _config(args.config)
    models = load_models(args.models)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report = evaluate(models, config, report_path.parent, report_name=report_path.name)
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_run_paper(args) -> int:
    from .pipeline import comparison_table, run_paper
    if args.ensembles is not None and args.ensembles < 1:
        raise ConfigError("--ensembles must be >= 1")
    if args.seed is not None and args.seed < 0:
        raise ConfigError("--seed must be non-negative")
    reports = run_paper(args.case, Path(args.out_dir), args.seed, args.ensembles)
    print(comparison_table(reports), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spdefind", description="Discover SPDEs from ensemble data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate an ensemble and write a .fld file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output .fld path (default: output.field from the config)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("discover", help="discover drift and diffusion from a .fld file")
    s.add_argument("--data", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", help="directory for .spm files and the report")
    s.set_defaults(func=cmd_discover)

    s = sub.add_parser("evaluate", help="score models against the preset truth and predict")
    s.add_argument("--models", required=True, help="directory holding drift.spm and diffusion.spm")
    s.add_argument("--config", required=True)
    s.add_argument("--report", required=True, help="report JSON path; CSVs go next to it")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("run-paper", help="run the benchmark presets end to end")
    s.add_argument("--case", required=True, choices=["heat", "allen-cahn", "nagumo", "all"])
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--ensembles", type=int)
    s.set_defaults(func=cmd_run_paper)
    return p


def _describe(exc) -> str:
    stage = getattr(exc, "stage", None)
    return f"{'stage ' + stage + ': ' if stage else ''}{exc}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MissingTruth) as exc:
        print(f"config error: {_describe(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {_describe(exc)}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {_describe(exc)}", file=sys.stderr)
        return EXIT_IO
    except (SpdeFindError, ValueError) as exc:
        print(f"config error: {_describe(exc)}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
