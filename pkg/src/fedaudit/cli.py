"""Command-line interface.

Subcommands:
  run    one experiment from a JSON config file
  sweep  grid over beta / gamma / noise_variance / fr_count (config "sweep" section)
  dlg    gradient-leakage evaluation grid (config "dlg" section)

Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from .config import ConfigError, load_config
from .reporting import (dlg_csv_text, dlg_json_text, result_json_text,
                        rounds_csv_text, summary_dict, sweep_csv_text,
                        sweep_json_text, write_text)
from .simulator import (DLGExperimentConfig, run_dlg_experiment, run_experiment,
                        sweep_experiment)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the exit-code contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fedaudit",
                     description="Federated-learning free-rider defense simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run one experiment"),
                            ("sweep", "run a parameter grid"),
                            ("dlg", "run the gradient-leakage evaluation")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _dlg_config(raw_section: dict, seed_override: int | None) -> DLGExperimentConfig:
    known = {f.name for f in fields(DLGExperimentConfig)}
    unknown = set(raw_section) - known
    if unknown:
        raise ConfigError(f"dlg: unknown keys {sorted(unknown)}")
    kwargs = dict(raw_section)
    for key in ("noise_variances", "prune_rates", "hidden_dims"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        cfg = DLGExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"dlg: {exc}") from exc
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = Path(args.out)

    try:
        config, raw = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)

        if args.command == "run":
            result = run_experiment(config)
            if args.format == "csv":
                write_text(out_dir / "rounds.csv", rounds_csv_text(result))
                write_text(out_dir / "summary.json",
                           result_json_text(result, include_rounds=False))
            else:
                write_text(out_dir / "result.json", result_json_text(result))
            summary = summary_dict(result)
            print(f"rounds={summary['rounds_completed']} "
                  f"final_accuracy={summary['final_accuracy']:.4f} "
                  f"dsr={summary['dsr']} fpr={summary['fpr']}")
            return EXIT_OK

        if args.command == "sweep":
            section = raw.get("sweep")
            if not isinstance(section, dict):
                raise ConfigError("sweep: config file needs a 'sweep' object")
            rows = sweep_experiment(config, section)
            if args.format == "csv":
                write_text(out_dir / "sweep.csv", sweep_csv_text(rows))
            else:
                write_text(out_dir / "sweep.json", sweep_json_text(rows))
            print(f"sweep rows={len(rows)}")
            return EXIT_OK

        # dlg
        section = raw.get("dlg", {})
        if not isinstance(section, dict):
            raise ConfigError("dlg: config section must be an object")
        dlg_cfg = _dlg_config(section, args.seed)
        cells = run_dlg_experiment(dlg_cfg)
        if args.format == "csv":
            write_text(out_dir / "dlg_grid.csv", dlg_csv_text(cells))
        else:
            write_text(out_dir / "dlg_grid.json", dlg_json_text(cells))
        defended = sum(1 for c in cells if c.defended)
        print(f"dlg cells={len(cells)} defended={defended}")
        return EXIT_OK

    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
