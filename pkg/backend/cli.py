"""
cli.py - Command-line interface for the DoS flow toolkit.

Subcommands:
  extract      pcap / packet fixture → flow feature CSV
  split        stratified train / validation / test split manifest
  sweep        PCA variance sweep with k-fold cross-validation
  compare      every classifier family with and without PCA
  importance   DT Gini importance and a refit on the top features
  pca-report   scree, cumulative variance and loadings tables
  pipeline     every task listed in the config's `tasks` key
  synth-blobs  Gaussian blob dataset CSV
  synth-flows  flow-scenario fixtures with expected-flow manifests
  accept       acceptance suite (exit 3 on failure)

Exit codes: 0 success, 1 usage, 2 data error, 3 acceptance failure.

Examples:
  python cli.py synth-flows --out out/scenarios
  python cli.py extract out/scenarios/rst_suppression.fixture --output out/flows.csv
  python cli.py synth-blobs --out out && python cli.py compare -i out/blobs.csv --set schema_name=open
  python cli.py sweep -i Monday.csv Tuesday.csv --set schema_name=lycos --set variance_targets=0.8,0.9
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from config import load_run_config, setup_logging
from modules.errors import ConfigError
from modules.synth import SCENARIOS
from pipeline import Pipeline

logger = logging.getLogger("flow_ids.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ACCEPTANCE = 3


class UsageError(Exception):
    """Bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def print_table(headers: List[str], rows: List[List[str]], title: str = "") -> None:
    """Pretty-print a table to the console."""
    if title:
        print(f"\n{'═' * 60}")
        print(f"  {title}")
        print(f"{'═' * 60}")

    col_widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            col_widths[i] = max(col_widths[i], len(str(cell)))

    header_line = " │ ".join(h.ljust(col_widths[i]) for i, h in enumerate(headers))
    separator = "─┼─".join("─" * w for w in col_widths)
    print(f" {header_line}")
    print(f" {separator}")
    for row in rows:
        line = " │ ".join(str(cell).ljust(col_widths[i]) for i, cell in enumerate(row))
        print(f" {line}")
    print()


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _frame_rows(frame) -> List[List[str]]:
    return [[_fmt(v) for v in row] for row in frame.itertuples(index=False)]


def _pipeline(args, **explicit) -> Pipeline:
    cfg = load_run_config(args.config, args.set, output_dir=args.out, seed=args.seed,
                          inputs=getattr(args, "input", None), **explicit)
    return Pipeline(cfg)


def cmd_extract(args) -> int:
    """Handle the 'extract' subcommand."""
    pipe = _pipeline(args)
    summary = pipe.extract(args.source, args.output)
    pipe.write_config()
    print_table(
        ["Counter", "Value"],
        [[k, v] for k, v in summary.items()],
        title=f"Flow Extraction - {args.source}",
    )
    return EXIT_OK


def cmd_split(args) -> int:
    """Handle the 'split' subcommand."""
    pipe = _pipeline(args)
    ds = pipe.load()
    parts = pipe.split(ds)
    pipe.write_config()
    counts = [p.class_counts() for p in parts]
    print_table(
        ["Class", "Total", "Train", "Validation", "Test"],
        [[name, sum(int(c[i]) for c in counts)] + [int(c[i]) for c in counts]
         for i, name in enumerate(ds.class_names)],
        title="Stratified Split",
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    """Handle the 'sweep' subcommand."""
    pipe = _pipeline(args)
    train, _, _ = pipe.split(pipe.load())
    result = pipe.run_sweep(train)
    pipe.write_config()
    print_table(list(result.table.columns), _frame_rows(result.table), title="PCA Variance Sweep")
    if result.dropped_classes:
        print(f"  Classes left out of CV: {', '.join(result.dropped_classes)}\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    """Handle the 'compare' subcommand."""
    pipe = _pipeline(args)
    train, _, test = pipe.split(pipe.load())
    with_pca, without = pipe.run_compare(train, test)
    pipe.write_config()
    print_table(list(with_pca.table.columns), _frame_rows(with_pca.table),
                title=f"With PCA ({with_pca.n_components} components)")
    print_table(list(without.table.columns), _frame_rows(without.table), title="Without PCA")
    if with_pca.breakdown is not None:
        print_table(list(with_pca.breakdown.columns), _frame_rows(with_pca.breakdown),
                    title="Per-Class Breakdown")
    return EXIT_OK


def cmd_importance(args) -> int:
    """Handle the 'importance' subcommand."""
    pipe = _pipeline(args)
    train, _, test = pipe.split(pipe.load())
    importance = pipe.run_importance(train, test)
    pipe.write_config()
    print_table(["Feature", "Importance"],
                [[name, _fmt(value)] for name, value in importance.entries[:15]],
                title="DT Gini Importance")
    return EXIT_OK


def cmd_pca_report(args) -> int:
    """Handle the 'pca-report' subcommand."""
    pipe = _pipeline(args)
    train, _, _ = pipe.split(pipe.load())
    model = pipe.run_pca_report(train)
    pipe.write_config()
    cumulative = model.cumulative_ratio
    print_table(
        ["Component", "Ratio", "Cumulative"],
        [[i + 1, _fmt(float(model.explained_variance_ratio[i])), _fmt(float(cumulative[i]))]
         for i in range(min(20, model.d_original))],
        title="Explained Variance",
    )
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """Handle the 'pipeline' subcommand."""
    pipe = _pipeline(args)
    results = pipe.run_pipeline()
    print(f"  ✓ Tasks done: {', '.join(results)} → {pipe.out_dir}\n")
    return EXIT_OK


def cmd_synth_blobs(args) -> int:
    """Handle the 'synth-blobs' subcommand."""
    pipe = _pipeline(args)
    path = pipe.synth_blobs(args.output)
    pipe.write_config()
    print(f"  ✓ Blobs written to {path}\n")
    return EXIT_OK


def cmd_synth_flows(args) -> int:
    """Handle the 'synth-flows' subcommand."""
    pipe = _pipeline(args, scenario_format=args.format)
    paths = pipe.synth_flows(args.scenario)
    pipe.write_config()
    for path in paths:
        print(f"  ✓ {path}")
    print()
    return EXIT_OK


def cmd_accept(args) -> int:
    """Handle the 'accept' subcommand."""
    pipe = _pipeline(args)
    result = pipe.accept()
    print_table(
        ["Check", "Result", "Detail"],
        [[c.name, "✓ PASS" if c.passed else "✗ FAIL", c.detail] for c in result.checks],
        title="Acceptance Suite",
    )
    return EXIT_OK if result.passed else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        description="DoS flow toolkit - CLI",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="key=value config file")
    common.add_argument("--set", "-s", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one config key (repeatable)")
    common.add_argument("--out", "-o", help="Output directory")
    common.add_argument("--seed", type=int, help="Seed for splits, folds and models")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", "-i", nargs="+", help="Flow CSV file(s)")

    sub = parser.add_subparsers(dest="command", help="Available commands", parser_class=_Parser)

    # ── extract ──────────────────────────────
    p_ext = sub.add_parser("extract", parents=[common], help="pcap/fixture → flow CSV")
    p_ext.add_argument("source", help="pcap file or packet fixture")
    p_ext.add_argument("--output", help="Flow CSV path (default <out>/flows.csv)")

    # ── dataset commands ─────────────────────
    sub.add_parser("split", parents=[common, data], help="Stratified split manifest")
    sub.add_parser("sweep", parents=[common, data], help="PCA variance sweep")
    sub.add_parser("compare", parents=[common, data], help="Model comparison with/without PCA")
    sub.add_parser("importance", parents=[common, data], help="DT Gini importance")
    sub.add_parser("pca-report", parents=[common, data], help="Scree and loadings tables")
    sub.add_parser("pipeline", parents=[common, data], help="Run every configured task")

    # ── synthetic ────────────────────────────
    p_blobs = sub.add_parser("synth-blobs", parents=[common], help="Gaussian blob CSV")
    p_blobs.add_argument("--output", help="CSV path (default <out>/blobs.csv)")
    p_flows = sub.add_parser("synth-flows", parents=[common], help="Flow-scenario fixtures")
    p_flows.add_argument("--scenario", nargs="+", choices=sorted(SCENARIOS),
                         help="Scenario(s) to write (default: all)")
    p_flows.add_argument("--format", choices=["fixture", "pcap"],
                         help="Packet file format (default: config scenario_format)")

    sub.add_parser("accept", parents=[common], help="Run the acceptance suite")
    return parser


COMMANDS = {
    "extract": cmd_extract,
    "split": cmd_split,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "importance": cmd_importance,
    "pca-report": cmd_pca_report,
    "pipeline": cmd_pipeline,
    "synth-blobs": cmd_synth_blobs,
    "synth-flows": cmd_synth_flows,
    "accept": cmd_accept,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    setup_logging()

    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
