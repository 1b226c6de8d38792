"""
Neuroevolution CLI v1.0

Usage:
    neuroevo run configs/desk_scale.ini [--seed N] [--workers N] [--parallel-cells]
    neuroevo summarize results/desk_scale
    neuroevo fetch breast_w [--cache DIR]
    neuroevo datasets [--cache DIR]
    neuroevo config --show
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from neuroevo.config import Settings, load_experiment_config
from neuroevo.data import DATASET_CATALOG, dataset_path, fetch, imbalance, load_pmlb
from neuroevo.errors import NeuroevoError
from neuroevo.experiment import run_experiment
from neuroevo.observability import configure_observability
from neuroevo.reporting import summarize

EXIT_OK = 0
EXIT_CELL_FAILURES = 1
EXIT_USAGE = 2


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    config = load_experiment_config(args.config)
    workers = args.workers
    if workers is None and settings.workers > 1:
        workers = settings.workers
    config = config.with_overrides(seed=args.seed, workers=workers)
    if args.output is not None:
        config = config.model_copy(update={"output_dir": args.output})

    outcome = run_experiment(config, settings=settings, parallel_cells=args.parallel_cells)
    print(f"Results written to {outcome.output_dir} ({outcome.cells} cells)")
    if outcome.failures:
        print(f"{len(outcome.failures)} failure(s):", file=sys.stderr)
        for failure in outcome.failures.failures:
            print(f"  - {failure.operation_id}: {failure.describe()['error']}", file=sys.stderr)
        return EXIT_CELL_FAILURES
    return EXIT_OK


def _log_outside_run(settings: Settings) -> None:
    """Send events of non-run commands to `<log_dir>/events.jsonl`."""
    configure_observability(str(settings.log_path), echo=settings.echo_events)


def cmd_summarize(args: argparse.Namespace, settings: Settings) -> int:
    _log_outside_run(settings)
    report = summarize(Path(args.results_dir))
    print(report.summary.to_string(index=False))
    for path in report.files:
        print(f"  wrote {path}")
    return EXIT_OK


def cmd_fetch(args: argparse.Namespace, settings: Settings) -> int:
    cache = Path(args.cache).expanduser() if args.cache else settings.cache_path
    _log_outside_run(settings)
    path = fetch(args.name, cache, settings.pmlb_url_template)
    print(path)
    return EXIT_OK


def cmd_datasets(args: argparse.Namespace, settings: Settings) -> int:
    cache = Path(args.cache).expanduser() if args.cache else settings.cache_path
    _log_outside_run(settings)
    print(f"{'name':<26} {'n':>6} {'d':>4} {'imbalance':>10}  cached")
    for name, (n, d) in DATASET_CATALOG.items():
        path = dataset_path(name, cache)
        if path is None:
            print(f"{name:<26} {n:>6} {d:>4} {'-':>10}  no")
            continue
        dataset = load_pmlb(path, name=name)
        print(f"{name:<26} {dataset.size:>6} {dataset.n_features:>4} {imbalance(dataset.labels):>10.2f}  yes")
    return EXIT_OK


def cmd_config(args: argparse.Namespace, settings: Settings) -> int:
    print("Current Configuration:")
    print("-" * 40)
    for key, value in settings.to_display_dict().items():
        print(f"  {key}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroevo",
        description="Semi-supervised neuroevolution of MLP architectures with neuron-coverage fitness",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Desk-scale study on three small datasets
  neuroevo run configs/desk_scale.ini

  # Same grid with another seed and 4 evaluation threads
  neuroevo run configs/desk_scale.ini --seed 7 --workers 4

  # Rebuild tables and plots of an earlier run
  neuroevo summarize results/desk_scale
        """
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run an experiment grid")
    run.add_argument("config", help="Experiment INI file")
    run.add_argument("--seed", type=int, help="Override [evolution] global_seed")
    run.add_argument("--workers", type=int, help="Threads evaluating one generation")
    run.add_argument("--parallel-cells", action="store_true",
                     help="Run grid cells in separate processes")
    run.add_argument("--output", type=str, help="Override [experiment] output_dir")
    run.set_defaults(handler=cmd_run)

    summary = commands.add_parser("summarize", help="Rebuild summary tables and plots")
    summary.add_argument("results_dir", help="Directory holding records.csv")
    summary.set_defaults(handler=cmd_summarize)

    fetch_cmd = commands.add_parser("fetch", help="Download a PMLB dataset into the cache")
    fetch_cmd.add_argument("name", help="Dataset name, e.g. breast_w")
    fetch_cmd.add_argument("--cache", type=str, help="Cache directory (default: settings cache_dir)")
    fetch_cmd.set_defaults(handler=cmd_fetch)

    datasets = commands.add_parser("datasets", help="List catalog datasets and cached shapes")
    datasets.add_argument("--cache", type=str, help="Cache directory (default: settings cache_dir)")
    datasets.set_defaults(handler=cmd_datasets)

    config = commands.add_parser("config", help="Show process settings")
    config.add_argument("--show", action="store_true", help="Show current configuration")
    config.set_defaults(handler=cmd_config)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, Settings())
    except NeuroevoError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
