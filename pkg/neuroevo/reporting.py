"""
Results Reporting v1.0

Reads the versioned records CSV of an experiment and produces:
- summary.csv               per (dataset, q, strategy): runs, mean/max best test b_acc
- summary_by_strategy.csv   per (strategy, q): mean over datasets
- plots/best_accuracy_vs_q.svg
- plots/fitness_vs_evaluation_<dataset>_q<q>.svg
- plots/test_accuracy_distribution_<dataset>.svg

"Best" test accuracy of a run is the highest test b_acc among the
retrained last-generation individuals of that run.
"""

from typing import Any, Dict, List
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import pandas as pd

from neuroevo.errors import ReportingError
from neuroevo.observability import LogLevel, get_observability

RECORDS_HEADER = "# neuroevo-records v1"
RECORD_COLUMNS = [
    "dataset", "q", "strategy", "repetition", "seed", "evaluation", "generation",
    "individual", "descriptor", "fitness", "b_acc", "aux", "failed", "final",
    "test_b_acc", "test_failed", "wall_time",
]
RUN_KEYS = ["dataset", "q", "strategy", "repetition"]
CELL_KEYS = ["dataset", "q", "strategy"]
BASELINE_LABEL = "SUP"


@dataclass
class SummaryReport:
    """Tables and files written by summarize()."""
    summary: pd.DataFrame
    by_strategy: pd.DataFrame
    files: List[Path] = field(default_factory=list)

    @property
    def plots(self) -> List[Path]:
        return [p for p in self.files if p.suffix == ".svg"]


# =========================================================================
# Records I/O
# =========================================================================

def write_records(rows: List[Dict[str, Any]], path: Path) -> Path:
    """Write the records CSV, schema header first."""
    frame = pd.DataFrame(rows, columns=RECORD_COLUMNS)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(RECORDS_HEADER + "\n")
        frame.to_csv(f, index=False)
    return Path(path)


def read_records(path: Path) -> pd.DataFrame:
    """
    Read a records CSV written by write_records.

    Raises:
        ReportingError: missing file, wrong schema header, missing columns or no rows
    """
    path = Path(path)
    if not path.exists():
        raise ReportingError(f"no records file at {path}")
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
    if header != RECORDS_HEADER:
        raise ReportingError(f"{path}: expected schema header {RECORDS_HEADER!r}, got {header!r}")

    frame = pd.read_csv(path, skiprows=1)
    missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
    if missing:
        raise ReportingError(f"{path}: missing columns {missing}")
    if frame.empty:
        raise ReportingError(f"{path}: no records")
    return frame


# =========================================================================
# Tables
# =========================================================================

def run_table(records: pd.DataFrame) -> pd.DataFrame:
    """One row per run: best and mean test b_acc of its last generation."""
    finals = records[records["final"] == 1]
    if finals.empty:
        raise ReportingError("records contain no final-generation rows")
    grouped = finals.groupby(RUN_KEYS, sort=False)["test_b_acc"]
    return grouped.agg(best_test_b_acc="max", mean_test_b_acc="mean").reset_index()


def summary_table(records: pd.DataFrame) -> pd.DataFrame:
    """
    Per (dataset, q, strategy) summary over repetitions.

    The `best` column flags the strategy with the highest
    mean_best_test_b_acc within its (dataset, q); ties flag all of them.
    """
    runs = run_table(records)
    summary = (
        runs.groupby(CELL_KEYS, sort=False)
        .agg(
            runs=("repetition", "count"),
            mean_best_test_b_acc=("best_test_b_acc", "mean"),
            max_test_b_acc=("best_test_b_acc", "max"),
            mean_test_b_acc=("mean_test_b_acc", "mean"),
        )
        .reset_index()
    )
    top = summary.groupby(["dataset", "q"], sort=False)["mean_best_test_b_acc"].transform("max")
    summary["best"] = (summary["mean_best_test_b_acc"] == top).astype(int)
    return summary.sort_values(CELL_KEYS, kind="stable").reset_index(drop=True)


def by_strategy_table(summary: pd.DataFrame) -> pd.DataFrame:
    """Mean of the per-dataset mean best test accuracy, per (strategy, q)."""
    table = (
        summary.groupby(["strategy", "q"], sort=False)
        .agg(datasets=("dataset", "nunique"), mean_best_test_b_acc=("mean_best_test_b_acc", "mean"))
        .reset_index()
    )
    return table.sort_values(["strategy", "q"], kind="stable").reset_index(drop=True)


def best_so_far_curves(records: pd.DataFrame, dataset: str, q: float) -> Dict[str, np.ndarray]:
    """Mean over repetitions of the best-so-far fitness, per strategy."""
    cell = records[(records["dataset"] == dataset) & (records["q"] == q)]
    curves: Dict[str, np.ndarray] = {}
    for strategy, group in cell.groupby("strategy", sort=True):
        per_run = []
        for _, run in group.groupby("repetition", sort=True):
            run = run.sort_values("evaluation")
            per_run.append(np.maximum.accumulate(run["fitness"].to_numpy(dtype=np.float64)))
        length = min(len(c) for c in per_run)
        curves[strategy] = np.mean([c[:length] for c in per_run], axis=0)
    return curves


# =========================================================================
# Plots
# =========================================================================

def _save(fig: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


def plot_accuracy_vs_q(by_strategy: pd.DataFrame, path: Path) -> Path:
    """
    Mean best test accuracy against q, one line per strategy.

    The supervised q = 0 point, when present, starts every other line.
    """
    fig, ax = plt.subplots(figsize=(8, 5))
    baseline = by_strategy[(by_strategy["strategy"] == BASELINE_LABEL) & (by_strategy["q"] == 0.0)]
    for strategy, group in by_strategy.groupby("strategy", sort=True):
        group = group.sort_values("q")
        qs = group["q"].to_list()
        values = group["mean_best_test_b_acc"].to_list()
        if strategy != BASELINE_LABEL and not baseline.empty and 0.0 not in qs:
            qs = [0.0] + qs
            values = [float(baseline["mean_best_test_b_acc"].iloc[0])] + values
        ax.plot(qs, values, marker="o", label=strategy)
    ax.set_xlabel("proportion of unlabeled training instances (q)")
    ax.set_ylabel("mean best test balanced accuracy")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_fitness_vs_evaluation(curves: Dict[str, np.ndarray], title: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 5))
    for strategy, curve in curves.items():
        ax.plot(np.arange(1, len(curve) + 1), curve, label=strategy)
    ax.set_xlabel("evaluation")
    ax.set_ylabel("best fitness so far (mean over repetitions)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_test_distribution(records: pd.DataFrame, dataset: str, path: Path) -> Path:
    """Box plot of every last-generation test accuracy, per (strategy, q)."""
    finals = records[(records["dataset"] == dataset) & (records["final"] == 1)]
    groups = list(finals.groupby(["q", "strategy"], sort=True))
    fig, ax = plt.subplots(figsize=(max(6, len(groups) * 0.8), 5))
    ax.boxplot([g["test_b_acc"].to_numpy(dtype=np.float64) for _, g in groups])
    ax.set_xticks(
        np.arange(1, len(groups) + 1),
        [f"{strategy}\nq={q:g}" for (q, strategy), _ in groups],
    )
    ax.set_ylabel("test balanced accuracy")
    ax.set_title(dataset)
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, path)


# =========================================================================
# Entry point
# =========================================================================

def summarize(results_dir: Path) -> SummaryReport:
    """
    Build summary tables and plots from `<results_dir>/records.csv`.

    Raises:
        ReportingError: no records
    """
    results_dir = Path(results_dir)
    records = read_records(results_dir / "records.csv")
    summary = summary_table(records)
    by_strategy = by_strategy_table(summary)

    report = SummaryReport(summary=summary, by_strategy=by_strategy)
    summary_path = results_dir / "summary.csv"
    summary.to_csv(summary_path, index=False)
    by_strategy_path = results_dir / "summary_by_strategy.csv"
    by_strategy.to_csv(by_strategy_path, index=False)
    report.files.extend([summary_path, by_strategy_path])

    plots = results_dir / "plots"
    report.files.append(plot_accuracy_vs_q(by_strategy, plots / "best_accuracy_vs_q.svg"))
    for (dataset, q), _ in records.groupby(["dataset", "q"], sort=True):
        curves = best_so_far_curves(records, dataset, q)
        report.files.append(plot_fitness_vs_evaluation(
            curves, f"{dataset}, q={q:g}", plots / f"fitness_vs_evaluation_{dataset}_q{q:g}.svg"
        ))
    for dataset in sorted(records["dataset"].unique()):
        report.files.append(plot_test_distribution(
            records, dataset, plots / f"test_accuracy_distribution_{dataset}.svg"
        ))

    get_observability().logger.log(
        LogLevel.INFO,
        f"Summarized {len(summary)} cells into {results_dir}",
        context={"files": [str(p) for p in report.files]},
    )
    return report
