"""
Experiment Runner v1.0

Runs the dataset x q x strategy x repetition grid:
1. Load the dataset, split, mask labels, standardize (seed = global_seed + repetition)
2. Evolve architectures with the cell's fitness strategy
3. Final protocol: retrain every last-generation descriptor on labeled
   training data plus validation data and score it on the test partition
4. Persist evolution.json and resolved_config.txt per run, records.csv for
   the whole grid, then summary tables and plots

A failing cell is logged and skipped; the remaining cells still run.

Usage:
    config = load_experiment_config("configs/desk_scale.ini")
    outcome = run_experiment(config)
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple
from dataclasses import dataclass, field
from pathlib import Path
import time

import anyio
import anyio.to_process

from neuroevo.config import Cell, ExperimentConfig, Settings, render_resolved_config, settings as default_settings
from neuroevo.data import DatasetSplit, load_named, prepare_splits
from neuroevo.descriptor import NetworkDescriptor, SearchConstraints
from neuroevo.errors import TrainingError
from neuroevo.evolution import EvolutionResult, evolve
from neuroevo.fitness import FitnessEvaluator, balanced_accuracy, derive_seed, fit_candidate, to_classes
from neuroevo.nn import TrainConfig, predict_proba
from neuroevo.observability import LogLevel, configure_observability, get_observability
from neuroevo.reporting import summarize, write_records
from neuroevo.resilience import AttemptResult, FailureLedger, run_guarded

# Seed stream reserved for final retraining, disjoint from generation indices
FINAL_STREAM = 2**32 - 1


@dataclass(frozen=True)
class FinalScore:
    """Test balanced accuracy of one retrained last-generation descriptor."""
    index: int
    descriptor: NetworkDescriptor
    seed: int
    test_b_acc: float
    failed: bool = False


@dataclass
class CellResult:
    cell: Cell
    run_dir: Path
    evolution: EvolutionResult
    scores: List[FinalScore]
    rows: List[Dict[str, Any]]


@dataclass
class ExperimentOutcome:
    """What run_experiment produced."""
    output_dir: Path
    records_path: Optional[Path]
    cells: int
    failures: FailureLedger = field(default_factory=FailureLedger)

    @property
    def ok(self) -> bool:
        return not self.failures


def cell_id(cell: Cell) -> str:
    return f"{cell.dataset}/q{cell.q:g}/{cell.label}/rep{cell.repetition}"


def cell_run_dir(output_dir: Path, cell: Cell) -> Path:
    """`<output>/<dataset>/q<q>/<strategy>/rep<r>`"""
    return Path(output_dir) / cell.dataset / f"q{cell.q:g}" / cell.label / f"rep{cell.repetition}"


# =========================================================================
# Final protocol
# =========================================================================

def final_evaluate(
    descriptors: Sequence[NetworkDescriptor],
    splits: DatasetSplit,
    train_config: TrainConfig,
    seed: int,
    constraints: Optional[SearchConstraints] = None
) -> List[FinalScore]:
    """
    Retrain each descriptor from scratch on train_labeled + val and score it on test.

    The test partition is read exactly once. A descriptor whose training
    diverges scores 0 with failed=True; any other error propagates.
    """
    obs = get_observability()
    training = splits.union_labeled_val()
    test = splits.test_partition()
    scores = []
    for index, descriptor in enumerate(descriptors):
        candidate_seed = derive_seed(seed, FINAL_STREAM, index)
        try:
            network = fit_candidate(
                descriptor, training.features, training.labels, train_config, candidate_seed, constraints
            )
        except TrainingError as e:
            obs.metrics.increment("experiment.final_failed_trainings")
            obs.logger.log(
                LogLevel.WARNING,
                f"final[{index}]: training aborted, test b_acc set to 0 ({e})",
                context={"descriptor": descriptor.to_text(), "seed": candidate_seed},
            )
            scores.append(FinalScore(index, descriptor, candidate_seed, 0.0, failed=True))
            continue
        predicted = to_classes(predict_proba(network, test.features))
        scores.append(FinalScore(index, descriptor, candidate_seed, balanced_accuracy(predicted, test.labels)))
    return scores


# =========================================================================
# One cell
# =========================================================================

def cell_config(config: ExperimentConfig, cell: Cell) -> ExperimentConfig:
    """Single-run config that reproduces exactly this cell as repetition 0."""
    return config.model_copy(update={
        "datasets": [cell.dataset],
        "q_grid": [cell.q],
        "strategies": [cell.label],
        "repetitions": 1,
        "ga": config.ga.model_copy(update={"global_seed": config.repetition_seed(cell.repetition)}),
    })


def _cell_rows(cell: Cell, seed: int, result: EvolutionResult, scores: List[FinalScore]) -> List[Dict[str, Any]]:
    final_ids = [ind.id for ind in result.final_population]
    by_id = dict(zip(final_ids, scores))
    rows = []
    for record in result.evaluations:
        ind = record.individual
        score = by_id.get(ind.id)
        rows.append({
            "dataset": cell.dataset,
            "q": cell.q,
            "strategy": cell.label,
            "repetition": cell.repetition,
            "seed": seed,
            "evaluation": record.evaluation,
            "generation": ind.id[0],
            "individual": ind.id[1],
            "descriptor": ind.descriptor.to_text(),
            "fitness": ind.fitness.f,
            "b_acc": ind.fitness.b_acc,
            "aux": ind.fitness.aux,
            "failed": int(ind.fitness.failed),
            "final": int(score is not None),
            "test_b_acc": score.test_b_acc if score is not None else None,
            "test_failed": int(score.failed) if score is not None else None,
            "wall_time": ind.wall_time,
        })
    return rows


def run_cell(config: ExperimentConfig, cell: Cell) -> CellResult:
    """Evolve, final-evaluate and persist one grid cell."""
    obs = get_observability()
    seed = config.repetition_seed(cell.repetition)
    start = time.perf_counter()

    dataset = load_named(cell.dataset, config.data_dir, allow_fetch=config.allow_fetch)
    splits = prepare_splits(dataset, cell.q, seed, config.split_ratios)
    evaluator = FitnessEvaluator(splits, cell.spec, config.train, config.ga.constraints)

    with obs.timed("experiment.evolve"):
        result = evolve(config.ga.model_copy(update={"global_seed": seed}), evaluator)
    with obs.timed("experiment.final_evaluate"):
        scores = final_evaluate(
            [ind.descriptor for ind in result.final_population],
            splits, config.train, seed, config.ga.constraints,
        )

    run_dir = cell_run_dir(Path(config.output_dir), cell)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "resolved_config.txt").write_text(render_resolved_config(cell_config(config, cell)), encoding="utf-8")
    (run_dir / "evolution.json").write_text(result.to_json(), encoding="utf-8")

    best_test = max(s.test_b_acc for s in scores)
    obs.logger.log(
        LogLevel.INFO,
        f"{cell_id(cell)}: best fitness {result.best.f:.4f}, best test b_acc {best_test:.4f}",
        context={"cell": cell_id(cell), "elapsed": time.perf_counter() - start},
    )
    return CellResult(cell=cell, run_dir=run_dir, evolution=result, scores=scores, rows=_cell_rows(cell, seed, result, scores))


def _run_cell_job(
    config: ExperimentConfig,
    cell: Cell,
    log_dir: Optional[str]
) -> Tuple[AttemptResult, Dict[str, Dict[str, Any]]]:
    """Worker-process entry point; returns the attempt and the worker's metrics."""
    obs = configure_observability(log_dir)
    attempt = run_guarded(run_cell, config, cell, operation_id=cell_id(cell))
    return attempt, obs.metrics.snapshot()


async def _run_cells_in_processes(
    config: ExperimentConfig,
    cells: List[Cell],
    log_dir: Optional[str]
) -> List[Tuple[AttemptResult, Dict[str, Dict[str, Any]]]]:
    results: List[Any] = [None] * len(cells)

    async def _run(index: int, cell: Cell) -> None:
        results[index] = await anyio.to_process.run_sync(_run_cell_job, config, cell, log_dir)

    async with anyio.create_task_group() as tg:
        for index, cell in enumerate(cells):
            tg.start_soon(_run, index, cell)
    return results


# =========================================================================
# Whole grid
# =========================================================================

def _prefetch(config: ExperimentConfig, settings: Settings, ledger: FailureLedger) -> List[str]:
    """Make sure every dataset is cached; return the names that loaded."""
    available = []
    for name in config.datasets:
        attempt = ledger.record(run_guarded(
            load_named, name, config.data_dir,
            allow_fetch=config.allow_fetch, url_template=settings.pmlb_url_template,
            operation_id=f"load/{name}",
        ))
        if attempt.success:
            available.append(name)
    return available


def run_experiment(
    config: ExperimentConfig,
    settings: Optional[Settings] = None,
    parallel_cells: bool = False
) -> ExperimentOutcome:
    """
    Run the whole grid and write records, summary tables and plots.

    Args:
        config: Experiment grid
        settings: Process settings (cache directory, echo); defaults to the global ones
        parallel_cells: Run cells in worker processes instead of sequentially

    Returns:
        ExperimentOutcome; outcome.failures lists every skipped cell
    """
    settings = settings or default_settings
    config = config.resolved(settings)
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    obs = configure_observability(str(output_dir), echo=settings.echo_events)
    (output_dir / "resolved_config.txt").write_text(render_resolved_config(config), encoding="utf-8")

    outcome = ExperimentOutcome(output_dir=output_dir, records_path=None, cells=0)
    available = set(_prefetch(config, settings, outcome.failures))
    cells = [c for c in config.cells() if c.dataset in available]
    outcome.cells = len(cells)
    obs.logger.log(LogLevel.INFO, f"Running {len(cells)} cells", context={"output_dir": str(output_dir)})

    if parallel_cells and len(cells) > 1:
        attempts = []
        for attempt, worker_metrics in anyio.run(_run_cells_in_processes, config, cells, str(output_dir)):
            obs.metrics.merge(worker_metrics)
            attempts.append(attempt)
    else:
        attempts = [run_guarded(run_cell, config, cell, operation_id=cell_id(cell)) for cell in cells]

    rows: List[Dict[str, Any]] = []
    for attempt in attempts:
        outcome.failures.record(attempt)
        if attempt.success:
            rows.extend(attempt.value.rows)
        else:
            obs.metrics.increment("experiment.skipped_cells")
            obs.logger.log(LogLevel.WARNING, f"Skipped {attempt.operation_id}", context=attempt.describe())

    if rows:
        outcome.records_path = write_records(rows, output_dir / "records.csv")
        summarize(output_dir)
    obs.export_metrics(str(output_dir / "metrics.json"))
    return outcome
