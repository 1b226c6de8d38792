"""
Generational Neuroevolution v1.0

(mu + lambda) genetic algorithm over network descriptors:
- Seeded random initial population
- Truncation selection of parents
- Five mutation operators (layer change, add layer, delete layer,
  activation change, initializer change); no crossover
- Elitist replacement over the current population plus offspring

Reproducibility: every candidate gets its own seed from
derive_seed(global_seed, generation, index), and fitness values are
collected by index, so the result does not depend on how many worker
threads evaluated a generation.

Usage:
    evaluator = FitnessEvaluator(splits, spec, train_config)
    result = evolve(GAConfig(population_size=10, generations=10), evaluator)
"""

from typing import Any, Callable, Dict, List, Optional, Tuple
from dataclasses import dataclass, field, replace
import json
import time

import anyio
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from neuroevo.descriptor import (
    ACTIVATIONS,
    INITIALIZERS,
    NetworkDescriptor,
    SearchConstraints,
    from_text,
    random_descriptor,
    random_layer,
)
from neuroevo.fitness import FitnessValue, derive_seed
from neuroevo.observability import LogLevel, get_observability

IndividualId = Tuple[int, int]
Evaluator = Callable[[NetworkDescriptor, int], FitnessValue]


class GAConfig(BaseModel):
    """Genetic algorithm parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    population_size: int = Field(default=20, ge=2, description="N_pop")
    generations: int = Field(default=30, ge=1, description="Number of generations after the initial one")
    selection_size: int = Field(default=10, ge=1, description="Parents kept by truncation (default N_pop // 2)")
    crossover_probability: float = Field(default=0.0, description="Only 0 is supported")
    constraints: SearchConstraints = Field(default_factory=SearchConstraints)
    global_seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1, description="Threads evaluating one generation")

    @field_validator("crossover_probability")
    @classmethod
    def validate_crossover(cls, v: float) -> float:
        if v != 0.0:
            raise ValueError("no crossover operator exists; crossover_probability must be 0")
        return v

    @model_validator(mode="before")
    @classmethod
    def _default_selection(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("selection_size") is None:
            population = data.get("population_size", cls.model_fields["population_size"].default)
            try:
                data = {**data, "selection_size": max(1, int(population) // 2)}
            except (TypeError, ValueError):
                pass
        return data

    @model_validator(mode="after")
    def _check_selection(self) -> "GAConfig":
        if self.selection_size > self.population_size:
            raise ValueError(
                f"selection_size ({self.selection_size}) exceeds population_size ({self.population_size})"
            )
        return self

    @property
    def parents_count(self) -> int:
        return self.selection_size

    @property
    def evaluation_budget(self) -> int:
        return self.population_size + self.generations * self.population_size


# =========================================================================
# Population members
# =========================================================================

def _fitness_to_dict(value: Optional[FitnessValue]) -> Optional[Dict[str, Any]]:
    if value is None:
        return None
    return {"f": value.f, "b_acc": value.b_acc, "aux": value.aux, "failed": value.failed}


def _fitness_from_dict(data: Optional[Dict[str, Any]]) -> Optional[FitnessValue]:
    if data is None:
        return None
    return FitnessValue(f=data["f"], b_acc=data["b_acc"], aux=data["aux"], failed=data["failed"])


@dataclass
class Individual:
    """A descriptor, its identity and (once evaluated) its fitness."""
    descriptor: NetworkDescriptor
    id: IndividualId
    seed: int
    fitness: Optional[FitnessValue] = None
    operator: Optional[str] = None
    parent: Optional[IndividualId] = None
    wall_time: float = 0.0

    @property
    def f(self) -> float:
        if self.fitness is None:
            raise ValueError(f"individual {self.id} has not been evaluated")
        return self.fitness.f

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": list(self.id),
            "descriptor": self.descriptor.to_text(),
            "seed": self.seed,
            "fitness": _fitness_to_dict(self.fitness),
            "operator": self.operator,
            "parent": list(self.parent) if self.parent is not None else None,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Individual":
        return cls(
            descriptor=from_text(data["descriptor"]),
            id=(data["id"][0], data["id"][1]),
            seed=data["seed"],
            fitness=_fitness_from_dict(data["fitness"]),
            operator=data["operator"],
            parent=tuple(data["parent"]) if data["parent"] is not None else None,
            wall_time=data["wall_time"],
        )


@dataclass
class GenerationSnapshot:
    generation: int
    individuals: List[Individual]

    @property
    def best(self) -> Individual:
        return rank(self.individuals)[0]

    @property
    def mean_fitness(self) -> float:
        return float(np.mean([ind.f for ind in self.individuals]))


@dataclass(frozen=True)
class EvaluationRecord:
    """One fitness evaluation, numbered from 1 in evaluation order."""
    evaluation: int
    individual: Individual
    best_so_far: float

    @property
    def id(self) -> IndividualId:
        return self.individual.id

    @property
    def f(self) -> float:
        return self.individual.f


@dataclass
class EvolutionResult:
    """
    Outcome of one evolve() call.

    snapshots[0] is the evaluated initial population and snapshots[t] the
    population kept after generation t. evaluations holds every evaluated
    individual, survivors or not.
    """
    config: GAConfig
    snapshots: List[GenerationSnapshot] = field(default_factory=list)
    evaluations: List[EvaluationRecord] = field(default_factory=list)

    @property
    def final_population(self) -> List[Individual]:
        return self.snapshots[-1].individuals

    @property
    def best_trajectory(self) -> List[float]:
        """Best fitness of each generation 1..generations."""
        return [snapshot.best.f for snapshot in self.snapshots[1:]]

    @property
    def best(self) -> Individual:
        return self.snapshots[-1].best

    def to_json(self) -> str:
        """Serialize result to JSON"""
        data = {
            "config": self.config.model_dump(mode="json"),
            "evaluations": [
                {"evaluation": r.evaluation, "best_so_far": r.best_so_far, **r.individual.to_dict()}
                for r in self.evaluations
            ],
            "snapshots": [
                {"generation": s.generation, "ids": [list(ind.id) for ind in s.individuals]}
                for s in self.snapshots
            ],
        }
        return json.dumps(data, indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, json_str: str) -> "EvolutionResult":
        """Deserialize result from JSON"""
        data = json.loads(json_str)
        evaluations = [
            EvaluationRecord(
                evaluation=r["evaluation"],
                individual=Individual.from_dict(r),
                best_so_far=r["best_so_far"],
            )
            for r in data["evaluations"]
        ]
        by_id = {r.id: r.individual for r in evaluations}
        return cls(
            config=GAConfig.model_validate(data["config"]),
            snapshots=[
                GenerationSnapshot(
                    generation=s["generation"],
                    individuals=[by_id[(i[0], i[1])] for i in s["ids"]],
                )
                for s in data["snapshots"]
            ],
            evaluations=evaluations,
        )


# =========================================================================
# Selection
# =========================================================================

def rank(individuals: List[Individual]) -> List[Individual]:
    """Sort by fitness descending; ties go to the older, then lower-index id."""
    return sorted(individuals, key=lambda ind: (-ind.f, ind.id))


def truncation_select(population: List[Individual], q: int) -> List[Individual]:
    """
    Keep the q fittest individuals.

    Raises:
        ValueError: an individual is unevaluated, or q is out of range
    """
    if not 1 <= q <= len(population):
        raise ValueError(f"cannot select {q} of {len(population)} individuals")
    return rank(population)[:q]


# =========================================================================
# Mutation operators
# =========================================================================

_DEFAULT_CONSTRAINTS = SearchConstraints()


def _replace(descriptor: NetworkDescriptor, j: int, **changes: Any) -> NetworkDescriptor:
    layers = descriptor.layers()
    layers[j] = replace(layers[j], **changes)
    return NetworkDescriptor.from_layers(layers)


def layer_change(
    descriptor: NetworkDescriptor,
    rng: np.random.Generator,
    constraints: SearchConstraints = _DEFAULT_CONSTRAINTS
) -> NetworkDescriptor:
    """Redraw every gene of one uniformly chosen layer."""
    layers = descriptor.layers()
    j = int(rng.integers(len(layers)))
    layers[j] = random_layer(constraints, rng)
    return NetworkDescriptor.from_layers(layers)


def add_layer(
    descriptor: NetworkDescriptor,
    rng: np.random.Generator,
    constraints: SearchConstraints = _DEFAULT_CONSTRAINTS
) -> Optional[NetworkDescriptor]:
    """Insert a random layer at a uniform position; None at max_depth."""
    if descriptor.depth >= constraints.max_depth:
        return None
    layers = descriptor.layers()
    position = int(rng.integers(len(layers) + 1))
    layers.insert(position, random_layer(constraints, rng))
    return NetworkDescriptor.from_layers(layers)


def del_layer(
    descriptor: NetworkDescriptor,
    rng: np.random.Generator,
    constraints: SearchConstraints = _DEFAULT_CONSTRAINTS
) -> Optional[NetworkDescriptor]:
    """Remove a uniformly chosen layer; None at depth 1."""
    if descriptor.depth <= 1:
        return None
    layers = descriptor.layers()
    del layers[int(rng.integers(len(layers)))]
    return NetworkDescriptor.from_layers(layers)


def activ_change(
    descriptor: NetworkDescriptor,
    rng: np.random.Generator,
    constraints: SearchConstraints = _DEFAULT_CONSTRAINTS
) -> NetworkDescriptor:
    """Swap one layer's activation for a different one."""
    j = int(rng.integers(descriptor.depth))
    others = [a for a in ACTIVATIONS if a is not descriptor.activations[j]]
    return _replace(descriptor, j, activation=others[int(rng.integers(len(others)))])


def weight_change(
    descriptor: NetworkDescriptor,
    rng: np.random.Generator,
    constraints: SearchConstraints = _DEFAULT_CONSTRAINTS
) -> NetworkDescriptor:
    """Swap one layer's initializer for a different one."""
    j = int(rng.integers(descriptor.depth))
    others = [i for i in INITIALIZERS if i is not descriptor.initializers[j]]
    return _replace(descriptor, j, initializer=others[int(rng.integers(len(others)))])


MutationOperator = Callable[..., Optional[NetworkDescriptor]]

MUTATION_OPERATORS: Tuple[Tuple[str, MutationOperator], ...] = (
    ("layer_change", layer_change),
    ("add_layer", add_layer),
    ("del_layer", del_layer),
    ("activ_change", activ_change),
    ("weight_change", weight_change),
)


def mutate(
    descriptor: NetworkDescriptor,
    constraints: SearchConstraints,
    rng: np.random.Generator
) -> Tuple[NetworkDescriptor, str]:
    """
    Apply one uniformly drawn operator.

    An operator that does not apply (add at max_depth, delete at depth 1)
    is discarded and another one is drawn.

    Returns:
        Tuple of (mutated descriptor, operator name)
    """
    while True:
        name, operator = MUTATION_OPERATORS[int(rng.integers(len(MUTATION_OPERATORS)))]
        mutated = operator(descriptor, rng, constraints)
        if mutated is not None:
            return mutated, name


# =========================================================================
# Evaluation
# =========================================================================

def _timed_evaluation(evaluator: Evaluator, individual: Individual) -> Tuple[FitnessValue, float]:
    start = time.perf_counter()
    value = evaluator(individual.descriptor, individual.seed)
    return value, time.perf_counter() - start


async def _evaluate_concurrently(
    evaluator: Evaluator,
    individuals: List[Individual],
    workers: int
) -> List[Tuple[FitnessValue, float]]:
    results: List[Optional[Tuple[FitnessValue, float]]] = [None] * len(individuals)
    limiter = anyio.CapacityLimiter(workers)

    async def _run(index: int, individual: Individual) -> None:
        results[index] = await anyio.to_thread.run_sync(
            _timed_evaluation, evaluator, individual, limiter=limiter
        )

    async with anyio.create_task_group() as tg:
        for index, individual in enumerate(individuals):
            tg.start_soon(_run, index, individual)
    return results


def evaluate_all(evaluator: Evaluator, individuals: List[Individual], workers: int = 1) -> None:
    """Fill in the fitness of every unevaluated individual, in place."""
    pending = [ind for ind in individuals if ind.fitness is None]
    if not pending:
        return
    if workers > 1 and len(pending) > 1:
        outcomes = anyio.run(_evaluate_concurrently, evaluator, pending, workers)
    else:
        outcomes = [_timed_evaluation(evaluator, ind) for ind in pending]

    metrics = get_observability().metrics
    for individual, (value, elapsed) in zip(pending, outcomes):
        individual.fitness = value
        individual.wall_time = elapsed
        metrics.increment("evolution.evaluations")
        metrics.record_histogram("evolution.fitness", value.f)
        metrics.record_histogram("evolution.evaluation_time", elapsed)


# =========================================================================
# Main loop
# =========================================================================

def _record(result: EvolutionResult, individuals: List[Individual]) -> None:
    best = result.evaluations[-1].best_so_far if result.evaluations else 0.0
    for ind in individuals:
        best = max(best, ind.f)
        result.evaluations.append(
            EvaluationRecord(evaluation=len(result.evaluations) + 1, individual=ind, best_so_far=best)
        )


def _log_generation(snapshot: GenerationSnapshot) -> None:
    best = snapshot.best
    get_observability().logger.log(
        LogLevel.INFO,
        f"generation {snapshot.generation}: best={best.f:.4f} mean={snapshot.mean_fitness:.4f} "
        f"descriptor={best.descriptor.to_text()}",
        context={
            "generation": snapshot.generation,
            "best_fitness": best.f,
            "mean_fitness": snapshot.mean_fitness,
            "best_descriptor": best.descriptor.to_text(),
        },
    )


def evolve(config: GAConfig, evaluator: Evaluator) -> EvolutionResult:
    """
    Run the genetic algorithm.

    Args:
        config: Population size, generations, selection size, seed, workers
        evaluator: Deterministic `(descriptor, seed) -> FitnessValue`

    Returns:
        EvolutionResult with generations + 1 snapshots and
        population_size * (generations + 1) evaluation records
    """
    rng = np.random.default_rng(config.global_seed)
    constraints = config.constraints
    result = EvolutionResult(config=config)

    population = [
        Individual(
            descriptor=random_descriptor(constraints, rng),
            id=(0, i),
            seed=derive_seed(config.global_seed, 0, i),
        )
        for i in range(config.population_size)
    ]
    evaluate_all(evaluator, population, config.workers)
    _record(result, population)
    population = rank(population)
    result.snapshots.append(GenerationSnapshot(0, population))
    _log_generation(result.snapshots[-1])

    for generation in range(1, config.generations + 1):
        parents = truncation_select(population, config.parents_count)
        offspring = []
        for i in range(config.population_size):
            parent = parents[int(rng.integers(len(parents)))]
            child, operator = mutate(parent.descriptor, constraints, rng)
            offspring.append(Individual(
                descriptor=child,
                id=(generation, i),
                seed=derive_seed(config.global_seed, generation, i),
                operator=operator,
                parent=parent.id,
            ))
        evaluate_all(evaluator, offspring, config.workers)
        _record(result, offspring)

        population = truncation_select(population + offspring, config.population_size)
        result.snapshots.append(GenerationSnapshot(generation, population))
        _log_generation(result.snapshots[-1])

    return result
