"""
Fitness Strategies v1.0

Four ways to score a candidate architecture:
- SUPERVISED  balanced accuracy on validation data
- COVERAGE    q * NNCov(unlabeled) + (1 - q) * b_acc(val)
- CERT        q * CERT(unlabeled) + (1 - q) * b_acc(val)
- RET         b_acc(val) after one round of pseudo-label retraining

Every strategy trains a fresh network from (descriptor, seed); a training
run that hits non-finite values scores 0 and is flagged as failed. The
same (descriptor, splits, seed) always yields the same FitnessValue.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from neuroevo.coverage import CoverageConfig, coverage, profile_bounds
from neuroevo.data import DatasetSplit, LabeledSet
from neuroevo.descriptor import NetworkDescriptor, SearchConstraints
from neuroevo.errors import FitnessError, TrainingError
from neuroevo.nn import Network, TrainConfig, build_network, predict_proba, train
from neuroevo.observability import LogLevel, get_observability

DECISION_THRESHOLD = 0.5


class Strategy(Enum):
    SUPERVISED = "SUPERVISED"
    COVERAGE = "COVERAGE"
    CERT = "CERT"
    RET = "RET"


class FitnessSpec(BaseModel):
    """Which strategy scores candidates, and its parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    strategy: Strategy = Strategy.SUPERVISED
    coverage_config: Optional[CoverageConfig] = None
    ret_low: float = Field(default=0.4, ge=0.0, le=1.0, description="p <= ret_low -> pseudo-label 0")
    ret_high: float = Field(default=0.6, ge=0.0, le=1.0, description="p >= ret_high -> pseudo-label 1")
    q: float = Field(default=0.0, ge=0.0, lt=1.0, description="Unlabeled proportion")

    @model_validator(mode="after")
    def _check(self) -> "FitnessSpec":
        if self.ret_low >= self.ret_high:
            raise ValueError(f"ret_low ({self.ret_low}) must be below ret_high ({self.ret_high})")
        if self.strategy is Strategy.COVERAGE and self.coverage_config is None:
            raise ValueError("COVERAGE strategy needs a coverage_config")
        return self

    @property
    def label(self) -> str:
        """Short name used in CSV files and plots."""
        if self.strategy is Strategy.SUPERVISED:
            return "SUP"
        if self.strategy is Strategy.COVERAGE:
            return self.coverage_config.metric.value
        return self.strategy.value


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    @classmethod
    def from_labels(cls, predicted: np.ndarray, true: np.ndarray) -> "ConfusionCounts":
        predicted = np.asarray(predicted).astype(int).ravel()
        true = np.asarray(true).astype(int).ravel()
        if predicted.shape != true.shape:
            raise FitnessError(f"{predicted.shape[0]} predictions for {true.shape[0]} labels")
        return cls(
            tp=int(np.count_nonzero((predicted == 1) & (true == 1))),
            tn=int(np.count_nonzero((predicted == 0) & (true == 0))),
            fp=int(np.count_nonzero((predicted == 1) & (true == 0))),
            fn=int(np.count_nonzero((predicted == 0) & (true == 1))),
        )


@dataclass(frozen=True)
class FitnessValue:
    """Fitness f plus its components for diagnostics."""
    f: float
    b_acc: float
    aux: Optional[float] = None
    failed: bool = False

    @property
    def components(self) -> Tuple[float, Optional[float]]:
        return self.b_acc, self.aux

    @classmethod
    def failure(cls) -> "FitnessValue":
        return cls(f=0.0, b_acc=0.0, aux=None, failed=True)


def to_classes(probabilities: np.ndarray) -> np.ndarray:
    """Probability >= 0.5 maps to class 1."""
    return (np.asarray(probabilities) >= DECISION_THRESHOLD).astype(int)


def balanced_accuracy(predicted: np.ndarray, true: np.ndarray) -> float:
    """
    Mean of per-class recalls: (TP/P + TN/Neg) / 2.

    Raises:
        FitnessError: true labels contain a single class
    """
    counts = ConfusionCounts.from_labels(predicted, true)
    if counts.positives == 0 or counts.negatives == 0:
        raise FitnessError("balanced accuracy needs both classes in the true labels")
    return 0.5 * (counts.tp / counts.positives + counts.tn / counts.negatives)


def cert(probabilities: np.ndarray) -> float:
    """Mean prediction certainty max(p, 1 - p)."""
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    if p.size == 0:
        raise FitnessError("CERT of an empty prediction set")
    return float(np.mean(np.maximum(p, 1.0 - p)))


def blend(q: float, unsupervised: float, b_acc: float) -> float:
    """Convex combination q * unsupervised + (1 - q) * b_acc."""
    return q * unsupervised + (1.0 - q) * b_acc


def score(network: Network, labeled: LabeledSet) -> float:
    """Balanced accuracy of a network on a labeled set."""
    return balanced_accuracy(to_classes(predict_proba(network, labeled.features)), labeled.labels)


def fit_candidate(
    candidate: NetworkDescriptor,
    features: np.ndarray,
    labels: np.ndarray,
    train_config: TrainConfig,
    seed: int,
    constraints: Optional[SearchConstraints] = None
) -> Network:
    """Build a fresh network from (candidate, seed) and train it."""
    network = build_network(candidate, features.shape[1], seed, constraints)
    return train(network, features, labels, train_config.model_copy(update={"seed": seed}))


def _log_failure(strategy: str, candidate: NetworkDescriptor, error: TrainingError) -> None:
    obs = get_observability()
    obs.metrics.increment("fitness.failed_trainings")
    obs.logger.log(
        LogLevel.WARNING,
        f"{strategy}: training aborted, fitness set to 0 ({error})",
        context={"descriptor": candidate.to_text(), "epoch": error.epoch, "batch": error.batch},
    )


def _require_unlabeled(splits: DatasetSplit) -> None:
    if splits.q <= 0.0:
        raise FitnessError("semi-supervised strategies need q > 0")
    if splits.unlabeled_size == 0:
        raise FitnessError(f"q={splits.q} but the unlabeled training set is empty")


def supervised_fitness(
    candidate: NetworkDescriptor,
    splits: DatasetSplit,
    train_config: TrainConfig,
    seed: int,
    constraints: Optional[SearchConstraints] = None
) -> FitnessValue:
    """Train on the labeled training set; f = b_acc on validation data."""
    labeled = splits.train_labeled
    try:
        network = fit_candidate(candidate, labeled.features, labeled.labels, train_config, seed, constraints)
    except TrainingError as e:
        _log_failure("SUPERVISED", candidate, e)
        return FitnessValue.failure()
    b_acc = score(network, splits.val)
    return FitnessValue(f=b_acc, b_acc=b_acc)


def coverage_fitness(
    candidate: NetworkDescriptor,
    splits: DatasetSplit,
    coverage_config: CoverageConfig,
    train_config: TrainConfig,
    seed: int,
    constraints: Optional[SearchConstraints] = None
) -> FitnessValue:
    """
    Coverage-blended fitness.

    Bounds are profiled on the labeled training set (the data the network
    was trained on) and NNCov is measured on the unlabeled training set.
    """
    _require_unlabeled(splits)
    labeled = splits.train_labeled
    try:
        network = fit_candidate(candidate, labeled.features, labeled.labels, train_config, seed, constraints)
    except TrainingError as e:
        _log_failure(coverage_config.metric.value, candidate, e)
        return FitnessValue.failure()

    profile = profile_bounds(network, labeled.features)
    nn_cov = coverage(coverage_config, network, profile, splits.train_unlabeled)
    b_acc = score(network, splits.val)
    return FitnessValue(f=blend(splits.q, nn_cov, b_acc), b_acc=b_acc, aux=nn_cov)


def cert_fitness(
    candidate: NetworkDescriptor,
    splits: DatasetSplit,
    train_config: TrainConfig,
    seed: int,
    constraints: Optional[SearchConstraints] = None
) -> FitnessValue:
    """Certainty baseline, blended like the coverage fitness."""
    _require_unlabeled(splits)
    labeled = splits.train_labeled
    try:
        network = fit_candidate(candidate, labeled.features, labeled.labels, train_config, seed, constraints)
    except TrainingError as e:
        _log_failure("CERT", candidate, e)
        return FitnessValue.failure()

    certainty = cert(predict_proba(network, splits.train_unlabeled))
    b_acc = score(network, splits.val)
    return FitnessValue(f=blend(splits.q, certainty, b_acc), b_acc=b_acc, aux=certainty)


def pseudo_label(
    probabilities: np.ndarray,
    low: float = 0.4,
    high: float = 0.6
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Select confident predictions.

    Returns:
        Tuple of (indices of selected instances, their pseudo-labels);
        p <= low gives class 0 and p >= high gives class 1, both inclusive
    """
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    selected = np.flatnonzero((p <= low) | (p >= high))
    return selected, (p[selected] >= high).astype(np.int64)


def ret_fitness(
    candidate: NetworkDescriptor,
    splits: DatasetSplit,
    train_config: TrainConfig,
    seed: int,
    low: float = 0.4,
    high: float = 0.6,
    constraints: Optional[SearchConstraints] = None
) -> FitnessValue:
    """
    Pseudo-label retraining baseline.

    A fresh network (same descriptor, same seed) is retrained on the labeled
    set plus the confidently pseudo-labeled unlabeled instances. With no
    confident instance the first model is scored and no retraining happens.
    aux holds the number of pseudo-labeled instances used.
    """
    _require_unlabeled(splits)
    labeled = splits.train_labeled
    try:
        network = fit_candidate(candidate, labeled.features, labeled.labels, train_config, seed, constraints)
        selected, pseudo = pseudo_label(predict_proba(network, splits.train_unlabeled), low, high)
        if selected.size:
            features = np.vstack([labeled.features, splits.train_unlabeled[selected]])
            labels = np.concatenate([labeled.labels, pseudo])
            network = fit_candidate(candidate, features, labels, train_config, seed, constraints)
    except TrainingError as e:
        _log_failure("RET", candidate, e)
        return FitnessValue.failure()

    b_acc = score(network, splits.val)
    return FitnessValue(f=b_acc, b_acc=b_acc, aux=float(selected.size))


class FitnessEvaluator:
    """
    Callable `(descriptor, seed) -> FitnessValue` bound to one problem.

    Routes q = 0 to the supervised fitness whatever the configured strategy.
    """

    def __init__(
        self,
        splits: DatasetSplit,
        spec: FitnessSpec,
        train_config: TrainConfig,
        constraints: Optional[SearchConstraints] = None
    ):
        self.splits = splits
        self.spec = spec
        self.train_config = train_config
        self.constraints = constraints

    @property
    def strategy(self) -> Strategy:
        if self.splits.q == 0.0:
            return Strategy.SUPERVISED
        return self.spec.strategy

    def __call__(self, candidate: NetworkDescriptor, seed: int) -> FitnessValue:
        strategy = self.strategy
        if strategy is Strategy.SUPERVISED:
            return supervised_fitness(candidate, self.splits, self.train_config, seed, self.constraints)
        if strategy is Strategy.COVERAGE:
            return coverage_fitness(
                candidate, self.splits, self.spec.coverage_config, self.train_config, seed, self.constraints
            )
        if strategy is Strategy.CERT:
            return cert_fitness(candidate, self.splits, self.train_config, seed, self.constraints)
        return ret_fitness(
            candidate, self.splits, self.train_config, seed,
            low=self.spec.ret_low, high=self.spec.ret_high, constraints=self.constraints,
        )


def derive_seed(global_seed: int, generation: int, index: int) -> int:
    """Independent, order-free seed for one candidate's RNG stream."""
    return int(np.random.SeedSequence([global_seed, generation, index]).generate_state(1)[0])
