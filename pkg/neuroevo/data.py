"""
Dataset Ingestion and Semi-Supervised Splits v1.0

- PMLB-format TSV loading (header row, `target` column, optional gzip)
- Stratified train/val/test splitting
- Label masking for a proportion q of the training pool
- Feature standardization fitted on all training features
- Optional download of named PMLB datasets into a local cache

Author: neuroevo
"""

import math
import shutil
import tempfile
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from neuroevo.errors import DataError
from neuroevo.observability import LogLevel, get_observability

PMLB_URL_TEMPLATE = "https://github.com/EpistasisLab/pmlb/raw/master/datasets/{name}/{name}.tsv.gz"
DEFAULT_RATIOS: Tuple[float, float, float] = (0.6, 0.2, 0.2)

# Binary problems of the benchmark: name -> (observations, features)
DATASET_CATALOG: Dict[str, Tuple[int, int]] = {
    "agaricus_lepiota": (8145, 22),
    "analcatdata_lawsuit": (264, 4),
    "australian": (690, 14),
    "backache": (180, 32),
    "biomed": (209, 8),
    "breast": (699, 10),
    "breast_cancer": (286, 9),
    "breast_cancer_wisconsin": (569, 30),
    "breast_w": (699, 9),
    "buggyCrx": (690, 15),
    "bupa": (345, 5),
    "chess": (3196, 36),
    "churn": (5000, 20),
    "cleve": (303, 13),
    "coil2000": (9822, 85),
    "colic": (368, 22),
    "credit_a": (690, 15),
    "credit_g": (1000, 20),
    "crx": (690, 15),
    "diabetes": (768, 8),
}


@dataclass(frozen=True)
class Dataset:
    """A fully labeled binary classification problem."""
    features: np.ndarray
    labels: np.ndarray
    name: str
    dropped_rows: int = 0

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True)
class LabeledSet:
    features: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels.astype(int), minlength=2)


@dataclass
class DatasetSplit:
    """
    The four partitions of one semi-supervised problem.

    The test partition should be read through test_partition(), which
    counts reads so the evaluation protocol can be audited.
    """
    train_labeled: LabeledSet
    train_unlabeled: np.ndarray
    val: LabeledSet
    test_set: LabeledSet = field(repr=False)
    q: float = 0.0
    name: str = ""
    test_reads: int = 0

    @property
    def input_dim(self) -> int:
        return int(self.val.features.shape[1])

    @property
    def unlabeled_size(self) -> int:
        return int(self.train_unlabeled.shape[0])

    def test_partition(self) -> LabeledSet:
        self.test_reads += 1
        return self.test_set

    def union_labeled_val(self) -> LabeledSet:
        """Labeled training data plus validation data, for final retraining."""
        return LabeledSet(
            features=np.vstack([self.train_labeled.features, self.val.features]),
            labels=np.concatenate([self.train_labeled.labels, self.val.labels]),
        )


# =========================================================================
# Loading
# =========================================================================

def load_pmlb(path: Union[str, Path], name: Optional[str] = None) -> Dataset:
    """
    Load a PMLB-style TSV file.

    Args:
        path: Tab-separated file with a header row and a `target` column,
            optionally gzip-compressed
        name: Dataset identifier (defaults to the file stem)

    Returns:
        Dataset with labels mapped to {0, 1} (smaller value -> 0)

    Raises:
        DataError: missing target column or a target that is not binary
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    name = name or path.name.split(".")[0]

    frame = pd.read_csv(path, sep="\t", compression="infer")
    if "target" not in frame.columns:
        raise DataError(f"{path}: missing target column")

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    complete = numeric.notna().all(axis=1)
    dropped = int((~complete).sum())
    numeric = numeric[complete]
    if dropped:
        get_observability().logger.log(
            LogLevel.WARNING,
            f"Dropped {dropped} rows with missing or unparseable cells from {name}",
            context={"dataset": name, "dropped_rows": dropped},
        )

    target = numeric["target"].to_numpy(dtype=np.float64)
    values = np.unique(target)
    if values.shape[0] != 2:
        raise DataError(f"{name}: target is not binary ({values.shape[0]} distinct values)")

    features = numeric.drop(columns=["target"]).to_numpy(dtype=np.float64)
    labels = (target == values[1]).astype(np.int64)
    return Dataset(features=features, labels=labels, name=name, dropped_rows=dropped)


def imbalance(labels: np.ndarray) -> float:
    """
    Class imbalance: squared distance of the class proportions from perfect
    balance, scaled so a single-class vector scores 1 and 50/50 scores 0.
    """
    labels = np.asarray(labels).astype(int)
    if labels.size == 0:
        raise DataError("imbalance of an empty label vector")
    proportions = np.bincount(labels, minlength=2) / labels.size
    return float(2.0 * np.sum((proportions - 0.5) ** 2))


def dataset_path(name: str, cache_dir: Union[str, Path]) -> Optional[Path]:
    """Locate `<name>.tsv.gz` or `<name>.tsv` in the cache."""
    cache_dir = Path(cache_dir)
    for suffix in (".tsv.gz", ".tsv"):
        candidate = cache_dir / f"{name}{suffix}"
        if candidate.exists():
            return candidate
    return None


def fetch(
    name: str,
    cache_dir: Union[str, Path],
    url_template: str = PMLB_URL_TEMPLATE
) -> Path:
    """
    Download a named dataset into the cache unless it is already there.

    Returns:
        Path to the cached file
    """
    existing = dataset_path(name, cache_dir)
    if existing is not None:
        return existing

    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    target = cache_dir / f"{name}.tsv.gz"
    url = url_template.format(name=name)
    obs = get_observability()
    obs.logger.log(LogLevel.INFO, f"Fetching {name}", context={"url": url})

    try:
        with urllib.request.urlopen(url, timeout=60) as response, \
                tempfile.NamedTemporaryFile(dir=cache_dir, delete=False) as tmp:
            shutil.copyfileobj(response, tmp)
            tmp_path = Path(tmp.name)
    except OSError as e:
        raise DataError(f"could not fetch {name} from {url}: {e}") from e

    tmp_path.replace(target)
    obs.metrics.increment("data.fetched")
    return target


def load_named(
    name: str,
    cache_dir: Union[str, Path],
    allow_fetch: bool = True,
    url_template: str = PMLB_URL_TEMPLATE
) -> Dataset:
    """Load a dataset by name from the cache, fetching it when allowed."""
    path = dataset_path(name, cache_dir)
    if path is None:
        if not allow_fetch:
            raise DataError(f"dataset {name} not found in {cache_dir} and fetching is disabled")
        path = fetch(name, cache_dir, url_template)
    return load_pmlb(path, name=name)


# =========================================================================
# Splitting and masking
# =========================================================================

def apportion(total: int, weights: Sequence[float]) -> List[int]:
    """
    Split an integer total proportionally to weights by largest remainder.

    Ties in the fractional parts go to the earlier entry.
    """
    weights = np.asarray(weights, dtype=np.float64)
    exact = total * weights / weights.sum()
    counts = np.floor(exact).astype(int)
    remainder = total - int(counts.sum())
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return [int(c) for c in counts]


def split(
    dataset: Dataset,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0
) -> Tuple[LabeledSet, LabeledSet, LabeledSet]:
    """
    Stratified split into (train pool, val, test).

    Every class is apportioned to the partitions separately, and each
    partition receives at least one instance of every class.

    Raises:
        DataError: bad ratios, or a class with fewer instances than partitions
    """
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise DataError(f"ratios must be three positive fractions summing to 1, got {ratios}")

    rng = np.random.default_rng(seed)
    parts: List[List[np.ndarray]] = [[], [], []]
    for cls in (0, 1):
        members = np.flatnonzero(dataset.labels == cls)
        if members.size < len(ratios):
            raise DataError(
                f"{dataset.name}: class {cls} has {members.size} instances, "
                f"fewer than the {len(ratios)} partitions"
            )
        counts = apportion(members.size, ratios)
        while min(counts) == 0:
            counts[int(np.argmax(counts))] -= 1
            counts[counts.index(0)] += 1
        shuffled = rng.permutation(members)
        bounds = np.cumsum([0] + counts)
        for k in range(3):
            parts[k].append(shuffled[bounds[k]:bounds[k + 1]])

    result = []
    for chunks in parts:
        idx = np.sort(np.concatenate(chunks))
        result.append(LabeledSet(features=dataset.features[idx], labels=dataset.labels[idx]))
    return result[0], result[1], result[2]


def mask_labels(pool: LabeledSet, q: float, seed: int = 0) -> Tuple[LabeledSet, np.ndarray]:
    """
    Hide the labels of round(q * |pool|) instances, stratified by class.

    Returns:
        Tuple of (labeled part, unlabeled feature matrix)

    Raises:
        DataError: q outside [0, 1)
    """
    if not 0.0 <= q < 1.0:
        raise DataError(f"q must lie in [0, 1), got {q}")

    n_unlabeled = int(math.floor(q * pool.size + 0.5))
    counts = pool.class_counts()
    per_class = apportion(n_unlabeled, counts) if n_unlabeled else [0, 0]

    rng = np.random.default_rng(seed)
    hidden = []
    for cls in (0, 1):
        members = np.flatnonzero(pool.labels == cls)
        hidden.append(rng.permutation(members)[:per_class[cls]])
    hidden_idx = np.sort(np.concatenate(hidden)).astype(int)
    keep = np.ones(pool.size, dtype=bool)
    keep[hidden_idx] = False

    labeled = LabeledSet(features=pool.features[keep], labels=pool.labels[keep])
    return labeled, pool.features[hidden_idx]


def standardize(splits: DatasetSplit) -> DatasetSplit:
    """
    Zero-mean, unit-variance features using statistics of all training
    features (labeled and unlabeled). Constant columns are only shifted.
    """
    train_features = np.vstack([splits.train_labeled.features, splits.train_unlabeled])
    mean = train_features.mean(axis=0)
    std = train_features.std(axis=0)
    scale = np.where(std > 0, std, 1.0)

    def _apply(x: np.ndarray) -> np.ndarray:
        return (x - mean) / scale

    return DatasetSplit(
        train_labeled=LabeledSet(_apply(splits.train_labeled.features), splits.train_labeled.labels),
        train_unlabeled=_apply(splits.train_unlabeled),
        val=LabeledSet(_apply(splits.val.features), splits.val.labels),
        test_set=LabeledSet(_apply(splits.test_set.features), splits.test_set.labels),
        q=splits.q,
        name=splits.name,
    )


def prepare_splits(
    dataset: Dataset,
    q: float,
    seed: int,
    ratios: Sequence[float] = DEFAULT_RATIOS
) -> DatasetSplit:
    """Split, mask and standardize in one call."""
    pool, val, test = split(dataset, ratios, seed)
    labeled, unlabeled = mask_labels(pool, q, seed)
    if labeled.size == 0:
        raise DataError(f"{dataset.name}: no labeled instances left at q={q}")
    raw = DatasetSplit(
        train_labeled=labeled,
        train_unlabeled=unlabeled.reshape(-1, dataset.n_features),
        val=val,
        test_set=test,
        q=q,
        name=dataset.name,
    )
    return standardize(raw)
