"""Shared fixtures: separable blobs, small splits, tiny descriptors."""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from neuroevo.data import Dataset, prepare_splits
from neuroevo.descriptor import Activation, Initializer, NetworkDescriptor
from neuroevo.nn import TrainConfig
from neuroevo.observability import configure_observability


def make_blobs(n: int = 200, seed: int = 0, margin: float = 3.0) -> Dataset:
    """Two Gaussian blobs on either side of x0 + x1 = 0, at least `margin` apart."""
    rng = np.random.default_rng(seed)
    half = n // 2
    centers = np.array([[-2.0, -2.0], [2.0, 2.0]])
    points, labels = [], []
    for cls in (0, 1):
        drawn = []
        while len(drawn) < half:
            p = centers[cls] + rng.normal(0.0, 0.7, size=2)
            # keep a gap around the separating line
            if (p.sum() if cls == 1 else -p.sum()) >= margin / 2:
                drawn.append(p)
        points.extend(drawn)
        labels.extend([cls] * half)
    return Dataset(features=np.array(points), labels=np.array(labels, dtype=np.int64), name="blobs")


def descriptor_of(*widths: int, activation: Activation = Activation.TANH,
                  initializer: Initializer = Initializer.XAVIER,
                  dropout: bool = False, batch_norm: bool = False) -> NetworkDescriptor:
    return NetworkDescriptor(
        hidden_widths=tuple(widths),
        activations=(activation,) * len(widths),
        initializers=(initializer,) * len(widths),
        dropout_flags=(dropout,) * len(widths),
        batchnorm_flags=(batch_norm,) * len(widths),
    )


def write_tsv(path: Path, features: np.ndarray, labels: np.ndarray) -> Path:
    frame = pd.DataFrame(features, columns=[f"f{i}" for i in range(features.shape[1])])
    frame["target"] = labels
    frame.to_csv(path, sep="\t", index=False)
    return path


@pytest.fixture(autouse=True)
def quiet_observability():
    """Fresh in-memory observability stack per test."""
    return configure_observability(None, echo=False)


@pytest.fixture
def blobs() -> Dataset:
    return make_blobs()


@pytest.fixture
def blob_splits(blobs):
    return prepare_splits(blobs, q=0.0, seed=0)


@pytest.fixture
def semi_splits(blobs):
    return prepare_splits(blobs, q=0.4, seed=0)


@pytest.fixture
def small_descriptor() -> NetworkDescriptor:
    return descriptor_of(4)


@pytest.fixture
def fast_train() -> TrainConfig:
    return TrainConfig(epochs=15, batch_size=10, learning_rate=0.05)


@pytest.fixture
def blob_cache(tmp_path, blobs) -> Path:
    """A PMLB-style cache directory holding the blob problem as `blobs.tsv`."""
    cache = tmp_path / "cache"
    cache.mkdir()
    write_tsv(cache / "blobs.tsv", blobs.features, blobs.labels)
    return cache
