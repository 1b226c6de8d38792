"""
Neuron Coverage Metrics v1.0

Activation-bound profiling and five coverage metrics over hidden neurons:
- NC    fraction of neurons whose output exceeds t on some instance
- TKNC  fraction of neurons ever among the top-K of their layer
- KMN   fraction of the k equal sections of [L_c, H_c] hit
- NBC   fraction of the 2N corner regions (below L_c, above H_c) reached
- SNAC  fraction of neurons pushed above H_c

KMN divides the total of covered sections by k * N once. The printed
formula it comes from divides by k twice; that extra factor is treated as
a typo.

All metrics are pure functions of immutable inputs.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from neuroevo.errors import CoverageError
from neuroevo.nn import ActivationTrace, Network, forward


class CoverageMetric(Enum):
    NC = "NC"
    TKNC = "TKNC"
    KMN = "KMN"
    NBC = "NBC"
    SNAC = "SNAC"


class CoverageConfig(BaseModel):
    """Metric selection and its parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    metric: CoverageMetric = Field(default=CoverageMetric.NC, description="Metric used as NNCov")
    threshold: float = Field(default=0.0, description="NC activation threshold t")
    top_k: int = Field(default=1, ge=1, description="TKNC top-K per layer")
    sections: int = Field(default=100, ge=1, description="KMN sections k")


@dataclass(frozen=True)
class ActivationProfile:
    """Per-neuron bounds L_c / H_c observed on a reference set."""
    lower: np.ndarray
    upper: np.ndarray
    source_size: int

    @property
    def neuron_count(self) -> int:
        return int(self.lower.shape[0])


def _check_trace(trace: ActivationTrace) -> np.ndarray:
    if trace.size == 0 or trace.neuron_count == 0:
        raise CoverageError("coverage requires a non-empty trace")
    return trace.values


def _check_profile(trace: ActivationTrace, profile: ActivationProfile) -> np.ndarray:
    values = _check_trace(trace)
    if profile.lower.shape != (trace.neuron_count,) or profile.upper.shape != (trace.neuron_count,):
        raise CoverageError(
            f"profile covers {profile.neuron_count} neurons but trace has {trace.neuron_count}"
        )
    return values


def profile_from_trace(trace: ActivationTrace) -> ActivationProfile:
    values = _check_trace(trace)
    return ActivationProfile(
        lower=values.min(axis=0),
        upper=values.max(axis=0),
        source_size=trace.size,
    )


def profile_bounds(network: Network, reference: np.ndarray) -> ActivationProfile:
    """
    Learn L_c and H_c as column-wise min/max of the inference trace.

    Raises:
        CoverageError: empty reference set
    """
    reference = np.asarray(reference, dtype=np.float64)
    if reference.ndim != 2 or reference.shape[0] == 0:
        raise CoverageError("profiling requires a non-empty reference set")
    _, trace = forward(network, reference, trace=True)
    return profile_from_trace(trace)


def nc(trace: ActivationTrace, t: float) -> float:
    """Neuron coverage: |{c : some instance has phi > t}| / N."""
    values = _check_trace(trace)
    return float(np.count_nonzero((values > t).any(axis=0)) / trace.neuron_count)


def tknc(trace: ActivationTrace, k: int) -> float:
    """
    Top-K neuron coverage.

    Top-K is taken per layer and per instance on signed post-activation
    values; ties go to the lower neuron index.
    """
    if k < 1:
        raise CoverageError(f"top_k must be >= 1, got {k}")
    values = _check_trace(trace)
    covered = np.zeros(trace.neuron_count, dtype=bool)
    for block_slice in trace.layer_slices():
        block = values[:, block_slice]
        width = block.shape[1]
        if k >= width:
            covered[block_slice] = True
            continue
        # stable sort on negated values keeps the lower index first among ties
        top = np.argsort(-block, axis=1, kind="stable")[:, :k]
        layer_covered = np.zeros(width, dtype=bool)
        layer_covered[np.unique(top)] = True
        covered[block_slice] = layer_covered
    return float(np.count_nonzero(covered) / trace.neuron_count)


def section_hits(trace: ActivationTrace, profile: ActivationProfile, k: int) -> np.ndarray:
    """
    Boolean (N x k) matrix of KMN sections hit by the trace.

    Section s of neuron c is [L_c + s*d, L_c + (s+1)*d) with d = (H_c - L_c)/k;
    the last section is closed at H_c. A degenerate range L_c = H_c has only
    its first section, hit by a value equal to L_c.
    """
    if k < 1:
        raise CoverageError(f"sections must be >= 1, got {k}")
    values = _check_profile(trace, profile)
    lower, upper = profile.lower, profile.upper
    delta = (upper - lower) / k
    inside = (values >= lower) & (values <= upper)

    # interior edges L + s*d for s = 1..k-1
    edges = lower[:, None] + np.arange(1, k)[None, :] * delta[:, None]
    section = (values[:, :, None] >= edges[None, :, :]).sum(axis=2)
    section = np.where(upper > lower, section, 0)

    hits = np.zeros((trace.neuron_count, k), dtype=bool)
    rows, cols = np.nonzero(inside)
    hits[cols, section[rows, cols]] = True
    return hits


def kmn(trace: ActivationTrace, profile: ActivationProfile, k: int) -> float:
    """k-multisection coverage: covered sections / (k * N)."""
    hits = section_hits(trace, profile, k)
    return float(np.count_nonzero(hits) / (k * trace.neuron_count))


def corner_regions(trace: ActivationTrace, profile: ActivationProfile):
    """Return (LCN mask, UCN mask): neurons escaping strictly below L_c / above H_c."""
    values = _check_profile(trace, profile)
    return (values < profile.lower).any(axis=0), (values > profile.upper).any(axis=0)


def nbc(trace: ActivationTrace, profile: ActivationProfile) -> float:
    """Neuron boundary coverage: (|LCN| + |UCN|) / 2N."""
    lcn, ucn = corner_regions(trace, profile)
    return float((np.count_nonzero(lcn) + np.count_nonzero(ucn)) / (2 * trace.neuron_count))


def snac(trace: ActivationTrace, profile: ActivationProfile) -> float:
    """Strong neuron activation coverage: |UCN| / N."""
    _, ucn = corner_regions(trace, profile)
    return float(np.count_nonzero(ucn) / trace.neuron_count)


def metric_on_trace(
    config: CoverageConfig,
    trace: ActivationTrace,
    profile: Optional[ActivationProfile]
) -> float:
    """Dispatch to the configured metric on an existing trace."""
    if config.metric is CoverageMetric.NC:
        return nc(trace, config.threshold)
    if config.metric is CoverageMetric.TKNC:
        return tknc(trace, config.top_k)
    if profile is None:
        raise CoverageError(f"{config.metric.value} requires an activation profile")
    if config.metric is CoverageMetric.KMN:
        return kmn(trace, profile, config.sections)
    if config.metric is CoverageMetric.NBC:
        return nbc(trace, profile)
    return snac(trace, profile)


def coverage(
    config: CoverageConfig,
    network: Network,
    profile: Optional[ActivationProfile],
    inputs: np.ndarray
) -> float:
    """
    NNCov of a network on an input set.

    Args:
        config: Metric and its parameters
        network: Trained network
        profile: Bounds learned on the reference set (KMN/NBC/SNAC only)
        inputs: Instances to trace, e.g. the unlabeled training set

    Returns:
        Coverage ratio in [0, 1]
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise CoverageError("coverage requires a non-empty input set")
    _, trace = forward(network, inputs, trace=True)
    return metric_on_trace(config, trace, profile)


def all_metrics(
    trace: ActivationTrace,
    profile: ActivationProfile,
    config: Optional[CoverageConfig] = None
) -> Dict[str, float]:
    """Every metric on one trace, keyed by metric name."""
    config = config or CoverageConfig()
    return {
        metric.value: metric_on_trace(config.model_copy(update={"metric": metric}), trace, profile)
        for metric in CoverageMetric
    }
