import numpy as np
import pytest

from neuroevo.coverage import (
    ActivationProfile,
    CoverageConfig,
    CoverageMetric,
    all_metrics,
    coverage,
    kmn,
    metric_on_trace,
    nbc,
    nc,
    profile_bounds,
    profile_from_trace,
    snac,
    tknc,
)
from neuroevo.descriptor import Activation, SearchConstraints, random_descriptor
from neuroevo.errors import CoverageError
from neuroevo.nn import ActivationTrace, build_network, forward

from conftest import descriptor_of


def trace_of(values, widths=None) -> ActivationTrace:
    values = np.asarray(values, dtype=np.float64)
    widths = widths or [values.shape[1]]
    offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(widths)]))
    return ActivationTrace(values=values, offsets=offsets)


def profile_of(lower, upper) -> ActivationProfile:
    return ActivationProfile(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float), source_size=1)


# =========================================================================
# Brute-force enumerators: plain loops over instances, neurons and sections
# =========================================================================

def brute_nc(values, t):
    n_inst, n_neurons = values.shape
    covered = 0
    for c in range(n_neurons):
        if any(values[i, c] > t for i in range(n_inst)):
            covered += 1
    return covered, n_neurons


def brute_tknc(values, widths, k):
    covered = set()
    start = 0
    for width in widths:
        for i in range(values.shape[0]):
            ranked = sorted(range(width), key=lambda p: (-values[i, start + p], p))
            covered.update(start + p for p in ranked[:k])
        start += width
    return len(covered), values.shape[1]


def brute_kmn(values, lower, upper, k):
    hit = 0
    for c in range(values.shape[1]):
        low, high = lower[c], upper[c]
        delta = (high - low) / k
        for s in range(k):
            if low == high:
                inside = s == 0 and any(v == low for v in values[:, c])
            else:
                lo = low + s * delta
                hi = low + (s + 1) * delta
                if s == k - 1:
                    inside = any(lo <= v <= high for v in values[:, c])
                else:
                    inside = any(lo <= v < hi and v <= high for v in values[:, c])
            hit += bool(inside)
    return hit, k * values.shape[1]


def brute_corners(values, lower, upper):
    below = sum(1 for c in range(values.shape[1]) if any(v < lower[c] for v in values[:, c]))
    above = sum(1 for c in range(values.shape[1]) if any(v > upper[c] for v in values[:, c]))
    return below, above


class TestMetricsAgainstBruteForce:
    def test_random_networks(self):
        rng = np.random.default_rng(12345)
        constraints = SearchConstraints(max_depth=3, max_width=5)
        for case in range(200):
            d = random_descriptor(constraints, rng)
            net = build_network(d, 3, seed=case)
            reference = rng.normal(size=(int(rng.integers(1, 11)), 3))
            batch = rng.normal(size=(int(rng.integers(1, 11)), 3))
            # reuse some reference rows so values land exactly on the bounds
            batch[: min(2, len(batch), len(reference))] = reference[: min(2, len(batch), len(reference))]
            profile = profile_bounds(net, reference)
            _, trace = forward(net, batch, trace=True)
            values = trace.values
            n = trace.neuron_count
            t = float(rng.choice([0.0, 0.25, -0.5]))
            top_k = int(rng.integers(1, 4))
            k = int(rng.integers(1, 6))

            covered, total = brute_nc(values, t)
            assert nc(trace, t) == covered / total

            covered, total = brute_tknc(values, trace.layer_widths, top_k)
            assert tknc(trace, top_k) == covered / total

            covered, total = brute_kmn(values, profile.lower, profile.upper, k)
            assert kmn(trace, profile, k) == covered / total

            below, above = brute_corners(values, profile.lower, profile.upper)
            assert nbc(trace, profile) == (below + above) / (2 * n)
            assert snac(trace, profile) == above / n


class TestCoverageProperties:
    """Seeded checks over random architectures of the orderings every metric must respect."""

    @staticmethod
    def cases(count=100, seed=2024):
        rng = np.random.default_rng(seed)
        constraints = SearchConstraints(max_depth=3, max_width=6)
        for case in range(count):
            net = build_network(random_descriptor(constraints, rng), 3, seed=case)
            profile = profile_bounds(net, rng.normal(size=(int(rng.integers(2, 12)), 3)))
            batch = rng.normal(scale=1.5, size=(int(rng.integers(1, 10)), 3))
            extra = rng.normal(scale=1.5, size=(int(rng.integers(1, 10)), 3))
            yield net, profile, batch, extra

    def test_adding_instances_never_lowers_coverage(self):
        config = CoverageConfig(threshold=0.1, top_k=2, sections=5)
        for net, profile, batch, extra in self.cases():
            _, small = forward(net, batch, trace=True)
            _, large = forward(net, np.vstack([batch, extra]), trace=True)
            before = all_metrics(small, profile, config)
            after = all_metrics(large, profile, config)
            for name, value in before.items():
                assert after[name] >= value, name

    def test_nc_non_increasing_in_threshold(self):
        thresholds = [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0]
        for net, _, batch, _ in self.cases():
            _, trace = forward(net, batch, trace=True)
            values = [nc(trace, t) for t in thresholds]
            assert all(b <= a for a, b in zip(values, values[1:])), values

    def test_tknc_non_decreasing_in_k(self):
        for net, _, batch, _ in self.cases():
            _, trace = forward(net, batch, trace=True)
            values = [tknc(trace, k) for k in range(1, 8)]
            assert all(b >= a for a, b in zip(values, values[1:])), values
            assert values[-1] == 1.0

    def test_single_section_bounds_kmn(self):
        for net, profile, batch, _ in self.cases():
            _, trace = forward(net, batch, trace=True)
            single = kmn(trace, profile, 1)
            for k in (2, 3, 10, 100):
                assert kmn(trace, profile, k) <= single

    def test_metrics_stay_in_unit_interval(self):
        for net, profile, batch, _ in self.cases(count=50):
            _, trace = forward(net, batch, trace=True)
            assert all(0.0 <= v <= 1.0 for v in all_metrics(trace, profile).values())


class TestProfile:
    def test_single_instance(self):
        net = build_network(descriptor_of(3, 2), 4, seed=0)
        x = np.random.default_rng(0).normal(size=(1, 4))
        profile = profile_bounds(net, x)
        _, trace = forward(net, x, trace=True)
        assert np.array_equal(profile.lower, trace.values[0])
        assert np.array_equal(profile.upper, trace.values[0])
        assert profile.source_size == 1

    def test_columnwise_min_max(self):
        net = build_network(descriptor_of(4, 3, activation=Activation.SOFTPLUS), 2, seed=1)
        x = np.random.default_rng(1).normal(size=(5, 2))
        _, trace = forward(net, x, trace=True)
        profile = profile_bounds(net, x)
        assert np.array_equal(profile.lower, trace.values.min(axis=0))
        assert np.array_equal(profile.upper, trace.values.max(axis=0))
        assert np.all(profile.lower <= profile.upper)

    def test_constant_neuron(self):
        net = build_network(descriptor_of(1, activation=Activation.IDENTITY), 3, seed=0)
        net.layers[0].weights[...] = 0.0
        net.layers[0].biases[...] = 0.7
        profile = profile_bounds(net, np.random.default_rng(2).normal(size=(6, 3)))
        assert profile.lower[0] == profile.upper[0] == 0.7

    def test_empty_reference(self):
        net = build_network(descriptor_of(2), 3, seed=0)
        with pytest.raises(CoverageError):
            profile_bounds(net, np.zeros((0, 3)))


class TestHandCases:
    def test_nc_two_of_four(self):
        trace = trace_of([[0.5, -1.0, 0.0, 2.0], [-0.1, -0.2, 0.0, 0.3]])
        assert nc(trace, 0.0) == 0.5

    def test_nc_nothing_activated(self):
        assert nc(trace_of([[0.0, -1.0]]), 0.0) == 0.0

    def test_nc_sigmoid_network_negative_threshold(self):
        net = build_network(descriptor_of(3, 2, activation=Activation.SIGMOID), 2, seed=0)
        _, trace = forward(net, np.random.default_rng(0).normal(size=(4, 2)), trace=True)
        assert nc(trace, -1.0) == 1.0

    def test_tknc_k_covers_widest_layer(self):
        trace = trace_of([[1.0, 2.0, 3.0, 0.0, 1.0]], widths=[3, 2])
        assert tknc(trace, 3) == 1.0

    def test_tknc_single_instance(self):
        trace = trace_of([[1.0, 2.0, 3.0, 0.0, 1.0]], widths=[3, 2])
        assert tknc(trace, 1) == pytest.approx(2 / 5, abs=0)

    def test_tknc_disjoint_argmax(self):
        trace = trace_of([[1.0, 0.0], [0.0, 1.0]])
        assert tknc(trace, 1) == 1.0

    def test_tknc_ties_go_to_lower_index(self):
        trace = trace_of([[1.0, 1.0, 1.0]])
        assert tknc(trace, 1) == pytest.approx(1 / 3, abs=0)

    def test_kmn_outside_everything(self):
        trace = trace_of([[2.0, -3.0]])
        assert kmn(trace, profile_of([0, 0], [1, 1]), 4) == 0.0

    def test_kmn_both_halves(self):
        assert kmn(trace_of([[0.25], [0.75]]), profile_of([0], [1]), 2) == 1.0

    def test_kmn_lower_halves_only(self):
        trace = trace_of([[0.1, 0.4], [0.2, 0.0]])
        assert kmn(trace, profile_of([0, 0], [1, 1]), 2) == 0.5

    def test_kmn_upper_bound_closed(self):
        assert kmn(trace_of([[1.0]]), profile_of([0], [1]), 4) == 0.25

    def test_kmn_degenerate_range(self):
        profile = profile_of([0.5], [0.5])
        assert kmn(trace_of([[0.5]]), profile, 3) == pytest.approx(1 / 3, abs=0)
        assert kmn(trace_of([[0.6]]), profile, 3) == 0.0

    def test_nbc_identical_to_profiling_set(self):
        values = np.random.default_rng(0).normal(size=(6, 4))
        trace = trace_of(values)
        profile = profile_from_trace(trace)
        assert nbc(trace, profile) == 0.0
        assert snac(trace, profile) == 0.0

    def test_nbc_one_above_one_below(self):
        trace = trace_of([[1.5, -0.5]])
        assert nbc(trace, profile_of([0, 0], [1, 1])) == 0.5

    def test_nbc_all_corners(self):
        trace = trace_of([[2.0, 2.0], [-1.0, -1.0]])
        assert nbc(trace, profile_of([0, 0], [1, 1])) == 1.0

    def test_snac_one_of_four(self):
        trace = trace_of([[0.5, 1.5, -2.0, 1.0]])
        profile = profile_of([0, 0, 0, 0], [1, 1, 1, 1])
        assert snac(trace, profile) == 0.25
        assert snac(trace, profile) <= 2 * nbc(trace, profile)

    def test_mismatched_profile(self):
        with pytest.raises(CoverageError):
            kmn(trace_of([[0.1, 0.2]]), profile_of([0], [1]), 2)

    def test_empty_trace(self):
        with pytest.raises(CoverageError):
            nc(trace_of(np.zeros((0, 3))), 0.0)


class TestDispatch:
    def test_coverage_sigmoid_network_nc(self):
        net = build_network(descriptor_of(3, activation=Activation.SIGMOID), 2, seed=0)
        x = np.random.default_rng(0).normal(size=(5, 2))
        assert coverage(CoverageConfig(metric=CoverageMetric.NC), net, None, x) == 1.0

    @pytest.mark.parametrize("metric", list(CoverageMetric))
    def test_dispatch_matches_direct_call(self, metric):
        net = build_network(descriptor_of(4, 3, activation=Activation.RELU), 2, seed=3)
        rng = np.random.default_rng(3)
        profile = profile_bounds(net, rng.normal(size=(8, 2)))
        x = rng.normal(size=(6, 2))
        _, trace = forward(net, x, trace=True)
        config = CoverageConfig(metric=metric, threshold=0.1, top_k=2, sections=10)
        direct = {
            CoverageMetric.NC: lambda: nc(trace, 0.1),
            CoverageMetric.TKNC: lambda: tknc(trace, 2),
            CoverageMetric.KMN: lambda: kmn(trace, profile, 10),
            CoverageMetric.NBC: lambda: nbc(trace, profile),
            CoverageMetric.SNAC: lambda: snac(trace, profile),
        }[metric]()
        value = coverage(config, net, profile, x)
        assert value == direct
        assert 0.0 <= value <= 1.0
        assert metric_on_trace(config, trace, profile) == direct

    def test_all_metrics_keys(self):
        trace = trace_of([[0.5, 1.5]])
        values = all_metrics(trace, profile_of([0, 0], [1, 1]))
        assert set(values) == {"NC", "TKNC", "KMN", "NBC", "SNAC"}
        assert values["SNAC"] == 0.5

    def test_boundary_metric_needs_profile(self):
        with pytest.raises(CoverageError):
            metric_on_trace(CoverageConfig(metric=CoverageMetric.KMN), trace_of([[0.1]]), None)
