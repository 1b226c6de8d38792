import numpy as np
import pytest
from pydantic import ValidationError

from neuroevo.descriptor import ACTIVATIONS, Activation, Initializer, SearchConstraints, random_descriptor
from neuroevo.errors import DescriptorError, ShapeError, TrainingError
from neuroevo.nn import (
    BN_EPSILON,
    Optimizer,
    TrainConfig,
    build_network,
    dump_weights,
    format_weights,
    forward,
    predict_proba,
    train,
)

from conftest import descriptor_of


def zero_out(network):
    for param in network.parameters().values():
        param[...] = 0.0


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    diff = np.linalg.norm(analytic - numeric)
    if scale < 1e-7:
        return diff
    return diff / scale


def move_off_kinks(network, rng):
    """
    Give every bias and batch-norm shift a value away from 0.

    Dropout can zero a whole input row, which leaves the pre-activation
    exactly at the bias; at 0 a central difference straddles the ReLU kink.
    """
    for name, param in network.parameters().items():
        if name.endswith(("biases", "beta")):
            param[...] = rng.uniform(0.05, 0.2, size=param.shape) * rng.choice([-1.0, 1.0], size=param.shape)


def numeric_gradient(network, x, y, name, dropout_seed, h=1e-5):
    param = network.parameters()[name]
    grad = np.zeros_like(param)
    for idx in np.ndindex(param.shape):
        original = param[idx]
        param[idx] = original + h
        plus = network.loss(x, y, dropout_seed)
        param[idx] = original - h
        minus = network.loss(x, y, dropout_seed)
        param[idx] = original
        grad[idx] = (plus - minus) / (2 * h)
    return grad


class TestBuildNetwork:
    def test_shapes_chain(self):
        net = build_network(descriptor_of(3, 2), input_dim=4, seed=7)
        shapes = [layer.weights.shape for layer in net.all_layers]
        assert shapes == [(4, 3), (3, 2), (2, 1)]
        assert net.hidden_count == 5

    def test_deterministic_weights(self):
        d = descriptor_of(5, 3, initializer=Initializer.UNIFORM)
        a = build_network(d, 6, seed=11)
        b = build_network(d, 6, seed=11)
        for name, value in a.parameters().items():
            assert np.array_equal(value, b.parameters()[name])

    def test_too_deep_descriptor_rejected(self):
        with pytest.raises(DescriptorError, match="depth 9 exceeds max_depth 8"):
            build_network(descriptor_of(*([2] * 9)), 3, seed=0)

    def test_wider_constraints_accepted(self):
        net = build_network(descriptor_of(12), 3, seed=0, constraints=SearchConstraints(max_width=16))
        assert net.layer_widths == [12]

    def test_initializer_scales(self):
        rng_widths = descriptor_of(8, initializer=Initializer.UNIFORM)
        weights = build_network(rng_widths, 200, seed=0).layers[0].weights
        assert np.abs(weights).max() <= 0.05
        normal = build_network(descriptor_of(8, initializer=Initializer.NORMAL), 200, seed=0).layers[0].weights
        assert abs(normal.std() - 0.05) < 0.005


class TestForward:
    def test_zeroed_network_outputs_half(self):
        net = build_network(descriptor_of(3, 2, activation=Activation.RELU), 4, seed=0)
        zero_out(net)
        probs, _ = forward(net, np.random.default_rng(0).normal(size=(7, 4)))
        assert np.all(probs == 0.5)

    def test_identity_layer_traces_input(self):
        net = build_network(descriptor_of(3, activation=Activation.IDENTITY), 3, seed=0)
        net.layers[0].weights[...] = np.eye(3)
        x = np.array([[0.5, -1.0, 2.0]])
        _, trace = forward(net, x, trace=True)
        assert np.array_equal(trace.values, x)

    def test_trace_matches_hand_computation(self):
        net = build_network(descriptor_of(3, 2), 4, seed=5)
        net.layers[1].activation = Activation.RELU
        x = np.random.default_rng(1).normal(size=(1, 4))
        l0, l1, head = net.all_layers
        h0 = np.tanh(x @ l0.weights + l0.biases)
        h1 = np.maximum(h0 @ l1.weights + l1.biases, 0.0)
        p = 1.0 / (1.0 + np.exp(-(h1 @ head.weights + head.biases)))
        probs, trace = forward(net, x, trace=True)
        assert trace.layer_widths == [3, 2]
        assert np.allclose(trace.values, np.hstack([h0, h1]), atol=1e-12, rtol=0)
        assert np.allclose(probs, p.ravel(), atol=1e-12, rtol=0)

    def test_trace_is_repeatable_with_dropout(self):
        net = build_network(descriptor_of(4, 4, dropout=True, batch_norm=True), 2, seed=3)
        x = np.random.default_rng(2).normal(size=(9, 2))
        _, first = forward(net, x, trace=True)
        _, second = forward(net, x, trace=True)
        assert np.array_equal(first.values, second.values)

    def test_predict_proba_matches_forward(self):
        net = build_network(descriptor_of(4, 2, activation=Activation.ELU), 3, seed=1)
        x = np.random.default_rng(3).normal(size=(12, 3))
        probs, _ = forward(net, x, trace=False)
        assert np.array_equal(predict_proba(net, x), probs)
        assert np.all((probs > 0) & (probs < 1))

    def test_shape_mismatch(self):
        net = build_network(descriptor_of(2), 3, seed=0)
        with pytest.raises(ShapeError):
            forward(net, np.zeros((5, 4)))

    def test_batch_norm_identity_equals_plain_layer(self):
        x = np.random.default_rng(4).normal(size=(6, 3))
        with_bn = build_network(descriptor_of(4, batch_norm=True), 3, seed=9)
        plain = build_network(descriptor_of(4, batch_norm=False), 3, seed=9)
        bn = with_bn.layers[0].batch_norm
        bn.running_var[...] = 1.0 - BN_EPSILON
        _, traced_bn = forward(with_bn, x, trace=True)
        _, traced_plain = forward(plain, x, trace=True)
        assert np.allclose(traced_bn.values, traced_plain.values, atol=1e-12, rtol=0)


class TestGradients:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        constraints = SearchConstraints(max_depth=3, max_width=8)
        seen_activations = set()
        seen_flags = set()
        for trial in range(50):
            d = random_descriptor(constraints, rng)
            seen_activations.update(d.activations)
            seen_flags.update(zip(d.dropout_flags, d.batchnorm_flags))
            net = build_network(d, 3, seed=trial)
            move_off_kinks(net, np.random.default_rng(1000 + trial))
            x = rng.normal(size=(16, 3))
            y = (rng.random(16) < 0.5).astype(float)
            _, analytic = net.gradients(x, y, dropout_seed=trial)
            assert set(analytic) == set(net.parameters())
            for name in analytic:
                numeric = numeric_gradient(net, x, y, name, dropout_seed=trial)
                assert relative_error(analytic[name], numeric) < 1e-4, (trial, name, d.to_text())
        assert seen_activations == set(ACTIVATIONS)
        assert seen_flags == {(False, False), (False, True), (True, False), (True, True)}


class TestTrain:
    def test_learns_separable_blobs(self, blobs):
        net = build_network(descriptor_of(4), 2, seed=0)
        trained = train(net, blobs.features, blobs.labels, TrainConfig(epochs=50, learning_rate=0.05))
        accuracy = np.mean((predict_proba(trained, blobs.features) >= 0.5) == blobs.labels)
        assert accuracy >= 0.95

    def test_input_network_untouched(self, blobs):
        net = build_network(descriptor_of(3), 2, seed=0)
        before = {k: v.copy() for k, v in net.parameters().items()}
        train(net, blobs.features, blobs.labels, TrainConfig(epochs=2))
        for name, value in net.parameters().items():
            assert np.array_equal(value, before[name])
        assert net.loss_history == []

    def test_deterministic(self, blobs):
        d = descriptor_of(4, 3, dropout=True, batch_norm=True)
        config = TrainConfig(epochs=3, learning_rate=0.01, optimizer=Optimizer.MOMENTUM, seed=4)
        a = train(build_network(d, 2, seed=1), blobs.features, blobs.labels, config)
        b = train(build_network(d, 2, seed=1), blobs.features, blobs.labels, config)
        assert a.loss_history == b.loss_history
        for name, value in a.parameters().items():
            assert np.array_equal(value, b.parameters()[name])

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_loss_non_increasing_early(self, blobs, seed):
        net = build_network(descriptor_of(4), 2, seed=seed)
        trained = train(net, blobs.features, blobs.labels, TrainConfig(epochs=5, learning_rate=1e-3, seed=seed))
        assert len(trained.loss_history) == 5
        assert np.all(np.diff(trained.loss_history) <= 1e-12)

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValidationError):
            TrainConfig(epochs=0)

    def test_overflowing_weights_raise_training_error(self, blobs):
        net = build_network(descriptor_of(8, 8, activation=Activation.IDENTITY), 2, seed=0)
        for param in net.parameters().values():
            param[...] = 1e200
        with pytest.raises(TrainingError) as info:
            train(net, blobs.features, blobs.labels, TrainConfig(epochs=20))
        assert info.value.epoch == 0
        assert info.value.batch == 0

    def test_huge_learning_rate_raises_training_error(self, blobs):
        net = build_network(descriptor_of(8, 8, activation=Activation.IDENTITY), 2, seed=0)
        with pytest.raises(TrainingError):
            train(net, blobs.features * 1e150, blobs.labels, TrainConfig(epochs=3, learning_rate=1e300))

    def test_rejects_non_binary_labels(self, blobs):
        net = build_network(descriptor_of(2), 2, seed=0)
        with pytest.raises(ValueError):
            train(net, blobs.features, blobs.labels * 2, TrainConfig(epochs=1))


def test_weight_dump(tmp_path):
    net = build_network(descriptor_of(3, 2), 4, seed=0)
    text = format_weights(net)
    lines = text.splitlines()
    assert lines[1] == "layer 0 4 3 tanh"
    # 4 weight rows + 1 bias row after the first header
    assert lines[7] == "layer 1 3 2 tanh"
    assert "layer head 2 1 sigmoid" in lines
    path = dump_weights(net, tmp_path / "weights.txt")
    assert path.read_text(encoding="utf-8") == text
