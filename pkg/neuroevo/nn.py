"""
Dense Feed-Forward Networks v1.0

From-scratch numpy MLP for binary classification:
- Construction from a NetworkDescriptor (per-layer initializers)
- Inference forward pass with optional per-neuron activation tracing
- Mini-batch gradient training on binary cross-entropy
- Analytic gradients for every parameter (used by gradient checks)

Layer order inside a hidden layer is fixed:
    affine -> batch-norm (optional) -> activation -> dropout (optional)

The output head is a single sigmoid unit. Hidden neurons only are traced;
the head never appears in an ActivationTrace.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from neuroevo.descriptor import (
    Activation,
    Initializer,
    NetworkDescriptor,
    SearchConstraints,
    ensure_valid,
)
from neuroevo.errors import ShapeError, TrainingError

DROPOUT_RATE = 0.5
BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5
ELU_ALPHA = 1.0
NORMAL_STDDEV = 0.05
UNIFORM_LIMIT = 0.05
SGD_MOMENTUM = 0.9


class Optimizer(Enum):
    """Parameter update rules."""
    SGD = "sgd"
    MOMENTUM = "momentum"


class TrainConfig(BaseModel):
    """Mini-batch training settings for one candidate."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=50, ge=1, description="Passes over the training data")
    batch_size: int = Field(default=10, ge=1, description="Instances per gradient step")
    learning_rate: float = Field(default=1e-3, gt=0.0, description="Step size")
    optimizer: Optimizer = Field(default=Optimizer.SGD, description="Update rule")
    seed: int = Field(default=0, description="Seed for batch order and dropout masks")


# =========================================================================
# Activation functions
# =========================================================================

def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function, written via tanh to stay overflow-free."""
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, ELU_ALPHA * np.expm1(np.minimum(z, 0.0)))


# Each entry: (f(z), f'(z) given z and a = f(z))
_ACTIVATION_TABLE: Dict[Activation, Tuple[Callable, Callable]] = {
    Activation.IDENTITY: (lambda z: z, lambda z, a: np.ones_like(z)),
    Activation.RELU: (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(z.dtype)),
    Activation.ELU: (_elu, lambda z, a: np.where(z > 0, 1.0, a + ELU_ALPHA)),
    Activation.SOFTPLUS: (lambda z: np.logaddexp(0.0, z), lambda z, a: sigmoid(z)),
    Activation.SOFTSIGN: (lambda z: z / (1.0 + np.abs(z)), lambda z, a: 1.0 / (1.0 + np.abs(z)) ** 2),
    Activation.SIGMOID: (sigmoid, lambda z, a: a * (1.0 - a)),
    Activation.TANH: (np.tanh, lambda z, a: 1.0 - a * a),
}


def activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    return _ACTIVATION_TABLE[kind][0](z)


def activation_derivative(kind: Activation, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return _ACTIVATION_TABLE[kind][1](z, a)


def init_weights(
    kind: Initializer,
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator
) -> np.ndarray:
    """Draw a (fan_in x fan_out) weight matrix from the named family."""
    if kind is Initializer.NORMAL:
        return rng.normal(0.0, NORMAL_STDDEV, size=(fan_in, fan_out))
    if kind is Initializer.UNIFORM:
        return rng.uniform(-UNIFORM_LIMIT, UNIFORM_LIMIT, size=(fan_in, fan_out))
    if kind is Initializer.XAVIER:
        return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))
    raise ValueError(f"Unknown initializer: {kind!r}")


# =========================================================================
# Layers
# =========================================================================

@dataclass
class BatchNormState:
    """Learned scale/shift plus running statistics for one layer."""
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON

    @classmethod
    def fresh(cls, width: int) -> "BatchNormState":
        return cls(
            gamma=np.ones(width),
            beta=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
        )

    def copy(self) -> "BatchNormState":
        return BatchNormState(
            gamma=self.gamma.copy(),
            beta=self.beta.copy(),
            running_mean=self.running_mean.copy(),
            running_var=self.running_var.copy(),
            momentum=self.momentum,
            epsilon=self.epsilon,
        )


@dataclass
class LayerCache:
    """Intermediate values kept by a training-mode forward pass."""
    x: np.ndarray
    x_hat: Optional[np.ndarray]
    inv_std: Optional[np.ndarray]
    u: np.ndarray
    a: np.ndarray
    mask: Optional[np.ndarray]


@dataclass
class DenseLayer:
    """Affine map followed by optional batch-norm, activation and optional dropout."""
    weights: np.ndarray
    biases: np.ndarray
    activation: Activation
    has_batch_norm: bool = False
    has_dropout: bool = False
    dropout_rate: float = DROPOUT_RATE
    batch_norm: Optional[BatchNormState] = None

    def __post_init__(self):
        if self.has_batch_norm and self.batch_norm is None:
            self.batch_norm = BatchNormState.fresh(self.width)

    @property
    def fan_in(self) -> int:
        return int(self.weights.shape[0])

    @property
    def width(self) -> int:
        return int(self.weights.shape[1])

    def copy(self) -> "DenseLayer":
        return DenseLayer(
            weights=self.weights.copy(),
            biases=self.biases.copy(),
            activation=self.activation,
            has_batch_norm=self.has_batch_norm,
            has_dropout=self.has_dropout,
            dropout_rate=self.dropout_rate,
            batch_norm=self.batch_norm.copy() if self.batch_norm is not None else None,
        )

    def infer(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode output: running statistics, no dropout."""
        u = x @ self.weights + self.biases
        if self.has_batch_norm:
            bn = self.batch_norm
            u = bn.gamma * (u - bn.running_mean) / np.sqrt(bn.running_var + bn.epsilon) + bn.beta
        return activate(self.activation, u)

    def forward_train(
        self,
        x: np.ndarray,
        rng: Optional[np.random.Generator],
        update_stats: bool
    ) -> Tuple[np.ndarray, LayerCache]:
        """
        Training-mode output using batch statistics.

        Args:
            x: Layer input (batch x fan_in)
            rng: Source of dropout masks; None disables dropout
            update_stats: Fold the batch statistics into the running ones

        Returns:
            Tuple of (output, cache for backward)
        """
        z = x @ self.weights + self.biases
        x_hat = inv_std = None
        if self.has_batch_norm:
            bn = self.batch_norm
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + bn.epsilon)
            x_hat = (z - mean) * inv_std
            u = bn.gamma * x_hat + bn.beta
            if update_stats:
                bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean
                bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * var
        else:
            u = z
        a = activate(self.activation, u)

        mask = None
        out = a
        if self.has_dropout and rng is not None:
            keep = 1.0 - self.dropout_rate
            mask = (rng.random(a.shape) < keep) / keep
            out = a * mask

        return out, LayerCache(x=x, x_hat=x_hat, inv_std=inv_std, u=u, a=a, mask=mask)

    def backward(self, grad_out: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        Backpropagate through dropout, activation, batch-norm and the affine map.

        Returns:
            Tuple of (gradient w.r.t. input, parameter gradients)
        """
        grad_a = grad_out * cache.mask if cache.mask is not None else grad_out
        grad_u = grad_a * activation_derivative(self.activation, cache.u, cache.a)

        grads: Dict[str, np.ndarray] = {}
        if self.has_batch_norm:
            bn = self.batch_norm
            grads["gamma"] = (grad_u * cache.x_hat).sum(axis=0)
            grads["beta"] = grad_u.sum(axis=0)
            dx_hat = grad_u * bn.gamma
            m = dx_hat.shape[0]
            grad_z = (cache.inv_std / m) * (
                m * dx_hat
                - dx_hat.sum(axis=0)
                - cache.x_hat * (dx_hat * cache.x_hat).sum(axis=0)
            )
        else:
            grad_z = grad_u

        grads["weights"] = cache.x.T @ grad_z
        grads["biases"] = grad_z.sum(axis=0)
        return grad_z @ self.weights.T, grads

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {"weights": self.weights, "biases": self.biases}
        if self.has_batch_norm:
            params["gamma"] = self.batch_norm.gamma
            params["beta"] = self.batch_norm.beta
        return params


# =========================================================================
# Network
# =========================================================================

@dataclass(frozen=True)
class ActivationTrace:
    """
    Post-activation outputs of every hidden neuron for a batch.

    values[i, c] is the output of flat neuron c on instance i; layer j owns
    columns offsets[j]:offsets[j + 1].
    """
    values: np.ndarray
    offsets: Tuple[int, ...]

    @property
    def size(self) -> int:
        """Number of traced instances."""
        return int(self.values.shape[0])

    @property
    def neuron_count(self) -> int:
        return int(self.values.shape[1])

    @property
    def layer_widths(self) -> List[int]:
        return [b - a for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def layer_slices(self) -> List[slice]:
        return [slice(a, b) for a, b in zip(self.offsets[:-1], self.offsets[1:])]


@dataclass
class Network:
    """Materialized weights of a descriptor plus a sigmoid output head."""
    layers: List[DenseLayer]
    head: DenseLayer
    input_dim: int
    descriptor: Optional[NetworkDescriptor] = None
    loss_history: List[float] = field(default_factory=list)

    @property
    def output_dim(self) -> int:
        return 1

    @property
    def layer_widths(self) -> List[int]:
        return [layer.width for layer in self.layers]

    @property
    def hidden_count(self) -> int:
        """Total hidden neurons N."""
        return int(sum(self.layer_widths))

    @property
    def all_layers(self) -> List[DenseLayer]:
        return self.layers + [self.head]

    def copy(self) -> "Network":
        return Network(
            layers=[layer.copy() for layer in self.layers],
            head=self.head.copy(),
            input_dim=self.input_dim,
            descriptor=self.descriptor,
            loss_history=list(self.loss_history),
        )

    def parameters(self) -> Dict[str, np.ndarray]:
        """All trainable arrays keyed as `layer<j>.<name>` / `head.<name>`."""
        params: Dict[str, np.ndarray] = {}
        for j, layer in enumerate(self.layers):
            for name, value in layer.parameters().items():
                params[f"layer{j}.{name}"] = value
        for name, value in self.head.parameters().items():
            params[f"head.{name}"] = value
        return params

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters().values())

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ShapeError(
                f"expected a batch of shape (m, {self.input_dim}), got {batch.shape}"
            )
        return batch

    def logits(self, batch: np.ndarray) -> np.ndarray:
        """Inference-mode head pre-activations."""
        h = self._check_batch(batch)
        for layer in self.layers:
            h = layer.infer(h)
        return (h @ self.head.weights + self.head.biases).ravel()

    def _train_pass(
        self,
        x: np.ndarray,
        y: np.ndarray,
        rng: Optional[np.random.Generator],
        update_stats: bool
    ) -> Tuple[float, Dict[str, np.ndarray]]:
        """Training-mode forward and backward pass; returns (loss, gradients)."""
        m = x.shape[0]
        h = x
        caches = []
        for layer in self.layers:
            h, cache = layer.forward_train(h, rng, update_stats)
            caches.append(cache)
        s = (h @ self.head.weights + self.head.biases).ravel()
        loss = float(np.mean(np.logaddexp(0.0, s) - y * s))

        grads: Dict[str, np.ndarray] = {}
        grad_s = ((sigmoid(s) - y) / m)[:, None]
        grads["head.weights"] = h.T @ grad_s
        grads["head.biases"] = grad_s.sum(axis=0)
        grad_h = grad_s @ self.head.weights.T
        for j in range(len(self.layers) - 1, -1, -1):
            grad_h, layer_grads = self.layers[j].backward(grad_h, caches[j])
            for name, value in layer_grads.items():
                grads[f"layer{j}.{name}"] = value
        return loss, grads

    def loss(self, features: np.ndarray, labels: np.ndarray, dropout_seed: Optional[int] = None) -> float:
        """
        Training-mode binary cross-entropy without touching running statistics.

        Args:
            features: Batch (m x input_dim)
            labels: Targets in {0, 1}
            dropout_seed: Seed for a reproducible dropout mask; None disables dropout
        """
        x = self._check_batch(features)
        rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
        return self._train_pass(x, np.asarray(labels, dtype=np.float64), rng, update_stats=False)[0]

    def gradients(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        dropout_seed: Optional[int] = None
    ) -> Tuple[float, Dict[str, np.ndarray]]:
        """Analytic loss gradients, keyed like parameters(); running statistics untouched."""
        x = self._check_batch(features)
        rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
        return self._train_pass(x, np.asarray(labels, dtype=np.float64), rng, update_stats=False)


def build_network(
    descriptor: NetworkDescriptor,
    input_dim: int,
    seed: int,
    constraints: Optional[SearchConstraints] = None
) -> Network:
    """
    Materialize a descriptor.

    Args:
        descriptor: Architecture genome
        input_dim: Number of input features
        seed: Seed for weight draws
        constraints: Bounds to validate against (defaults to 8 x 8)

    Returns:
        Network whose hidden layer j is drawn by the descriptor's initializer j;
        biases start at zero and the sigmoid head uses xavier-normal weights.

    Raises:
        DescriptorError: descriptor violates its invariants
        ShapeError: input_dim < 1
    """
    ensure_valid(descriptor, constraints or SearchConstraints())
    if input_dim < 1:
        raise ShapeError(f"input_dim must be >= 1, got {input_dim}")

    rng = np.random.default_rng(seed)
    layers: List[DenseLayer] = []
    fan_in = input_dim
    for spec in descriptor.layers():
        layers.append(DenseLayer(
            weights=init_weights(spec.initializer, fan_in, spec.width, rng),
            biases=np.zeros(spec.width),
            activation=spec.activation,
            has_batch_norm=spec.batch_norm,
            has_dropout=spec.dropout,
        ))
        fan_in = spec.width

    head = DenseLayer(
        weights=init_weights(Initializer.XAVIER, fan_in, 1, rng),
        biases=np.zeros(1),
        activation=Activation.SIGMOID,
    )
    return Network(layers=layers, head=head, input_dim=input_dim, descriptor=descriptor)


def forward(
    network: Network,
    batch: np.ndarray,
    trace: bool = False
) -> Tuple[np.ndarray, Optional[ActivationTrace]]:
    """
    Inference-mode forward pass.

    Args:
        network: Network to run
        batch: Feature matrix (m x input_dim)
        trace: Record every hidden post-activation value

    Returns:
        Tuple of (probabilities of class 1, trace or None)
    """
    h = network._check_batch(batch)
    outputs = []
    for layer in network.layers:
        h = layer.infer(h)
        if trace:
            outputs.append(h)
    probabilities = sigmoid((h @ network.head.weights + network.head.biases).ravel())
    if not trace:
        return probabilities, None

    offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(network.layer_widths)]))
    return probabilities, ActivationTrace(values=np.hstack(outputs), offsets=offsets)


def predict_proba(network: Network, features: np.ndarray) -> np.ndarray:
    """Probability of class 1 for every row; same path as forward(trace=False)."""
    return forward(network, features, trace=False)[0]


def _inference_loss(network: Network, x: np.ndarray, y: np.ndarray) -> float:
    s = network.logits(x)
    return float(np.mean(np.logaddexp(0.0, s) - y * s))


def train(
    network: Network,
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig
) -> Network:
    """
    Mini-batch gradient descent on binary cross-entropy.

    The input network is left untouched; a trained copy is returned. Batches
    follow a seeded shuffle per epoch and dropout masks come from the same
    stream, so the result is a pure function of the inputs and config.seed.
    Epoch-end inference loss over the full training set is appended to
    loss_history.

    Raises:
        ShapeError: feature/label shapes disagree
        ValueError: labels outside {0, 1} or empty training set
        TrainingError: non-finite loss, gradient or weight
    """
    x = network._check_batch(features)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
    if x.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")

    net = network.copy()
    rng = np.random.default_rng(config.seed)
    params = net.parameters()
    velocity = {name: np.zeros_like(value) for name, value in params.items()}
    m = x.shape[0]

    for epoch in range(config.epochs):
        order = rng.permutation(m)
        for batch_index, start in enumerate(range(0, m, config.batch_size)):
            idx = order[start:start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                loss, grads = net._train_pass(x[idx], y[idx], rng, update_stats=True)
            if not np.isfinite(loss):
                raise TrainingError("non-finite loss", epoch, batch_index)
            for name, grad in grads.items():
                if not np.all(np.isfinite(grad)):
                    raise TrainingError(f"non-finite gradient for {name}", epoch, batch_index)

            for name, param in params.items():
                if config.optimizer is Optimizer.MOMENTUM:
                    velocity[name] = SGD_MOMENTUM * velocity[name] - config.learning_rate * grads[name]
                    param += velocity[name]
                else:
                    param -= config.learning_rate * grads[name]
            if not net.is_finite():
                raise TrainingError("non-finite weights", epoch, batch_index)

        with np.errstate(over="ignore", invalid="ignore"):
            epoch_loss = _inference_loss(net, x, y)
        if not np.isfinite(epoch_loss):
            raise TrainingError("non-finite epoch loss", epoch)
        net.loss_history.append(epoch_loss)

    return net


# =========================================================================
# Weight dump (debugging only)
# =========================================================================

def format_weights(network: Network) -> str:
    """
    Text dump of every layer.

    Format per layer: a header `layer <j> <fan_in> <width> <activation>`,
    then `fan_in` lines of row-major weights, then one line of biases. The
    head is written last with index `head`.
    """
    lines = [f"network input_dim={network.input_dim} layers={len(network.layers)}"]
    for j, layer in enumerate(network.all_layers):
        tag = "head" if j == len(network.layers) else str(j)
        lines.append(f"layer {tag} {layer.fan_in} {layer.width} {layer.activation.value}")
        for row in layer.weights:
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append(" ".join(repr(float(v)) for v in layer.biases))
    return "\n".join(lines) + "\n"


def dump_weights(network: Network, path: Union[str, Path]) -> Path:
    """Write format_weights() output to a file and return its path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_weights(network), encoding="utf-8")
    return path
