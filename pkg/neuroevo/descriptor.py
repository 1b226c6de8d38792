"""
Network Descriptor (Genome) v1.0

List-based description of an MLP architecture:
- Per-layer widths
- Activation functions (7-entry table)
- Weight initializers (3-entry table)
- Dropout and batch-normalization flags

Depth is the length of the lists; there is no separate layer-count gene.
Descriptors are immutable values and can be shared freely across threads.

Text form (one descriptor per line):
    widths=3,5;act=relu,tanh;init=xavier,normal;drop=0,1;bn=1,0
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from neuroevo.errors import DescriptorError


class Activation(Enum):
    """Hidden-layer activation functions, in table order."""
    IDENTITY = "identity"
    RELU = "relu"
    ELU = "elu"
    SOFTPLUS = "softplus"
    SOFTSIGN = "softsign"
    SIGMOID = "sigmoid"
    TANH = "tanh"


class Initializer(Enum):
    """Weight initialization families, in table order."""
    NORMAL = "normal"
    UNIFORM = "uniform"
    XAVIER = "xavier"


ACTIVATIONS: Tuple[Activation, ...] = tuple(Activation)
INITIALIZERS: Tuple[Initializer, ...] = tuple(Initializer)


class SearchConstraints(BaseModel):
    """Bounds on the architectures the search may produce."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_depth: int = Field(default=8, ge=1, description="Maximum number of hidden layers")
    max_width: int = Field(default=8, ge=1, description="Maximum neurons per hidden layer")


@dataclass(frozen=True)
class LayerSpec:
    """One hidden layer's genes."""
    width: int
    activation: Activation
    initializer: Initializer
    dropout: bool
    batch_norm: bool


@dataclass(frozen=True)
class NetworkDescriptor:
    """
    Evolvable genome of a feed-forward network.

    The five lists are parallel: entry j of each list describes hidden layer j.
    Construction does not validate; use validate() to get the violation list.
    """
    hidden_widths: Tuple[int, ...]
    activations: Tuple[Activation, ...]
    initializers: Tuple[Initializer, ...]
    dropout_flags: Tuple[bool, ...]
    batchnorm_flags: Tuple[bool, ...]

    @classmethod
    def from_layers(cls, layers: List[LayerSpec]) -> "NetworkDescriptor":
        """Build a descriptor from per-layer specs."""
        return cls(
            hidden_widths=tuple(l.width for l in layers),
            activations=tuple(l.activation for l in layers),
            initializers=tuple(l.initializer for l in layers),
            dropout_flags=tuple(l.dropout for l in layers),
            batchnorm_flags=tuple(l.batch_norm for l in layers),
        )

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    @property
    def neuron_count(self) -> int:
        """Total hidden neurons N."""
        return int(sum(self.hidden_widths))

    def layer(self, j: int) -> LayerSpec:
        return LayerSpec(
            width=self.hidden_widths[j],
            activation=self.activations[j],
            initializer=self.initializers[j],
            dropout=self.dropout_flags[j],
            batch_norm=self.batchnorm_flags[j],
        )

    def layers(self) -> List[LayerSpec]:
        return [self.layer(j) for j in range(self.depth)]

    def to_text(self) -> str:
        return to_text(self)


def random_layer(constraints: SearchConstraints, rng: np.random.Generator) -> LayerSpec:
    """Draw one layer with every gene uniform over its range."""
    return LayerSpec(
        width=int(rng.integers(1, constraints.max_width + 1)),
        activation=ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))],
        initializer=INITIALIZERS[int(rng.integers(len(INITIALIZERS)))],
        dropout=bool(rng.integers(2)),
        batch_norm=bool(rng.integers(2)),
    )


def random_descriptor(
    constraints: SearchConstraints,
    rng: np.random.Generator
) -> NetworkDescriptor:
    """
    Generate a random valid descriptor.

    Args:
        constraints: Depth and width bounds
        rng: Seeded numpy generator (consumed)

    Returns:
        Descriptor with depth uniform in [1, max_depth]
    """
    depth = int(rng.integers(1, constraints.max_depth + 1))
    return NetworkDescriptor.from_layers([random_layer(constraints, rng) for _ in range(depth)])


def validate(descriptor: NetworkDescriptor, constraints: SearchConstraints) -> List[str]:
    """
    Check every descriptor invariant.

    Returns:
        List of violations; empty iff the descriptor is valid
    """
    violations: List[str] = []
    lengths = {
        len(descriptor.hidden_widths),
        len(descriptor.activations),
        len(descriptor.initializers),
        len(descriptor.dropout_flags),
        len(descriptor.batchnorm_flags),
    }
    if len(lengths) > 1:
        violations.append("list length mismatch")

    depth = len(descriptor.hidden_widths)
    if depth < 1:
        violations.append("depth 0 below minimum 1")
    elif depth > constraints.max_depth:
        violations.append(f"depth {depth} exceeds max_depth {constraints.max_depth}")

    for j, width in enumerate(descriptor.hidden_widths):
        if isinstance(width, bool) or not isinstance(width, (int, np.integer)):
            violations.append(f"layer {j}: width {width!r} is not an integer")
        elif width < 1:
            violations.append(f"layer {j}: width {width} below minimum 1")
        elif width > constraints.max_width:
            violations.append(f"layer {j}: width {width} exceeds max_width {constraints.max_width}")

    for j, activation in enumerate(descriptor.activations):
        if not isinstance(activation, Activation):
            violations.append(f"layer {j}: unknown activation {activation!r}")
    for j, initializer in enumerate(descriptor.initializers):
        if not isinstance(initializer, Initializer):
            violations.append(f"layer {j}: unknown initializer {initializer!r}")
    for name, flags in (("dropout", descriptor.dropout_flags), ("batch_norm", descriptor.batchnorm_flags)):
        for j, flag in enumerate(flags):
            if not isinstance(flag, (bool, np.bool_)):
                violations.append(f"layer {j}: {name} flag {flag!r} is not boolean")

    return violations


def ensure_valid(descriptor: NetworkDescriptor, constraints: SearchConstraints) -> None:
    """Raise DescriptorError if validate() reports anything."""
    violations = validate(descriptor, constraints)
    if violations:
        raise DescriptorError(violations)


# =========================================================================
# Text serialization
# =========================================================================

_FIELDS = ("widths", "act", "init", "drop", "bn")


def to_text(descriptor: NetworkDescriptor) -> str:
    """Serialize to the single-line `key=v1,v2;...` form."""
    parts = [
        "widths=" + ",".join(str(int(w)) for w in descriptor.hidden_widths),
        "act=" + ",".join(a.value for a in descriptor.activations),
        "init=" + ",".join(i.value for i in descriptor.initializers),
        "drop=" + ",".join("1" if f else "0" for f in descriptor.dropout_flags),
        "bn=" + ",".join("1" if f else "0" for f in descriptor.batchnorm_flags),
    ]
    return ";".join(parts)


def from_text(line: str) -> NetworkDescriptor:
    """
    Parse the single-line text form.

    Raises:
        DescriptorError: malformed line, unknown names or bad flags
    """
    fields = {}
    for chunk in line.strip().split(";"):
        key, sep, value = chunk.partition("=")
        if not sep:
            raise DescriptorError([f"malformed field {chunk!r}"])
        fields[key.strip()] = [v.strip() for v in value.split(",")] if value.strip() else []

    missing = [k for k in _FIELDS if k not in fields]
    if missing:
        raise DescriptorError([f"missing field {k}" for k in missing])

    try:
        widths = tuple(int(v) for v in fields["widths"])
        activations = tuple(Activation(v) for v in fields["act"])
        initializers = tuple(Initializer(v) for v in fields["init"])
    except ValueError as e:
        raise DescriptorError([str(e)]) from e

    def _flags(key: str) -> Tuple[bool, ...]:
        bad = [v for v in fields[key] if v not in ("0", "1")]
        if bad:
            raise DescriptorError([f"{key}: flags must be 0 or 1, got {bad}"])
        return tuple(v == "1" for v in fields[key])

    return NetworkDescriptor(
        hidden_widths=widths,
        activations=activations,
        initializers=initializers,
        dropout_flags=_flags("drop"),
        batchnorm_flags=_flags("bn"),
    )
