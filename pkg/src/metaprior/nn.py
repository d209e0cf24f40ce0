"""Small dense regression network with hand-written backpropagation.

The parameters of a network live in a single flat vector so that the
meta-learner can treat them as one point in weight space.  The layout is
layer-major: for every layer the ``in x out`` weight matrix (row-major,
indexed ``[in, out]``) followed by the ``out`` biases.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericError, StructuralError

TANH = "tanh"
IDENTITY = "identity"
ACTIVATIONS = (TANH, IDENTITY)


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = TANH

    @property
    def size(self) -> int:
        return self.input_dim * self.output_dim + self.output_dim


def mlp_layout(hidden: int = 64, depth: int = 2) -> tuple:
    """``1 -> hidden -> ... -> hidden -> 1`` with ``depth`` tanh layers."""
    dims = [1] + [hidden] * depth + [1]
    layers = [LayerSpec(a, b, TANH) for a, b in zip(dims[:-2], dims[1:-1])]
    layers.append(LayerSpec(dims[-2], dims[-1], IDENTITY))
    return tuple(layers)


def validate_layout(layout: Sequence[LayerSpec]) -> tuple:
    layout = tuple(layout)
    if not layout:
        raise StructuralError("layout has no layers")
    for i, layer in enumerate(layout):
        if layer.input_dim < 1 or layer.output_dim < 1:
            raise StructuralError(f"layer {i} has non-positive dimension: {layer}")
        if layer.activation not in ACTIVATIONS:
            raise StructuralError(f"layer {i} has unknown activation {layer.activation!r}")
        if i > 0 and layout[i - 1].output_dim != layer.input_dim:
            raise StructuralError(f"layer {i} input does not match layer {i - 1} output")
    if layout[-1].activation != IDENTITY:
        raise StructuralError("final layer must use the identity activation")
    if layout[0].input_dim != 1 or layout[-1].output_dim != 1:
        raise StructuralError("network must map scalars to scalars")
    return layout


def parameter_count(layout: Sequence[LayerSpec]) -> int:
    return sum(layer.size for layer in layout)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Flat, read-only parameter vector together with its layer layout."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        layout = validate_layout(self.layout)
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != parameter_count(layout):
            raise StructuralError(
                f"expected {parameter_count(layout)} values for layout, got {values.size}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", layout)

    def __len__(self):
        return self.values.size

    def with_values(self, values) -> "WeightVector":
        return WeightVector(values, self.layout)

    def unpack(self):
        """Return ``[(W, b), ...]`` views into the flat vector."""
        return _unpack(self.values, self.layout)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True, eq=False)
class Minibatch:
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64).ravel()
        ys = np.asarray(self.ys, dtype=np.float64).ravel()
        if xs.size != ys.size:
            raise StructuralError(f"xs and ys differ in length: {xs.size} != {ys.size}")
        if xs.size < 1:
            raise StructuralError("minibatch is empty")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self):
        return self.xs.size


def init_weights(layout: Sequence[LayerSpec], seed: int) -> WeightVector:
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    layout = validate_layout(layout)
    rng = np.random.default_rng(seed)
    chunks = []
    for layer in layout:
        limit = np.sqrt(6.0 / (layer.input_dim + layer.output_dim))
        chunks.append(rng.uniform(-limit, limit, size=layer.input_dim * layer.output_dim))
        chunks.append(np.zeros(layer.output_dim))
    return WeightVector(np.concatenate(chunks), layout)


def _activate(z, activation):
    return np.tanh(z) if activation == TANH else z


def _unpack(values: np.ndarray, layout):
    out = []
    offset = 0
    for layer in layout:
        n_w = layer.input_dim * layer.output_dim
        W = values[offset:offset + n_w].reshape(layer.input_dim, layer.output_dim)
        offset += n_w
        out.append((W, values[offset:offset + layer.output_dim]))
        offset += layer.output_dim
    return out


def _forward_trace(params, layout, xs: np.ndarray):
    """Forward pass over a column of inputs, keeping layer outputs for backprop."""
    a = xs.reshape(-1, 1)
    outputs = [a]
    for (W, b), layer in zip(params, layout):
        a = _activate(a @ W + b, layer.activation)
        outputs.append(a)
    return outputs


def forward_many(w: WeightVector, xs) -> np.ndarray:
    """Vectorised :func:`forward` over an array of inputs."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    if not np.all(np.isfinite(xs)):
        raise NumericError("non-finite network input")
    return _forward_trace(w.unpack(), w.layout, xs)[-1][:, 0]


def forward(w: WeightVector, x: float) -> float:
    return float(forward_many(w, [x])[0])


def loss_grad_values(values: np.ndarray, layout, xs: np.ndarray, ys: np.ndarray):
    """Unchecked core of :func:`mse_loss_grad` on raw arrays."""
    # overflow surfaces as the NumericError below
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_grad(values, layout, xs, ys)


def _loss_grad(values, layout, xs, ys):
    params = _unpack(values, layout)
    outputs = _forward_trace(params, layout, xs)
    resid = outputs[-1][:, 0] - ys
    loss = float(np.mean(resid ** 2))

    # delta holds dL/dz for the current layer's pre-activation
    delta = (2.0 / xs.size) * resid.reshape(-1, 1)
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        if layout[i].activation == TANH:
            delta = delta * (1.0 - outputs[i + 1] ** 2)
        grads[i] = np.concatenate(((outputs[i].T @ delta).ravel(), delta.sum(axis=0)))
        if i > 0:
            delta = delta @ W.T
    grad = np.concatenate(grads)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NumericError("non-finite loss or gradient")
    return loss, grad


def mse_loss_grad(w: WeightVector, batch: Minibatch):
    """Mean squared error of ``w`` on ``batch`` and its exact gradient."""
    if len(batch) < 1:
        raise StructuralError("minibatch is empty")
    loss, grad = loss_grad_values(w.values, w.layout, batch.xs, batch.ys)
    return loss, w.with_values(grad)


def sgd_steps(w: WeightVector, batches: Sequence[Minibatch], step_size: float) -> WeightVector:
    """Plain SGD, one update per minibatch, in order."""
    if not step_size > 0:
        raise StructuralError(f"step size must be positive, got {step_size}")
    values = w.values.copy()
    for batch in batches:
        _, grad = mse_loss_grad(w.with_values(values), batch)
        values -= step_size * grad.values
    return w.with_values(values)
