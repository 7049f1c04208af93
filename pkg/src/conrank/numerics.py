"""Dense feed-forward classifier with explicit backprop and momentum SGD.

Everything runs in float64 and is deterministic under a fixed seed. The
network is intentionally minimal: linear layers with relu or tanh hidden
activations and a linear output head. Gradients are computed by hand so
they can be checked against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_FORMAT = "mlp-checkpoint-v1"


@dataclass
class MlpModel:
    """Weights and biases of a dense network.

    layer_sizes is [input_dim, hidden..., n_classes]; weights[l] has shape
    (layer_sizes[l], layer_sizes[l+1]). `version` counts optimizer steps so
    a forward cache taken before a step can be rejected as stale.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    version: int = 0

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            version=self.version,
        )

    def validate(self) -> None:
        if len(self.layer_sizes) < 2:
            raise ContractError("model needs at least input and output layers")
        if any(int(s) <= 0 for s in self.layer_sizes):
            raise ContractError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if len(self.weights) != self.n_layers or len(self.biases) != self.n_layers:
            raise ContractError("parameter count does not match layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[l], self.layer_sizes[l + 1])
            if w.shape != expect:
                raise ContractError(f"weights[{l}] has shape {w.shape}, expected {expect}")
            if b.shape != (self.layer_sizes[l + 1],):
                raise ContractError(f"biases[{l}] has shape {b.shape}, expected ({self.layer_sizes[l + 1]},)")
        for arr in self.weights + self.biases:
            if not np.all(np.isfinite(arr)):
                raise ContractError("model parameters contain NaN/Inf")


@dataclass
class Gradients:
    """Parameter-shaped gradient container."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class ForwardCache:
    """Activations saved by forward() for the matching backward() call."""

    layer_inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    layer_sizes: tuple[int, ...]
    activation: str
    model_version: int


def init_model(layer_sizes, activation="relu", seed=0) -> MlpModel:
    """Build a model with uniform +-sqrt(6/(fan_in+fan_out)) weights and zero biases."""
    sizes = [int(s) for s in layer_sizes]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    model = MlpModel(layer_sizes=sizes, weights=weights, biases=biases, activation=activation)
    model.validate()
    return model


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(0.0, z)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0.0).astype(float)
    t = np.tanh(z)
    return 1.0 - t * t


def forward(model: MlpModel, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a (m, input_dim) batch.

    Returns (logits, cache); the cache holds every layer input and
    pre-activation so backward() can replay the chain rule.
    """
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ContractError(
            f"batch has shape {x.shape}, expected (m, {model.input_dim})"
        )
    layer_inputs = []
    pre_activations = []
    a = x
    for l in range(model.n_layers):
        layer_inputs.append(a)
        z = a @ model.weights[l] + model.biases[l]
        pre_activations.append(z)
        a = _activate(z, model.activation) if l < model.n_layers - 1 else z
    logits = a
    cache = ForwardCache(
        layer_inputs=layer_inputs,
        pre_activations=pre_activations,
        layer_sizes=tuple(model.layer_sizes),
        activation=model.activation,
        model_version=model.version,
    )
    return logits, cache


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row max."""
    z = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ContractError("softmax requires finite logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def backward(model: MlpModel, cache: ForwardCache, d_logits: np.ndarray) -> Gradients:
    """Backpropagate a loss gradient w.r.t. logits into parameter gradients."""
    if cache.layer_sizes != tuple(model.layer_sizes) or cache.activation != model.activation:
        raise ContractError("forward cache does not match this model")
    if cache.model_version != model.version:
        raise ContractError("forward cache is stale: model was updated after forward()")
    d = np.asarray(d_logits, dtype=float)
    m = cache.layer_inputs[0].shape[0]
    if d.shape != (m, model.n_classes):
        raise ContractError(f"d_logits has shape {d.shape}, expected ({m}, {model.n_classes})")
    d_weights = [np.empty(0)] * model.n_layers
    d_biases = [np.empty(0)] * model.n_layers
    dz = d
    for l in range(model.n_layers - 1, -1, -1):
        d_weights[l] = cache.layer_inputs[l].T @ dz
        d_biases[l] = dz.sum(axis=0)
        if l > 0:
            da = dz @ model.weights[l].T
            dz = da * _activate_grad(cache.pre_activations[l - 1], model.activation)
    return Gradients(weights=d_weights, biases=d_biases)


@dataclass
class OptimizerState:
    """Momentum buffers plus the step learning-rate schedule.

    lr_schedule is a list of (epoch_threshold, learning_rate) pairs with
    strictly increasing thresholds; the rate of the last threshold <= epoch
    applies.
    """

    momentum_buffers: Gradients
    lr_schedule: tuple[tuple[int, float], ...]
    momentum: float = 0.9
    weight_decay: float = 0.0

    def validate(self) -> None:
        thresholds = [t for t, _ in self.lr_schedule]
        if not thresholds:
            raise ContractError("lr_schedule must not be empty")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ContractError("lr_schedule thresholds must be strictly increasing")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError("momentum must lie in [0, 1)")
        if self.weight_decay < 0.0:
            raise ContractError("weight_decay must be nonnegative")


DEFAULT_LR_SCHEDULE = ((1, 0.1), (150, 0.01), (250, 0.001))


def init_optimizer(
    model: MlpModel,
    lr_schedule=DEFAULT_LR_SCHEDULE,
    momentum=0.9,
    weight_decay=0.0,
) -> OptimizerState:
    buffers = Gradients(
        weights=[np.zeros_like(w) for w in model.weights],
        biases=[np.zeros_like(b) for b in model.biases],
    )
    state = OptimizerState(
        momentum_buffers=buffers,
        lr_schedule=tuple((int(t), float(lr)) for t, lr in lr_schedule),
        momentum=float(momentum),
        weight_decay=float(weight_decay),
    )
    state.validate()
    return state


def learning_rate(schedule, epoch: int) -> float:
    """Rate of the last schedule entry whose threshold is <= epoch."""
    applicable = [lr for t, lr in schedule if t <= epoch]
    if not applicable:
        raise ContractError(f"no schedule entry covers epoch {epoch}")
    return applicable[-1]


def sgd_step(model: MlpModel, state: OptimizerState, grads: Gradients, epoch: int) -> None:
    """In-place momentum SGD update.

    v <- momentum * v + (grad + weight_decay * param)
    param <- param - lr(epoch) * v
    """
    lr = learning_rate(state.lr_schedule, epoch)
    params = model.weights + model.biases
    buffers = state.momentum_buffers.weights + state.momentum_buffers.biases
    gs = grads.weights + grads.biases
    if len(gs) != len(params):
        raise ContractError("gradient structure does not match parameters")
    for p, v, g in zip(params, buffers, gs):
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        v *= state.momentum
        v += g + state.weight_decay * p
        p -= lr * v
        if not np.all(np.isfinite(p)):
            raise ContractError("parameters became non-finite after optimizer step")
    model.version += 1


def save_checkpoint(model: MlpModel, path) -> None:
    """Write the model as a JSON checkpoint.

    Schema (``mlp-checkpoint-v1``): ``format``, ``layer_sizes``,
    ``activation``, and ``weights``/``biases`` as per-layer flat lists in
    row-major order. Floats are serialized with shortest round-trip repr,
    so load(save(m)) reproduces parameters bit-exactly.
    """
    model.validate()
    payload = {
        "format": CHECKPOINT_FORMAT,
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation,
        "weights": [w.ravel(order="C").tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> MlpModel:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ContractError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"unsupported checkpoint format {payload.get('format')!r}")
    sizes = [int(s) for s in payload["layer_sizes"]]
    weights = [
        np.asarray(flat, dtype=float).reshape(sizes[l], sizes[l + 1])
        for l, flat in enumerate(payload["weights"])
    ]
    biases = [np.asarray(flat, dtype=float) for flat in payload["biases"]]
    model = MlpModel(
        layer_sizes=sizes, weights=weights, biases=biases, activation=payload["activation"]
    )
    model.validate()
    return model
