"""Trainable cores: l2-regularized softmax regression and a two-hidden-layer
ReLU network, optimized with Adam over shuffled mini-batches.

Parameter vectors are flat float64 arrays. Layout per layer is weights
(row-major, in_dim x out_dim) followed by biases. Biases are never
regularized, and per-example gradients carry the data term only; the
regularizer lambda*theta (bias entries zeroed) is added once per step after
any gradient transform has run. The transform hook receives
(per_example_grads, (X_batch, y_batch), step_index) and returns the update
direction, which is how clipping and noise injection plug in.

Training is deterministic in (config.seed, data): initialization and epoch
shuffles come from the stream derived from (seed, "learners.train").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import (
    FormatError,
    NumericalError,
    ParameterError,
    ShapeError,
    TrainingError,
)
from .numkit import derive_rng

GradTransform = Callable[[np.ndarray, tuple[np.ndarray, np.ndarray], int], np.ndarray]

MLP_HIDDEN = (64, 64)


@dataclass(frozen=True)
class ModelArch:
    kind: str                 # "lr" or "mlp"
    input_dim: int
    class_count: int
    hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("lr", "mlp"):
            raise ParameterError(f"unknown arch kind {self.kind!r}")
        if self.kind == "lr" and self.hidden:
            raise ParameterError("lr arch has no hidden layers")
        if self.kind == "mlp" and not self.hidden:
            object.__setattr__(self, "hidden", MLP_HIDDEN)
        if self.input_dim < 1 or self.class_count < 2:
            raise ParameterError("need input_dim >= 1 and class_count >= 2")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, self.class_count]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def param_count(self) -> int:
        return sum(din * dout + dout for din, dout in self.layer_dims)


def lr_arch(input_dim: int, class_count: int) -> ModelArch:
    return ModelArch("lr", input_dim, class_count)


def mlp_arch(input_dim: int, class_count: int, hidden: tuple[int, ...] = MLP_HIDDEN) -> ModelArch:
    return ModelArch("mlp", input_dim, class_count, tuple(hidden))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    batch_size: int = 250
    l2_lambda: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ParameterError("learning_rate and batch_size must be positive")
        if self.l2_lambda < 0:
            raise ParameterError("l2_lambda must be >= 0")


@dataclass(frozen=True)
class Model:
    arch: ModelArch
    params: np.ndarray
    provenance: dict | None = None

    def __post_init__(self):
        p = np.asarray(self.params, dtype=np.float64)
        if p.shape != (self.arch.param_count,):
            raise ShapeError(
                f"params length {p.shape} does not match arch ({self.arch.param_count})"
            )
        if not np.all(np.isfinite(p)):
            raise ParameterError("model params must be finite")
        object.__setattr__(self, "params", p)


def _unpack(arch: ModelArch, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    offset = 0
    for din, dout in arch.layer_dims:
        w = params[offset : offset + din * dout].reshape(din, dout)
        offset += din * dout
        b = params[offset : offset + dout]
        offset += dout
        layers.append((w, b))
    return layers


def regularizer_mask(arch: ModelArch) -> np.ndarray:
    """1.0 on weight entries, 0.0 on bias entries (biases unregularized)."""
    pieces = []
    for din, dout in arch.layer_dims:
        pieces.append(np.ones(din * dout))
        pieces.append(np.zeros(dout))
    return np.concatenate(pieces)


def init_params(arch: ModelArch, rng: np.random.Generator) -> np.ndarray:
    """LR starts at zero (convex); MLP uses scaled-uniform fan-in init."""
    if arch.kind == "lr":
        return np.zeros(arch.param_count)
    pieces = []
    for din, dout in arch.layer_dims:
        limit = 1.0 / np.sqrt(din)
        pieces.append(rng.uniform(-limit, limit, size=din * dout))
        pieces.append(np.zeros(dout))
    return np.concatenate(pieces)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward(arch: ModelArch, params: np.ndarray, X: np.ndarray):
    """Returns (activations per layer, logits). activations[0] is X."""
    layers = _unpack(arch, params)
    acts = [X]
    h = X
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    w, b = layers[-1]
    logits = h @ w + b
    return acts, logits


def predict_proba(model: Model, features: np.ndarray) -> np.ndarray:
    """Probability rows (softmax of the logits), each summing to 1."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.arch.input_dim:
        raise ShapeError(
            f"features shape {X.shape} does not match input_dim {model.arch.input_dim}"
        )
    _, logits = _forward(model.arch, model.params, X)
    return _softmax(logits)


def evaluate(model: Model, features: np.ndarray, labels: np.ndarray) -> float:
    """Accuracy: fraction of rows whose argmax probability hits the label."""
    probs = predict_proba(model, features)
    predicted = probs.argmax(axis=1)
    return float(np.mean(predicted == np.asarray(labels)))


def _check_batch(arch: ModelArch, X: np.ndarray, y: np.ndarray):
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ShapeError(f"batch features shape {X.shape} mismatch arch d={arch.input_dim}")
    if y.shape != (X.shape[0],):
        raise ShapeError("batch labels must be 1-D, one per row")
    if X.shape[0] == 0:
        raise ParameterError("batch must be nonempty")
    if y.min() < 0 or y.max() >= arch.class_count:
        raise ParameterError("batch labels outside [0, class_count)")


def loss_and_grad(
    arch: ModelArch, params: np.ndarray, X: np.ndarray, y: np.ndarray, l2_lambda: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus (lambda/2)||weights||^2, with its exact gradient.

    The analytic gradient is computed by standard backprop on the batched
    forward pass; per-example bookkeeping lives in per_example_grads.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_batch(arch, X, y)
    n = X.shape[0]

    acts, logits = _forward(arch, params, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    example_losses = log_z - shifted[np.arange(n), y]
    if not np.all(np.isfinite(example_losses)):
        bad = int(np.flatnonzero(~np.isfinite(example_losses))[0])
        raise NumericalError("non-finite loss", batch_index=bad)
    data_loss = float(example_losses.mean())

    layers = _unpack(arch, params)
    probs = _softmax(logits)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: list[np.ndarray] = []
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        grads.append(delta.sum(axis=0))          # bias
        grads.append((acts[li].T @ delta).ravel())  # weights
        if li > 0:
            delta = (delta @ w.T) * (acts[li] > 0)
    grad = np.concatenate(grads[::-1])

    mask = regularizer_mask(arch)
    reg_loss = 0.5 * l2_lambda * float(np.sum((mask * params) ** 2))
    grad = grad + l2_lambda * (mask * params)
    return data_loss + reg_loss, grad


def per_example_grads(
    arch: ModelArch, params: np.ndarray, X: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """(batch x param_count) matrix; row i is example i's data-term gradient.

    The regularizer is excluded on purpose: clipping has to bound what a
    single record contributes, which is the data term alone.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_batch(arch, X, y)
    n = X.shape[0]

    acts, logits = _forward(arch, params, X)
    layers = _unpack(arch, params)
    delta = _softmax(logits)
    delta[np.arange(n), y] -= 1.0

    pieces: list[np.ndarray] = []
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        pieces.append(delta.copy())  # bias grads, (n, dout)
        wgrad = np.einsum("ni,nj->nij", acts[li], delta).reshape(n, -1)
        pieces.append(wgrad)
        if li > 0:
            delta = (delta @ w.T) * (acts[li] > 0)
    return np.concatenate(pieces[::-1], axis=1)


def mean_of_rows(per_example: np.ndarray, batch, step: int) -> np.ndarray:
    """The identity gradient transform: average the per-example rows."""
    return per_example.mean(axis=0)


def train(
    arch: ModelArch,
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    grad_transform: GradTransform | None = None,
    provenance: dict | None = None,
) -> Model:
    """Adam over shuffled mini-batches for config.epochs passes.

    Every step computes per-example gradients; the transform (default:
    mean of rows) turns them into an update direction, then
    lambda * params (bias entries zeroed) is added and Adam takes a step.
    The final short batch of an epoch is kept, not dropped.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _check_batch(arch, X, y)

    rng = derive_rng(config.seed, "learners.train")
    params = init_params(arch, rng)
    transform = grad_transform if grad_transform is not None else mean_of_rows
    mask = regularizer_mask(arch)

    n = X.shape[0]
    batch = min(config.batch_size, n)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            Xb, yb = X[idx], y[idx]
            rows = per_example_grads(arch, params, Xb, yb)
            direction = transform(rows, (Xb, yb), step)
            grad = direction + config.l2_lambda * (mask * params)

            step += 1
            m = config.beta1 * m + (1.0 - config.beta1) * grad
            v = config.beta2 * v + (1.0 - config.beta2) * grad * grad
            m_hat = m / (1.0 - config.beta1**step)
            v_hat = v / (1.0 - config.beta2**step)
            params = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
            if not np.all(np.isfinite(params)):
                raise TrainingError("parameters diverged to non-finite values", step=step)
    return Model(arch=arch, params=params, provenance=provenance)


def save_model(model: Model, path: str) -> None:
    """JSON record: arch descriptor, parameter list, provenance. Floats are
    serialized with repr precision, so load_model round-trips exactly."""
    record = {
        "format": "privsweep-model/1",
        "arch": {
            "kind": model.arch.kind,
            "input_dim": model.arch.input_dim,
            "class_count": model.arch.class_count,
            "hidden": list(model.arch.hidden),
        },
        "params": model.params.tolist(),
        "provenance": model.provenance or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh)


def load_model(path: str) -> Model:
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("format") != "privsweep-model/1":
        raise FormatError(f"unrecognized model format in {path}")
    a = record["arch"]
    arch = ModelArch(a["kind"], a["input_dim"], a["class_count"], tuple(a["hidden"]))
    return Model(
        arch=arch,
        params=np.asarray(record["params"], dtype=np.float64),
        provenance=record.get("provenance") or None,
    )


def cap_batch(config: TrainConfig, n: int) -> TrainConfig:
    """Clamp batch_size to the training-set size (the documented cap)."""
    if config.batch_size <= n:
        return config
    return replace(config, batch_size=n)
