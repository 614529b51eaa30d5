"""Minimal dense feed-forward network with exact reverse-mode gradients.

Deliberately dependency-free beyond numpy: plain mini-batch gradient descent,
seeded symmetric init, and a ``block_softmax`` output activation that applies
softmax independently per declared block (used to emit relaxed one-hot
architecture encodings).  ``backward`` also returns the gradient with respect
to the *input*, which lets a frozen downstream network be chained onto an
upstream one during training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "LayerSpec",
    "MlpModel",
    "TrainConfig",
    "Gradients",
    "TrainingDiverged",
    "init_model",
    "clone",
    "forward",
    "backward",
    "train",
    "save_model",
    "load_model",
]

ACTIVATIONS = ("rectifier", "sigmoid", "identity", "block_softmax")

SAVE_FORMAT = "moarr-mlp/1"


class TrainingDiverged(RuntimeError):
    """Raised when a training loss stops being finite."""


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str

    def __post_init__(self) -> None:
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpModel:
    """Layer specs plus their weight matrices ((in, out) layout) and biases."""

    layers: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    block_layout: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.output_width != nxt.input_width:
                raise ValueError("consecutive layer widths must match")
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            if w.shape != (spec.input_width, spec.output_width) or b.shape != (spec.output_width,):
                raise ValueError("parameter shapes do not match layer specs")
        uses_blocks = any(l.activation == "block_softmax" for l in self.layers)
        if uses_blocks:
            if self.block_layout is None:
                raise ValueError("block_softmax requires a block layout")
            for spec in self.layers:
                if spec.activation == "block_softmax" and spec.output_width != sum(self.block_layout):
                    raise ValueError("block layout does not partition the layer output")

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].output_width


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    max_epochs: int = 200
    seed: int = 0
    l2_penalty: float = 0.0
    early_stop_patience: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")


@dataclass
class Gradients:
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grad: np.ndarray


def init_model(
    widths: Sequence[int],
    activations: Sequence[str],
    seed: int | np.random.Generator = 0,
    block_layout: Sequence[int] | None = None,
) -> MlpModel:
    """Fresh model with symmetric uniform init, ``widths`` = [in, h1, ..., out]."""
    if len(widths) < 2 or len(activations) != len(widths) - 1:
        raise ValueError("need one activation per layer")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers, weights, biases = [], [], []
    for fan_in, fan_out, act in zip(widths, widths[1:], activations):
        layers.append(LayerSpec(fan_in, fan_out, act))
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(
        layers=layers,
        weights=weights,
        biases=biases,
        block_layout=tuple(block_layout) if block_layout is not None else None,
    )


def clone(model: MlpModel) -> MlpModel:
    return MlpModel(
        layers=list(model.layers),
        weights=[w.copy() for w in model.weights],
        biases=[b.copy() for b in model.biases],
        block_layout=model.block_layout,
    )


def _block_softmax(z: np.ndarray, layout: tuple[int, ...]) -> np.ndarray:
    out = np.empty_like(z)
    offset = 0
    for width in layout:
        block = z[:, offset : offset + width]
        shifted = block - block.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        out[:, offset : offset + width] = e / e.sum(axis=1, keepdims=True)
        offset += width
    return out


def _activate(z: np.ndarray, activation: str, layout: tuple[int, ...] | None) -> np.ndarray:
    if activation == "identity":
        return z
    if activation == "rectifier":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return _block_softmax(z, layout)  # type: ignore[arg-type]


def _activation_backward(
    grad_out: np.ndarray, z: np.ndarray, a: np.ndarray, activation: str,
    layout: tuple[int, ...] | None,
) -> np.ndarray:
    if activation == "identity":
        return grad_out
    if activation == "rectifier":
        return grad_out * (z > 0.0)
    if activation == "sigmoid":
        return grad_out * a * (1.0 - a)
    # Per-block softmax Jacobian: dz = s * (g - <g, s>).
    dz = np.empty_like(grad_out)
    offset = 0
    for width in layout:  # type: ignore[union-attr]
        s = a[:, offset : offset + width]
        g = grad_out[:, offset : offset + width]
        dot = (g * s).sum(axis=1, keepdims=True)
        dz[:, offset : offset + width] = s * (g - dot)
        offset += width
    return dz


def _as_batch(x: np.ndarray, width: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"expected input width {width}, got shape {np.asarray(x).shape}")
    return arr, single


def _forward_trace(model: MlpModel, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    pre, post = [], []
    a = x
    for spec, w, b in zip(model.layers, model.weights, model.biases):
        z = a @ w + b
        a = _activate(z, spec.activation, model.block_layout)
        pre.append(z)
        post.append(a)
    return pre, post


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single vector or a batch of rows."""
    batch, single = _as_batch(x, model.input_width)
    _, post = _forward_trace(model, batch)
    out = post[-1]
    return out[0] if single else out


def backward(model: MlpModel, x: np.ndarray, upstream: np.ndarray) -> Gradients:
    """Exact gradients of ``sum(upstream * forward(x))`` for params and input.

    Parameter gradients are summed over the batch; the input gradient keeps
    the batch shape.  The model itself is left untouched.
    """
    batch, single = _as_batch(x, model.input_width)
    up = np.asarray(upstream, dtype=float)
    if single:
        up = up[None, :]
    if up.shape != (batch.shape[0], model.output_width):
        raise ValueError(
            f"upstream gradient shape {np.asarray(upstream).shape} does not match output"
        )
    pre, post = _forward_trace(model, batch)
    weight_grads = [np.zeros_like(w) for w in model.weights]
    bias_grads = [np.zeros_like(b) for b in model.biases]
    grad = up
    for i in range(len(model.layers) - 1, -1, -1):
        spec = model.layers[i]
        a_in = batch if i == 0 else post[i - 1]
        dz = _activation_backward(grad, pre[i], post[i], spec.activation, model.block_layout)
        weight_grads[i] = a_in.T @ dz
        bias_grads[i] = dz.sum(axis=0)
        grad = dz @ model.weights[i].T
    input_grad = grad[0] if single else grad
    return Gradients(weight_grads, bias_grads, input_grad)


def _squared_error(outputs: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    resid = outputs - targets
    return (resid**2).sum(axis=1), 2.0 * resid


def train(
    model: MlpModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    loss: str = "squared_error",
    output_grad_fn: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
) -> tuple[MlpModel, list[float]]:
    """Mini-batch gradient descent; returns a trained copy and per-epoch loss.

    ``loss`` is either ``"squared_error"`` or ``"external_gradient"``; the
    latter delegates to ``output_grad_fn(outputs, targets) -> (per-example
    loss, gradient w.r.t. outputs)``, which is how a composed objective
    through a frozen downstream network is driven.  Training is deterministic
    for a given config seed; a non-finite epoch loss aborts.
    """
    X = np.asarray(inputs, dtype=float)
    T = np.asarray(targets, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("inputs must be a non-empty (n, d) array")
    if T.ndim == 1:
        T = T[:, None]
    if T.shape[0] != X.shape[0]:
        raise ValueError("inputs and targets disagree on sample count")
    if loss == "squared_error":
        grad_fn = _squared_error
    elif loss == "external_gradient":
        if output_grad_fn is None:
            raise ValueError("external_gradient loss needs output_grad_fn")
        grad_fn = output_grad_fn
    else:
        raise ValueError(f"unknown loss {loss!r}")

    trained = clone(model)
    rng = np.random.default_rng(config.seed)
    trace: list[float] = []
    best = np.inf
    stale = 0
    n = X.shape[0]
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, tb = X[idx], T[idx]
            out = forward(trained, xb)
            losses, out_grad = grad_fn(out, tb)
            total += float(np.sum(losses))
            grads = backward(trained, xb, out_grad)
            scale = config.learning_rate / len(idx)
            for i in range(len(trained.weights)):
                gw = grads.weight_grads[i]
                if config.l2_penalty:
                    gw = gw + config.l2_penalty * len(idx) * trained.weights[i]
                trained.weights[i] -= scale * gw
                trained.biases[i] -= scale * grads.bias_grads[i]
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(
                f"non-finite loss {epoch_loss} at epoch {epoch} "
                f"(lr={config.learning_rate}, batch={config.batch_size})"
            )
        trace.append(epoch_loss)
        if config.early_stop_patience:
            if epoch_loss < best - 1e-12:
                best = epoch_loss
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
    return trained, trace


def save_model(model: MlpModel, path) -> None:
    """Binary dump: versioned JSON header plus row-major weight matrices."""
    meta = {
        "format": SAVE_FORMAT,
        "layers": [[l.input_width, l.output_width, l.activation] for l in model.layers],
        "block_layout": list(model.block_layout) if model.block_layout else None,
    }
    arrays = {}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, meta=np.bytes_(json.dumps(meta).encode("utf-8")), **arrays)


def load_model(path) -> MlpModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != SAVE_FORMAT:
            raise ValueError(f"unsupported model format {meta.get('format')!r}")
        layers = [LayerSpec(int(i), int(o), a) for i, o, a in meta["layers"]]
        weights = [data[f"w{i}"].copy() for i in range(len(layers))]
        biases = [data[f"b{i}"].copy() for i in range(len(layers))]
        layout = meta["block_layout"]
    return MlpModel(
        layers=layers,
        weights=weights,
        biases=biases,
        block_layout=tuple(layout) if layout else None,
    )
