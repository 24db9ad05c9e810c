"""Small fully-connected softmax classifier with hand-coded backprop.

Parameters live in a single flat float64 vector so that gradient steps,
checkpointing and finite-difference checks stay trivial. Layer layout is
``[W0, b0, W1, b1, ...]`` with ``W`` stored as (fan_in, fan_out).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, NumericError


@dataclass
class ParamVector:
    """Flat parameter vector plus the layer widths needed to unflatten it."""

    values: np.ndarray
    shapes: tuple[int, ...]

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.shapes)


@dataclass
class LossBreakdown:
    """Cross-entropy split into the labeled and pseudo-labeled sides."""

    labeled: float
    unlabeled: float
    tau: float
    total: float


def n_params(shapes: tuple[int, ...]) -> int:
    return sum(shapes[i] * shapes[i + 1] + shapes[i + 1] for i in range(len(shapes) - 1))


def _check_shapes(shapes: tuple[int, ...]) -> None:
    if len(shapes) < 2 or any(int(s) <= 0 for s in shapes):
        raise ConfigError(f"invalid layer widths {shapes}: need >= 2 positive entries")


def unflatten(params: ParamVector) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (no copies) of (W, b) per layer into the flat vector."""
    shapes = params.shapes
    layers = []
    off = 0
    for i in range(len(shapes) - 1):
        fan_in, fan_out = shapes[i], shapes[i + 1]
        w = params.values[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params.values[off : off + fan_out]
        off += fan_out
        layers.append((w, b))
    if off != params.values.size:
        raise ConfigError(
            f"parameter vector has {params.values.size} entries, shapes {shapes} need {off}"
        )
    return layers


def init_params(seed: int, shapes: tuple[int, ...]) -> ParamVector:
    """Fan-in scaled normal weights, zero biases; deterministic per seed."""
    _check_shapes(shapes)
    rng = np.random.default_rng(seed)
    chunks = []
    for i in range(len(shapes) - 1):
        fan_in, fan_out = shapes[i], shapes[i + 1]
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
    return ParamVector(np.concatenate(chunks), tuple(int(s) for s in shapes))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(layers, x: np.ndarray):
    """Forward pass keeping pre-activations for backprop. x is (n, d)."""
    acts = [x]
    pre = []
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(h)
    return pre, acts


def forward_batch(params: ParamVector, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch, shape (n, C)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.shapes[0]:
        raise InputError(f"expected inputs of width {params.shapes[0]}, got {x.shape}")
    _, acts = _forward_cached(unflatten(params), x)
    if not np.all(np.isfinite(acts[-1])):
        raise NumericError("non-finite logits; parameters have diverged")
    return _softmax(acts[-1])


def forward(params: ParamVector, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"expected a single feature vector, got shape {x.shape}")
    return forward_batch(params, x[None, :])[0]


def _ce_loss_and_grad(params: ParamVector, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its flat gradient for one batch."""
    layers = unflatten(params)
    n_classes = params.shapes[-1]
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise InputError(f"label out of range [0, {n_classes}): {y.min()}..{y.max()}")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]

    pre, acts = _forward_cached(layers, x)
    logits = acts[-1]
    logz = logits - logits.max(axis=1, keepdims=True)
    logprob = logz - np.log(np.exp(logz).sum(axis=1, keepdims=True))
    loss = -logprob[np.arange(n), y].mean()

    # dL/dlogits for mean CE with softmax
    dlogits = np.exp(logprob)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grads = [None] * len(layers)
    delta = dlogits
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw = acts[i].T @ delta
        gb = delta.sum(axis=0)
        grads[i] = (gw, gb)
        if i > 0:
            delta = (delta @ w.T) * (pre[i - 1] > 0)

    flat = np.concatenate([np.concatenate((gw.ravel(), gb)) for gw, gb in grads])
    return float(loss), flat


def _is_empty(batch) -> bool:
    if batch is None:
        return True
    x, _ = batch
    return len(x) == 0


def loss_and_grad(
    params: ParamVector,
    labeled_batch,
    pseudo_batch,
    tau: float,
) -> tuple[LossBreakdown, ParamVector]:
    """Total loss L_labeled + tau * L_pseudo and its gradient.

    Either batch is a ``(x, y)`` pair or ``None``; an empty side contributes
    exactly zero loss and zero gradient (no arithmetic on the other side).
    """
    loss_l, loss_u = 0.0, 0.0
    grad = None
    if not _is_empty(labeled_batch):
        loss_l, grad = _ce_loss_and_grad(params, *labeled_batch)
    if not _is_empty(pseudo_batch):
        loss_u, grad_u = _ce_loss_and_grad(params, *pseudo_batch)
        grad = tau * grad_u if grad is None else grad + tau * grad_u
    if grad is None:
        grad = np.zeros_like(params.values)
    total = loss_l + tau * loss_u
    if not (np.isfinite(total) and np.all(np.isfinite(grad))):
        raise NumericError(f"non-finite loss or gradient (labeled={loss_l}, unlabeled={loss_u})")
    return LossBreakdown(loss_l, loss_u, tau, total), ParamVector(grad, params.shapes)


def sgd_step(params: ParamVector, grad: ParamVector, lr: float) -> ParamVector:
    if params.shapes != grad.shapes or params.values.shape != grad.values.shape:
        raise InputError("parameter/gradient shape mismatch")
    return ParamVector(params.values - lr * grad.values, params.shapes)


def save_params(params: ParamVector, path) -> None:
    """Checkpoint as JSON: layer widths plus the flat value list."""
    doc = {"shapes": list(params.shapes), "values": params.values.tolist()}
    Path(path).write_text(json.dumps(doc))


def load_params(path) -> ParamVector:
    try:
        doc = json.loads(Path(path).read_text())
        shapes = tuple(int(s) for s in doc["shapes"])
        values = np.asarray(doc["values"], dtype=np.float64)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"malformed checkpoint {path}: {exc}") from exc
    if values.size != n_params(shapes):
        raise InputError(f"checkpoint {path}: {values.size} values do not fit shapes {shapes}")
    return ParamVector(values, shapes)
