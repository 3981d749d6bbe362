"""Composite differentiable operations used by the networks and the losses.

The row-wise softmax family and the logistic loss are fused (one forward and
one closed-form backward) so they stay finite for logits of magnitude 1e4.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy.special import expit

from triplegan.autodiff.tensor import (
    DType,
    Tensor,
    as_tensor,
    leaky_relu,
    matmul,
    mean,
    relu,
    sigmoid,
    square,
    tanh,
)
from triplegan.core.errors import DimensionError, LabelIndexError, NumericError

if TYPE_CHECKING:
    from triplegan.autodiff.random import RngStream

ActivationKind = Literal["relu", "lrelu", "tanh", "sigmoid"]
StochasticKind = Literal["gaussian_noise", "dropout"]

LRELU_SLOPE = 0.2


def activation(kind: ActivationKind, x: Tensor) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "lrelu":
        return leaky_relu(x, LRELU_SLOPE)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``x @ W + b`` for x of shape n×d, W d×m and b of length m."""
    if W.ndim != 2 or b.ndim != 1 or x.ndim != 2:
        raise DimensionError(f"affine expects 2-D x/W and 1-D b, got {x.shape}, {W.shape}, {b.shape}")
    if x.shape[1] != W.shape[0] or b.shape[0] != W.shape[1]:
        raise DimensionError(f"affine shapes x{x.shape} W{W.shape} b{b.shape} do not agree")
    return matmul(x, W) + b


# ---------------------------------------------------------------------------
# Row-wise probability maps
# ---------------------------------------------------------------------------


def _check_logits(logits: Tensor) -> np.ndarray:
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"expected an n×K logit matrix with K >= 2, got {logits.shape}")
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("logits contain non-finite values")
    return logits.data - logits.data.max(axis=1, keepdims=True)


def softmax_rows(logits: Tensor) -> Tensor:
    shifted = _check_logits(logits)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return Tensor.from_op(out, (logits,), backward, "softmax")


def log_softmax_rows(logits: Tensor) -> Tensor:
    shifted = _check_logits(logits)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return Tensor.from_op(out, (logits,), backward, "log_softmax")


# ---------------------------------------------------------------------------
# Indexing and assembly
# ---------------------------------------------------------------------------


def _check_labels(labels: np.ndarray, n: int, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelIndexError(f"class ids must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64, copy=False)


def pick(m: Tensor, labels: np.ndarray) -> Tensor:
    """Per-row selection ``m[i, labels[i]]``."""
    n, k = m.shape
    idx = _check_labels(labels, n, k)
    rows = np.arange(n)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(m.data)
        full[rows, idx] = g
        return (full,)

    return Tensor.from_op(m.data[rows, idx], (m,), backward, "pick")


def take_rows(table: Tensor, labels: np.ndarray) -> Tensor:
    """Embedding lookup: row ``labels[i]`` of ``table`` for every i."""
    idx = _check_labels(labels, len(labels), table.shape[0])

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor.from_op(table.data[idx], (table,), backward, "take_rows")


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1 or any(p.ndim != 2 for p in parts):
        raise DimensionError(f"concat_cols needs 2-D parts with equal rows, got {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:], strict=True)]

    return Tensor.from_op(np.concatenate([p.data for p in parts], axis=1), tuple(parts), backward, "concat")


def one_hot(labels: np.ndarray, k: int, dtype: DType = "f64") -> Tensor:
    idx = _check_labels(labels, len(labels), k)
    out = np.zeros((len(idx), k))
    out[np.arange(len(idx)), idx] = 1.0
    return Tensor(out, dtype=dtype)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    return -mean(pick(log_softmax_rows(logits), labels))


def bce_logit(logit: Tensor, target: Tensor | np.ndarray | float) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logit)`` against ``target``.

    Evaluated as ``max(v, 0) - v*t + log1p(exp(-|v|))``.
    """
    t = np.broadcast_to(as_tensor(target, like=logit).data, logit.shape)
    if t.shape != logit.shape:
        raise DimensionError(f"target shape {t.shape} does not match logits {logit.shape}")
    v = logit.data
    count = max(logit.size, 1)
    value = (np.maximum(v, 0.0) - v * t + np.log1p(np.exp(-np.abs(v)))).sum() / count

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * (expit(v) - t) / count,)

    return Tensor.from_op(np.asarray(value, dtype=v.dtype), (logit,), backward, "bce_logit")


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mse operands differ in shape: {a.shape} vs {b.shape}")
    return mean(square(a - b))


# ---------------------------------------------------------------------------
# Stochastic layers
# ---------------------------------------------------------------------------


def gaussian_noise(x: Tensor, sigma: float, rng: RngStream, train: bool) -> Tensor:
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if not train or sigma == 0:
        return x
    noise = rng.normal(x.shape).astype(x.data.dtype, copy=False)
    return x + Tensor(sigma * noise)


def dropout(x: Tensor, rate: float, rng: RngStream, train: bool) -> Tensor:
    """Inverted dropout; eval mode and ``rate == 0`` are the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0:
        return x
    keep = (rng.uniform(x.shape) >= rate).astype(x.data.dtype)
    return x * Tensor(keep / (1.0 - rate))


def stochastic(kind: StochasticKind, x: Tensor, amount: float, rng: RngStream, train: bool) -> Tensor:
    if kind == "gaussian_noise":
        return gaussian_noise(x, amount, rng, train)
    if kind == "dropout":
        return dropout(x, amount, rng, train)
    raise ValueError(f"unknown stochastic layer {kind!r}")
