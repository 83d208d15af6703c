"""Elementwise activations, softmax and the cross-entropy loss."""

from typing import Sequence, Tuple

import numpy as np
from scipy.special import expit, log_softmax
from scipy.special import softmax as _softmax

from ..exceptions import ShapeMismatchError
from .tensor import Tensor, require_rank


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(x: Tensor, grad_out: Tensor) -> Tensor:
    """Mask ``grad_out`` where the forward input was not positive."""
    if x.shape != grad_out.shape:
        raise ShapeMismatchError(
            f"grad_out shape {grad_out.shape} does not match input {x.shape}"
        )
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def sigmoid(x: Tensor) -> Tensor:
    # expit saturates without overflow warnings for large |x|
    return expit(x)


def sigmoid_backward(y: Tensor, grad_out: Tensor) -> Tensor:
    """Backward of the sigmoid expressed through its output ``y``."""
    return grad_out * y * (1 - y)


def tanh_backward(y: Tensor, grad_out: Tensor) -> Tensor:
    return grad_out * (1 - y * y)


def softmax(x: Tensor) -> Tensor:
    """
    Row-wise softmax of a batch of logits.

    Parameters
    ----------
    x : Tensor
        Logits of shape (B, K), K >= 1.

    Returns
    -------
    Tensor
        Probabilities of shape (B, K); each row sums to one.
    """
    require_rank(x, 2, "logits")
    if x.shape[1] < 1:
        raise ShapeMismatchError("softmax needs at least one class")
    # scipy subtracts the row maximum before exponentiating
    return _softmax(x, axis=1)


def _check_labels(labels: Sequence[int], batch: int, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (batch,):
        raise ShapeMismatchError(
            f"expected {batch} labels, got shape {labels.shape}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range for {k} classes: {labels.tolist()}")
    return labels


def cross_entropy(probs: Tensor, labels: Sequence[int]) -> Tuple[float, Tensor]:
    """
    Mean negative log-likelihood of the true classes.

    Parameters
    ----------
    probs : Tensor
        Softmax output of shape (B, K).
    labels : Sequence[int]
        True class index per row.

    Returns
    -------
    loss : float
        Mean of ``-ln probs[b, labels[b]]`` over the batch.
    grad_logits : Tensor
        Gradient of the loss with respect to the pre-softmax logits,
        ``(probs - onehot) / B``.

    Raises
    ------
    ValueError
        If a label is outside ``[0, K)``.
    """
    require_rank(probs, 2, "probs")
    batch, k = probs.shape
    labels = _check_labels(labels, batch, k)
    picked = probs[np.arange(batch), labels]
    tiny = np.finfo(probs.dtype).tiny
    loss = float(-np.mean(np.log(np.maximum(picked, tiny))))
    grad = probs.copy()
    grad[np.arange(batch), labels] -= 1
    grad /= batch
    return loss, grad


def cross_entropy_from_logits(logits: Tensor, labels: Sequence[int]) -> float:
    """Loss evaluated through ``log_softmax``; used by gradient checks."""
    require_rank(logits, 2, "logits")
    batch, k = logits.shape
    labels = _check_labels(labels, batch, k)
    logp = log_softmax(logits, axis=1)
    return float(-np.mean(logp[np.arange(batch), labels]))
