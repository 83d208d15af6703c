"""Squeeze-and-excitation channel attention for (B, C, L) feature maps.

The block squeezes every channel to its mean over the length axis, passes
the channel descriptor through a bias-free bottleneck ``W2 relu(W1 z)``
closed by a sigmoid, and rescales each channel by the resulting gate.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import ShapeMismatchError
from .activations import relu, relu_backward, sigmoid, sigmoid_backward
from .tensor import GradBundle, Tensor, require_rank, require_shape


@dataclass
class SEParams:
    """
    Excitation weights.

    Attributes
    ----------
    w1 : Tensor
        Reduction weights of shape (C // r, C).
    w2 : Tensor
        Expansion weights of shape (C, C // r).
    reduction_r : int
        Reduction ratio r; C must be divisible by it.
    """

    w1: Tensor
    w2: Tensor
    reduction_r: int

    def __post_init__(self):
        require_rank(self.w1, 2, "se w1")
        hidden, channels = self.w1.shape
        if self.reduction_r < 1 or channels % self.reduction_r:
            raise ShapeMismatchError(
                f"{channels} channels not divisible by reduction {self.reduction_r}"
            )
        require_shape(self.w1, (channels // self.reduction_r, channels), "se w1")
        require_shape(self.w2, (channels, hidden), "se w2")

    @property
    def channels(self) -> int:
        return self.w1.shape[1]


def se_squeeze(u: Tensor) -> Tensor:
    """Global average over the length axis: (B, C, L) -> (B, C)."""
    require_rank(u, 3, "se input")
    if u.shape[2] < 1:
        raise ShapeMismatchError("squeeze needs at least one sample per channel")
    return u.mean(axis=2)


def se_squeeze_backward(length: int, grad_z: Tensor) -> Tensor:
    return np.repeat(grad_z[:, :, None] / length, length, axis=2)


def _check_descriptor(z: Tensor, p: SEParams) -> None:
    require_rank(z, 2, "channel descriptor")
    if z.shape[1] != p.channels:
        raise ShapeMismatchError(
            f"descriptor has {z.shape[1]} channels, SE weights expect {p.channels}"
        )


def se_excite(z: Tensor, p: SEParams) -> Tensor:
    """
    Channel gates ``sigmoid(W2 relu(W1 z))`` for every batch row.

    Parameters
    ----------
    z : Tensor
        Channel descriptors of shape (B, C).
    p : SEParams
        Bottleneck weights.

    Returns
    -------
    Tensor
        Gates of shape (B, C), each in (0, 1).
    """
    _check_descriptor(z, p)
    return sigmoid(relu(z @ p.w1.T) @ p.w2.T)


def se_excite_backward(z: Tensor, p: SEParams, grad_s: Tensor) -> GradBundle:
    _check_descriptor(z, p)
    require_shape(grad_s, z.shape, "se grad_s")
    h = z @ p.w1.T
    a = relu(h)
    s = sigmoid(a @ p.w2.T)
    grad_pre = sigmoid_backward(s, grad_s)
    grad_w2 = grad_pre.T @ a
    grad_h = relu_backward(h, grad_pre @ p.w2)
    return GradBundle(
        input_grad=grad_h @ p.w1,
        param_grads={"w1": grad_h.T @ z, "w2": grad_w2},
    )


def se_scale(u: Tensor, s: Tensor) -> Tensor:
    """Channel-wise rescaling ``out[b, c, i] = s[b, c] * u[b, c, i]``."""
    require_rank(u, 3, "se input")
    require_shape(s, u.shape[:2], "se gates")
    return u * s[:, :, None]


def se_block_forward(u: Tensor, p: SEParams) -> Tensor:
    """Squeeze, excite and rescale; the output has the shape of ``u``."""
    return se_scale(u, se_excite(se_squeeze(u), p))


def se_block_backward(u: Tensor, p: SEParams, grad_out: Tensor) -> GradBundle:
    """
    Gradients of :func:`se_block_forward`.

    ``u`` reaches the output both directly through the scaling and through
    the gate computed from its channel means; both paths are summed.
    """
    require_shape(grad_out, u.shape, "se grad_out")
    z = se_squeeze(u)
    s = se_excite(z, p)
    grad_u = grad_out * s[:, :, None]
    grad_s = (grad_out * u).sum(axis=2)
    excite = se_excite_backward(z, p, grad_s)
    grad_u = grad_u + se_squeeze_backward(u.shape[2], excite.input_grad)
    return GradBundle(input_grad=grad_u, param_grads=excite.param_grads)
