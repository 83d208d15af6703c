"""One-dimensional convolution and max-pooling kernels."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeMismatchError
from .tensor import GradBundle, Tensor, require_rank, require_shape

PADDING_MODES = ("same", "valid")


@dataclass
class ConvParams:
    """
    Parameters of a 1D convolution.

    Attributes
    ----------
    weights : Tensor
        Kernel of shape (out_channels, in_channels, kernel_len).
    bias : Tensor
        Bias of shape (out_channels,).
    """

    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        require_rank(self.weights, 3, "conv weights")
        out_channels, _, kernel_len = self.weights.shape
        if kernel_len < 1 or out_channels < 1:
            raise ShapeMismatchError(
                f"invalid conv weight shape {tuple(self.weights.shape)}"
            )
        require_shape(self.bias, (out_channels,), "conv bias")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_len(self) -> int:
        return self.weights.shape[2]


def _pad_widths(kernel_len: int, padding: str) -> Tuple[int, int]:
    if padding not in PADDING_MODES:
        raise ValueError(f"padding must be one of {PADDING_MODES}, got {padding!r}")
    if padding == "valid":
        return 0, 0
    total = kernel_len - 1
    return total // 2, total - total // 2


def conv1d_output_len(length: int, kernel_len: int, padding: str = "same") -> int:
    left, right = _pad_widths(kernel_len, padding)
    return length + left + right - kernel_len + 1


def _windows(x: Tensor, kernel_len: int, padding: str) -> Tensor:
    left, right = _pad_widths(kernel_len, padding)
    if left or right:
        x = np.pad(x, ((0, 0), (0, 0), (left, right)))
    # (B, C, L', k)
    return sliding_window_view(x, kernel_len, axis=2)


def _check_input(x: Tensor, p: ConvParams, padding: str) -> None:
    require_rank(x, 3, "conv input")
    if x.shape[1] != p.in_channels:
        raise ShapeMismatchError(
            f"conv input has {x.shape[1]} channels, kernel expects {p.in_channels}"
        )
    if padding == "valid" and x.shape[2] < p.kernel_len:
        raise ShapeMismatchError(
            f"input length {x.shape[2]} shorter than kernel {p.kernel_len}"
        )


def conv1d_forward(x: Tensor, p: ConvParams, padding: str = "same") -> Tensor:
    """
    Cross-correlate a batch with a bank of kernels.

    ``out[b, o, i] = bias[o] + sum_{c,k} w[o, c, k] * x[b, c, i + k]`` on the
    (zero-padded, for ``same``) input. Same padding splits the ``k - 1``
    padding samples between both ends, the extra one going to the right.

    Parameters
    ----------
    x : Tensor
        Input of shape (B, Cin, L).
    p : ConvParams
        Kernel and bias.
    padding : str
        ``"same"`` keeps the length, ``"valid"`` gives ``L - k + 1``.

    Returns
    -------
    Tensor
        Output of shape (B, Cout, L').
    """
    _check_input(x, p, padding)
    win = _windows(x, p.kernel_len, padding)
    out = np.einsum("bclk,ock->bol", win, p.weights, optimize=True)
    return out + p.bias[None, :, None]


def conv1d_backward(
    x: Tensor, p: ConvParams, grad_out: Tensor, padding: str = "same"
) -> GradBundle:
    """
    Exact gradients of :func:`conv1d_forward`.

    Returns
    -------
    GradBundle
        ``input_grad`` shaped like ``x`` and ``param_grads`` with keys
        ``"weights"`` and ``"bias"``.
    """
    _check_input(x, p, padding)
    out_len = conv1d_output_len(x.shape[2], p.kernel_len, padding)
    require_shape(
        grad_out, (x.shape[0], p.out_channels, out_len), "conv grad_out"
    )
    win = _windows(x, p.kernel_len, padding)
    grad_w = np.einsum("bclk,bol->ock", win, grad_out, optimize=True)
    grad_b = grad_out.sum(axis=(0, 2))

    left, right = _pad_widths(p.kernel_len, padding)
    padded = np.zeros(
        (x.shape[0], x.shape[1], x.shape[2] + left + right),
        dtype=np.result_type(x, grad_out, p.weights),
    )
    for k in range(p.kernel_len):
        padded[:, :, k : k + out_len] += np.einsum(
            "oc,bol->bcl", p.weights[:, :, k], grad_out, optimize=True
        )
    grad_x = padded[:, :, left : left + x.shape[2]]
    return GradBundle(
        input_grad=grad_x, param_grads={"weights": grad_w, "bias": grad_b}
    )


def maxpool1d_output_len(length: int, window: int = 2, stride: int = 2) -> int:
    return (length - window) // stride + 1


def maxpool1d(x: Tensor, window: int = 2, stride: int = 2) -> Tuple[Tensor, Tensor]:
    """
    Max-pool along the length axis.

    Parameters
    ----------
    x : Tensor
        Input of shape (B, C, L) with ``L >= window``.
    window, stride : int
        Pool width and step.

    Returns
    -------
    out : Tensor
        Shape (B, C, floor((L - window) / stride) + 1).
    indices : Tensor
        Position along L of the maximum of each window (first one on ties).
    """
    require_rank(x, 3, "pool input")
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")
    if x.shape[2] < window:
        raise ShapeMismatchError(
            f"input length {x.shape[2]} shorter than pool window {window}"
        )
    win = sliding_window_view(x, window, axis=2)[:, :, ::stride]
    arg = win.argmax(axis=3)
    indices = arg + (np.arange(win.shape[2]) * stride)[None, None, :]
    out = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
    return out, indices


def maxpool1d_backward(
    input_shape: Tuple[int, ...], indices: Tensor, grad_out: Tensor
) -> Tensor:
    """Route ``grad_out`` to the argmax positions recorded by :func:`maxpool1d`."""
    if indices.shape != grad_out.shape:
        raise ShapeMismatchError(
            f"grad_out shape {grad_out.shape} does not match pool output {indices.shape}"
        )
    grad_x = np.zeros(input_shape, dtype=grad_out.dtype)
    b_idx, c_idx, _ = np.indices(indices.shape)
    # overlapping windows (stride < window) may share an argmax
    np.add.at(grad_x, (b_idx, c_idx, indices), grad_out)
    return grad_x
