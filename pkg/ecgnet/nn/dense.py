"""Fully connected (affine) layer."""

from ..exceptions import ShapeMismatchError
from .tensor import GradBundle, Tensor, require_rank, require_shape


def _check(x: Tensor, weights: Tensor, bias: Tensor) -> None:
    require_rank(x, 2, "dense input")
    require_rank(weights, 2, "dense weights")
    if x.shape[1] != weights.shape[1]:
        raise ShapeMismatchError(
            f"dense input has {x.shape[1]} features, weights expect {weights.shape[1]}"
        )
    require_shape(bias, (weights.shape[0],), "dense bias")


def dense_forward(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """
    Affine map ``x @ weights.T + bias``.

    Parameters
    ----------
    x : Tensor
        Input of shape (B, N).
    weights : Tensor
        Shape (M, N).
    bias : Tensor
        Shape (M,).

    Returns
    -------
    Tensor
        Output of shape (B, M).
    """
    _check(x, weights, bias)
    return x @ weights.T + bias


def dense_backward(
    x: Tensor, weights: Tensor, bias: Tensor, grad_out: Tensor
) -> GradBundle:
    _check(x, weights, bias)
    require_shape(grad_out, (x.shape[0], weights.shape[0]), "dense grad_out")
    return GradBundle(
        input_grad=grad_out @ weights,
        param_grads={"weights": grad_out.T @ x, "bias": grad_out.sum(axis=0)},
    )
