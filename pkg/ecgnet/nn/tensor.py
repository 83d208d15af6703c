"""Tensor conventions shared by the layer kernels.

Tensors are plain ``numpy.ndarray`` objects of rank 1 to 3 laid out as
batch x channel x length. Every kernel validates the shapes it receives and
raises :class:`~ecgnet.exceptions.ShapeMismatchError` otherwise.
"""

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from ..exceptions import ShapeMismatchError

Tensor = np.ndarray


@dataclass
class GradBundle:
    """Gradients produced by a backward pass.

    Attributes
    ----------
    input_grad : Tensor
        Gradient with respect to the layer input.
    param_grads : Dict[str, Tensor]
        Gradient per parameter name, each with the shape of its parameter.
    """

    input_grad: Tensor
    param_grads: Dict[str, Tensor] = field(default_factory=dict)


def require_rank(x: Tensor, rank: int, name: str = "x") -> None:
    if x.ndim != rank:
        raise ShapeMismatchError(
            f"{name} must have rank {rank}, got shape {tuple(x.shape)}"
        )


def require_shape(x: Tensor, shape: Sequence[int], name: str = "x") -> None:
    if tuple(x.shape) != tuple(shape):
        raise ShapeMismatchError(
            f"{name} has shape {tuple(x.shape)}, expected {tuple(shape)}"
        )
