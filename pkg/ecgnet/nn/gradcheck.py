"""Central finite-difference checks of hand-written backward passes."""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional

import numpy as np

from ..exceptions import NonFiniteError, ShapeMismatchError
from .tensor import Tensor

logger = logging.getLogger(__name__)

Point = Dict[str, Tensor]


@dataclass(frozen=True)
class GradCheckOp:
    """
    A differentiable operation under test.

    Attributes
    ----------
    forward : Callable[[Point], Tensor]
        Evaluates the operation at a point (a mapping of named arrays).
        May return a tensor or a scalar.
    backward : Callable[[Point, Tensor], Dict[str, Tensor]]
        Given the point and a cotangent shaped like the forward output,
        returns the gradient for each named array.
    """

    forward: Callable[[Point], Tensor]
    backward: Callable[[Point, Tensor], Dict[str, Tensor]]


def _relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def _require_finite(values: Tensor, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"non-finite values in {what}")


def _positions(size: int, fraction: Optional[float], rng) -> Iterable[int]:
    if fraction is None or fraction >= 1:
        return range(size)
    count = max(1, int(round(size * fraction)))
    return np.sort(rng.choice(size, size=count, replace=False))


def grad_check(
    op: GradCheckOp,
    point: Point,
    epsilon: float = 1e-5,
    seed: int = 0,
    fraction: Optional[float] = None,
) -> float:
    """
    Compare an analytic backward pass against central differences.

    A random cotangent ``R`` (seeded) turns a tensor-valued operation into
    the scalar ``sum(forward(point) * R)``; the numeric derivative of each
    entry is ``sum((f(x + eps) - f(x - eps)) * R) / (2 eps)``.

    Parameters
    ----------
    op : GradCheckOp
        Operation under test.
    point : Dict[str, Tensor]
        Named inputs and parameters. They are copied to float64 first.
    epsilon : float
        Perturbation size.
    seed : int
        Seed for the cotangent and for entry sampling.
    fraction : float, optional
        Check only this share of the entries of every array (at least one).

    Returns
    -------
    float
        Maximum of ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``
        over every checked entry.

    Raises
    ------
    NonFiniteError
        If the forward output, an analytic gradient or a finite difference
        is not finite.
    """
    rng = np.random.default_rng(seed)
    point = {name: np.array(value, dtype=np.float64) for name, value in point.items()}
    out = np.asarray(op.forward(point), dtype=np.float64)
    _require_finite(out, "forward output")
    cotangent = rng.standard_normal(out.shape) if out.ndim else np.float64(1.0)
    analytic = op.backward(point, cotangent)

    worst = 0.0
    for name, grad in analytic.items():
        value = point[name]
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != value.shape:
            raise ShapeMismatchError(
                f"gradient of {name} has shape {grad.shape}, value has {value.shape}"
            )
        _require_finite(grad, f"analytic gradient of {name}")
        flat = value.reshape(-1)
        flat_grad = grad.reshape(-1)
        for pos in _positions(flat.size, fraction, rng):
            original = flat[pos]
            flat[pos] = original + epsilon
            plus = np.asarray(op.forward(point), dtype=np.float64)
            flat[pos] = original - epsilon
            minus = np.asarray(op.forward(point), dtype=np.float64)
            flat[pos] = original
            numeric = float(np.sum((plus - minus) * cotangent) / (2 * epsilon))
            if not np.isfinite(numeric):
                raise NonFiniteError(f"non-finite finite difference for {name}[{pos}]")
            worst = max(worst, _relative_error(float(flat_grad[pos]), numeric))
    logger.debug("grad_check max relative error %.3e", worst)
    return worst
