"""LSTM layer with backpropagation through time."""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..exceptions import ShapeMismatchError
from .activations import sigmoid, sigmoid_backward, tanh_backward
from .tensor import GradBundle, Tensor, require_rank, require_shape

# Gate blocks are stacked in this order along the first weight axis
GATES = ("input", "forget", "cell", "output")


@dataclass
class LstmParams:
    """
    Stacked gate weights.

    Attributes
    ----------
    input_weights : Tensor
        Shape (4H, C), gate blocks in :data:`GATES` order.
    recurrent_weights : Tensor
        Shape (4H, H).
    biases : Tensor
        Shape (4H,).
    """

    input_weights: Tensor
    recurrent_weights: Tensor
    biases: Tensor

    def __post_init__(self):
        require_rank(self.input_weights, 2, "lstm input weights")
        rows = self.input_weights.shape[0]
        if rows == 0 or rows % 4:
            raise ShapeMismatchError(
                f"lstm input weights need 4H rows, got {rows}"
            )
        hidden = rows // 4
        require_shape(self.recurrent_weights, (rows, hidden), "lstm recurrent weights")
        require_shape(self.biases, (rows,), "lstm biases")

    @property
    def hidden_size(self) -> int:
        return self.input_weights.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.input_weights.shape[1]


@dataclass
class LstmResult:
    """
    Output of :func:`lstm_forward`.

    Attributes
    ----------
    hidden : Tensor
        Hidden state of every step, shape (B, L, H).
    last : Tensor
        Final hidden state, shape (B, H).
    cache : Dict[str, Tensor]
        Activations needed by :func:`lstm_backward`.
    """

    hidden: Tensor
    last: Tensor
    cache: Dict[str, Tensor] = field(default_factory=dict, repr=False)


def lstm_forward(x: Tensor, p: LstmParams) -> LstmResult:
    """
    Run the recurrence over a feature map.

    The input of shape (B, C, L) is read as L time steps of C features.
    With gates ``i, f, o = sigmoid(.)`` and candidate ``g = tanh(.)``:
    ``c_t = f * c_{t-1} + i * g`` and ``h_t = o * tanh(c_t)``, starting from
    ``h_0 = c_0 = 0``.

    Parameters
    ----------
    x : Tensor
        Input of shape (B, C, L).
    p : LstmParams
        Layer parameters; ``p.input_size`` must equal C.

    Returns
    -------
    LstmResult
    """
    require_rank(x, 3, "lstm input")
    if x.shape[1] != p.input_size:
        raise ShapeMismatchError(
            f"lstm input has {x.shape[1]} features, weights expect {p.input_size}"
        )
    batch, _, steps = x.shape
    hidden = p.hidden_size
    dtype = np.result_type(x, p.input_weights)

    xs = np.ascontiguousarray(x.transpose(0, 2, 1))
    projected = xs @ p.input_weights.T + p.biases
    gates = np.empty((batch, steps, 4 * hidden), dtype=dtype)
    h = np.zeros((batch, steps + 1, hidden), dtype=dtype)
    c = np.zeros((batch, steps + 1, hidden), dtype=dtype)
    tanh_c = np.empty((batch, steps, hidden), dtype=dtype)

    for t in range(steps):
        a = projected[:, t] + h[:, t] @ p.recurrent_weights.T
        gates[:, t, : 2 * hidden] = sigmoid(a[:, : 2 * hidden])
        gates[:, t, 2 * hidden : 3 * hidden] = np.tanh(a[:, 2 * hidden : 3 * hidden])
        gates[:, t, 3 * hidden :] = sigmoid(a[:, 3 * hidden :])
        i, f, g, o = np.split(gates[:, t], 4, axis=1)
        c[:, t + 1] = f * c[:, t] + i * g
        tanh_c[:, t] = np.tanh(c[:, t + 1])
        h[:, t + 1] = o * tanh_c[:, t]

    return LstmResult(
        hidden=h[:, 1:],
        last=h[:, steps],
        cache={"xs": xs, "gates": gates, "h": h, "c": c, "tanh_c": tanh_c},
    )


def lstm_backward(
    p: LstmParams,
    result: LstmResult,
    grad_last: Tensor,
    grad_hidden: Optional[Tensor] = None,
) -> GradBundle:
    """
    Backpropagation through time.

    Parameters
    ----------
    p : LstmParams
        Parameters used by the forward pass.
    result : LstmResult
        Forward output with its cache.
    grad_last : Tensor
        Gradient with respect to the final hidden state, shape (B, H).
    grad_hidden : Tensor, optional
        Gradient with respect to every hidden state, shape (B, L, H).

    Returns
    -------
    GradBundle
        ``input_grad`` of shape (B, C, L); parameter gradients under
        ``input_weights``, ``recurrent_weights`` and ``biases``.
    """
    cache = result.cache
    xs, gates, h, c, tanh_c = (
        cache["xs"], cache["gates"], cache["h"], cache["c"], cache["tanh_c"]
    )
    batch, steps, _ = xs.shape
    hidden = p.hidden_size
    require_shape(grad_last, (batch, hidden), "lstm grad_last")
    if grad_hidden is not None:
        require_shape(grad_hidden, (batch, steps, hidden), "lstm grad_hidden")

    grad_wi = np.zeros_like(p.input_weights)
    grad_wh = np.zeros_like(p.recurrent_weights)
    grad_b = np.zeros_like(p.biases)
    grad_xs = np.zeros_like(xs)

    dh_next = grad_last.copy()
    dc_next = np.zeros_like(dh_next)
    for t in reversed(range(steps)):
        dh = dh_next if grad_hidden is None else dh_next + grad_hidden[:, t]
        i, f, g, o = np.split(gates[:, t], 4, axis=1)
        do = dh * tanh_c[:, t]
        dc = dc_next + tanh_backward(tanh_c[:, t], dh * o)
        da = np.concatenate(
            [
                sigmoid_backward(i, dc * g),
                sigmoid_backward(f, dc * c[:, t]),
                tanh_backward(g, dc * i),
                sigmoid_backward(o, do),
            ],
            axis=1,
        )
        grad_wi += da.T @ xs[:, t]
        grad_wh += da.T @ h[:, t]
        grad_b += da.sum(axis=0)
        grad_xs[:, t] = da @ p.input_weights
        dh_next = da @ p.recurrent_weights
        dc_next = dc * f

    return GradBundle(
        input_grad=grad_xs.transpose(0, 2, 1),
        param_grads={
            "input_weights": grad_wi,
            "recurrent_weights": grad_wh,
            "biases": grad_b,
        },
    )
