"""Layer kernels with hand-written forward and backward passes."""

from .activations import (
    cross_entropy,
    relu,
    relu_backward,
    sigmoid,
    softmax,
)
from .conv import ConvParams, conv1d_backward, conv1d_forward, maxpool1d, maxpool1d_backward
from .dense import dense_backward, dense_forward
from .gradcheck import GradCheckOp, grad_check
from .lstm import LstmParams, LstmResult, lstm_backward, lstm_forward
from .se import (
    SEParams,
    se_block_backward,
    se_block_forward,
    se_excite,
    se_scale,
    se_squeeze,
)
from .tensor import GradBundle, Tensor
