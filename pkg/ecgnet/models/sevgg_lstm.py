"""SE-VGG-LSTM classifier assembled from the layer kernels in ``ecgnet.nn``.

The network is five convolutional parts, each ending in a max-pool, with
optional squeeze-and-excitation blocks after the convolutions of selected
parts. An LSTM reads the pooled feature map as a sequence and its final
hidden state feeds a three-layer fully connected head closed by a softmax.
"""

import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config import (
    format_int_list,
    format_kv_text,
    format_parts,
    parse_int_list,
    parse_kv_text,
    parse_number,
    parse_parts,
)
from ..constants import (
    CONV_PRESETS,
    DEFAULT_FC_HIDDEN,
    DEFAULT_KERNEL_LEN,
    DEFAULT_LSTM_HIDDEN,
    DEFAULT_SE_POSITIONS,
    DEFAULT_SE_REDUCTION,
    POOL_STRIDE,
    POOL_WINDOW,
)
from ..exceptions import ConfigError, ShapeMismatchError
from ..nn.activations import relu, relu_backward, softmax
from ..nn.conv import (
    ConvParams,
    conv1d_backward,
    conv1d_forward,
    conv1d_output_len,
    maxpool1d,
    maxpool1d_backward,
    maxpool1d_output_len,
)
from ..nn.dense import dense_backward, dense_forward
from ..nn.lstm import LstmParams, lstm_backward, lstm_forward
from ..nn.se import SEParams, se_block_backward, se_block_forward
from ..nn.tensor import Tensor

logger = logging.getLogger(__name__)

NUM_PARTS = 5
NUM_FC = 3


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture of the classifier.

    Attributes
    ----------
    input_len : int
        Samples per segment.
    num_classes : int
        Number of output classes K.
    conv_parts : Tuple[Tuple[int, int], ...]
        ``(layer_count, channels)`` for each of the five parts.
    kernel_len : int
        Convolution kernel length (same padding).
    se_positions : Tuple[int, ...]
        1-based indices of the parts followed by an SE block.
    se_reduction : int
        SE reduction ratio r.
    lstm_hidden : int
        LSTM hidden size.
    fc_sizes : Tuple[int, int, int], optional
        Widths of the three dense layers; defaults to ``(256, 64, K)``.
    """

    input_len: int
    num_classes: int
    conv_parts: Tuple[Tuple[int, int], ...] = CONV_PRESETS["vgg11"]
    kernel_len: int = DEFAULT_KERNEL_LEN
    se_positions: Tuple[int, ...] = DEFAULT_SE_POSITIONS
    se_reduction: int = DEFAULT_SE_REDUCTION
    lstm_hidden: int = DEFAULT_LSTM_HIDDEN
    fc_sizes: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "conv_parts", tuple(tuple(p) for p in self.conv_parts))
        object.__setattr__(self, "se_positions", tuple(sorted(set(self.se_positions))))
        if self.fc_sizes is None:
            object.__setattr__(
                self, "fc_sizes", tuple(DEFAULT_FC_HIDDEN) + (self.num_classes,)
            )
        else:
            object.__setattr__(self, "fc_sizes", tuple(self.fc_sizes))
        self.validate()

    def validate(self) -> None:
        """
        Raises
        ------
        ConfigError
            If any architectural invariant is violated.
        """
        if self.num_classes < 1:
            raise ConfigError("num_classes must be at least 1")
        if len(self.conv_parts) != NUM_PARTS:
            raise ConfigError(
                f"conv_parts needs exactly {NUM_PARTS} parts, got {len(self.conv_parts)}"
            )
        for count, channels in self.conv_parts:
            if count < 1 or channels < 1:
                raise ConfigError(f"invalid conv part ({count}, {channels})")
        if self.kernel_len < 1:
            raise ConfigError("kernel_len must be positive")
        for position in self.se_positions:
            if not 1 <= position <= NUM_PARTS:
                raise ConfigError(f"se position {position} outside 1..{NUM_PARTS}")
            channels = self.conv_parts[position - 1][1]
            if self.se_reduction < 1 or channels % self.se_reduction:
                raise ConfigError(
                    f"part {position} has {channels} channels, "
                    f"not divisible by se_reduction {self.se_reduction}"
                )
        if self.lstm_hidden < 1:
            raise ConfigError("lstm_hidden must be positive")
        if len(self.fc_sizes) != NUM_FC or min(self.fc_sizes) < 1:
            raise ConfigError(f"fc_sizes needs {NUM_FC} positive widths, got {self.fc_sizes}")
        if self.fc_sizes[-1] != self.num_classes:
            raise ConfigError(
                f"last fc width {self.fc_sizes[-1]} must equal num_classes {self.num_classes}"
            )
        minimum = POOL_WINDOW * POOL_STRIDE ** (NUM_PARTS - 1)
        if self.input_len < minimum:
            raise ConfigError(
                f"input_len {self.input_len} too short to survive {NUM_PARTS} pools "
                f"(minimum {minimum})"
            )

    @classmethod
    def from_variant(
        cls, variant: str, input_len: int, num_classes: int, **overrides
    ) -> "ModelConfig":
        """
        Build a config from a named preset.

        ``variant`` is ``vgg11``, ``vgg13`` or ``vgg16``, optionally prefixed
        with ``se`` (``sevgg11``) to keep the SE blocks; without the prefix
        the network has none.
        """
        name = variant.lower()
        with_se = name.startswith("se")
        depth = name[2:] if with_se else name
        if depth not in CONV_PRESETS:
            raise ConfigError(f"unknown model variant {variant!r}")
        kwargs = {
            "conv_parts": CONV_PRESETS[depth],
            "se_positions": DEFAULT_SE_POSITIONS if with_se else (),
        }
        kwargs.update(overrides)
        return cls(input_len=input_len, num_classes=num_classes, **kwargs)

    def to_mapping(self) -> Dict[str, str]:
        return {
            "input_len": str(self.input_len),
            "num_classes": str(self.num_classes),
            "conv_parts": format_parts(self.conv_parts),
            "kernel_len": str(self.kernel_len),
            "se_positions": format_int_list(self.se_positions),
            "se_reduction": str(self.se_reduction),
            "lstm_hidden": str(self.lstm_hidden),
            "fc_sizes": format_int_list(self.fc_sizes),
        }

    @classmethod
    def parse_fields(cls, values: Mapping[str, str]) -> Dict[str, object]:
        """Convert raw text values into typed constructor arguments."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown model config keys {unknown}")
        kwargs: Dict[str, object] = {}
        for key, value in values.items():
            if key == "conv_parts":
                kwargs[key] = parse_parts(value, key)
            elif key in ("se_positions", "fc_sizes"):
                kwargs[key] = parse_int_list(value, key)
            else:
                kwargs[key] = parse_number(value, int, key)
        return kwargs

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "ModelConfig":
        kwargs = cls.parse_fields(values)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"incomplete model config: {exc}") from exc

    def to_text(self) -> str:
        return format_kv_text(self.to_mapping())

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        return cls.from_mapping(parse_kv_text(text, "<model config>"))


def _uniform(rng: np.random.Generator, shape, fan_in: int, gain: float, dtype) -> Tensor:
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


RELU_GAIN = np.sqrt(2.0)


class Layer:
    """
    Base class of the graph layers.

    Subclasses keep their parameters in ``params`` and whatever the backward
    pass needs in ``cache``.
    """

    kind = "layer"

    def __init__(self, name: str):
        self.name = name
        self.params: Dict[str, Tensor] = {}
        self.cache: Dict[str, object] = {}

    def output_shape(self, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return shape

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor) -> Tuple[Tensor, Dict[str, Tensor]]:
        raise NotImplementedError

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())


class Conv1dLayer(Layer):
    kind = "conv"

    def __init__(self, name, in_channels, out_channels, kernel_len, rng, dtype):
        super().__init__(name)
        fan_in = in_channels * kernel_len
        self.params["weights"] = _uniform(
            rng, (out_channels, in_channels, kernel_len), fan_in, RELU_GAIN, dtype
        )
        self.params["bias"] = np.zeros(out_channels, dtype=dtype)

    @property
    def conv_params(self) -> ConvParams:
        return ConvParams(self.params["weights"], self.params["bias"])

    def output_shape(self, shape):
        channels, length = shape
        weights = self.params["weights"]
        if channels != weights.shape[1]:
            raise ShapeMismatchError(f"{self.name}: expected {weights.shape[1]} channels")
        return weights.shape[0], conv1d_output_len(length, weights.shape[2], "same")

    def forward(self, x):
        self.cache["x"] = x
        return conv1d_forward(x, self.conv_params, "same")

    def backward(self, grad):
        bundle = conv1d_backward(self.cache["x"], self.conv_params, grad, "same")
        return bundle.input_grad, bundle.param_grads


class ReLULayer(Layer):
    kind = "relu"

    def forward(self, x):
        self.cache["x"] = x
        return relu(x)

    def backward(self, grad):
        return relu_backward(self.cache["x"], grad), {}


class SELayer(Layer):
    kind = "se"

    def __init__(self, name, channels, reduction, rng, dtype):
        super().__init__(name)
        hidden = channels // reduction
        self.reduction = reduction
        self.params["w1"] = _uniform(rng, (hidden, channels), channels, RELU_GAIN, dtype)
        self.params["w2"] = _uniform(rng, (channels, hidden), hidden, 1.0, dtype)

    @property
    def se_params(self) -> SEParams:
        return SEParams(self.params["w1"], self.params["w2"], self.reduction)

    def output_shape(self, shape):
        if shape[0] != self.params["w1"].shape[1]:
            raise ShapeMismatchError(f"{self.name}: channel count mismatch")
        return shape

    def forward(self, x):
        self.cache["x"] = x
        return se_block_forward(x, self.se_params)

    def backward(self, grad):
        bundle = se_block_backward(self.cache["x"], self.se_params, grad)
        return bundle.input_grad, bundle.param_grads


class MaxPoolLayer(Layer):
    kind = "pool"

    def __init__(self, name, window=POOL_WINDOW, stride=POOL_STRIDE):
        super().__init__(name)
        self.window = window
        self.stride = stride

    def output_shape(self, shape):
        channels, length = shape
        if length < self.window:
            raise ShapeMismatchError(f"{self.name}: length {length} below pool window")
        return channels, maxpool1d_output_len(length, self.window, self.stride)

    def forward(self, x):
        out, indices = maxpool1d(x, self.window, self.stride)
        self.cache["input_shape"] = x.shape
        self.cache["indices"] = indices
        return out

    def backward(self, grad):
        return maxpool1d_backward(self.cache["input_shape"], self.cache["indices"], grad), {}


class LstmLayer(Layer):
    """LSTM over the length axis; emits the final hidden state."""

    kind = "lstm"

    def __init__(self, name, input_size, hidden, rng, dtype):
        super().__init__(name)
        bound = 1.0 / np.sqrt(hidden)
        self.params["input_weights"] = rng.uniform(
            -bound, bound, size=(4 * hidden, input_size)
        ).astype(dtype)
        self.params["recurrent_weights"] = rng.uniform(
            -bound, bound, size=(4 * hidden, hidden)
        ).astype(dtype)
        biases = np.zeros(4 * hidden, dtype=dtype)
        biases[hidden : 2 * hidden] = 1.0  # forget gate
        self.params["biases"] = biases

    @property
    def lstm_params(self) -> LstmParams:
        return LstmParams(
            self.params["input_weights"],
            self.params["recurrent_weights"],
            self.params["biases"],
        )

    def output_shape(self, shape):
        if shape[0] != self.params["input_weights"].shape[1]:
            raise ShapeMismatchError(f"{self.name}: feature size mismatch")
        return (self.params["recurrent_weights"].shape[1],)

    def forward(self, x):
        result = lstm_forward(x, self.lstm_params)
        self.cache["result"] = result
        return result.last

    def backward(self, grad):
        bundle = lstm_backward(self.lstm_params, self.cache["result"], grad)
        return bundle.input_grad, bundle.param_grads


class DenseLayer(Layer):
    kind = "dense"

    def __init__(self, name, in_features, out_features, gain, rng, dtype):
        super().__init__(name)
        self.params["weights"] = _uniform(
            rng, (out_features, in_features), in_features, gain, dtype
        )
        self.params["bias"] = np.zeros(out_features, dtype=dtype)

    def output_shape(self, shape):
        if shape != (self.params["weights"].shape[1],):
            raise ShapeMismatchError(f"{self.name}: expected {self.params['weights'].shape[1]} features")
        return (self.params["weights"].shape[0],)

    def forward(self, x):
        self.cache["x"] = x
        return dense_forward(x, self.params["weights"], self.params["bias"])

    def backward(self, grad):
        bundle = dense_backward(self.cache["x"], self.params["weights"], self.params["bias"], grad)
        return bundle.input_grad, bundle.param_grads


class SoftmaxLayer(Layer):
    """Final normalization; the loss gradient enters just before it."""

    kind = "softmax"

    def forward(self, x):
        return softmax(x)


@dataclass
class ModelGraph:
    """
    A built network.

    Attributes
    ----------
    config : ModelConfig
        Architecture the graph was built from.
    layers : List[Layer]
        Layers in execution order, ending with a :class:`SoftmaxLayer`.
    shapes : List[Tuple[int, ...]]
        Output shape of every layer, batch axis excluded.
    """

    config: ModelConfig
    layers: List[Layer]
    shapes: List[Tuple[int, ...]] = field(default_factory=list)

    def parameters(self) -> Dict[str, Tensor]:
        """Every parameter array under ``"<layer>.<param>"``, in layer order."""
        return {
            f"{layer.name}.{name}": value
            for layer in self.layers
            for name, value in layer.params.items()
        }

    def set_parameters(self, values: Mapping[str, Tensor]) -> None:
        current = self.parameters()
        if set(values) != set(current):
            missing = sorted(set(current) - set(values))
            extra = sorted(set(values) - set(current))
            raise ShapeMismatchError(f"parameter names differ: missing {missing}, extra {extra}")
        for layer in self.layers:
            for name in layer.params:
                value = np.asarray(values[f"{layer.name}.{name}"])
                if value.shape != layer.params[name].shape:
                    raise ShapeMismatchError(
                        f"{layer.name}.{name}: shape {value.shape}, "
                        f"expected {layer.params[name].shape}"
                    )
                layer.params[name] = value.astype(layer.params[name].dtype)

    def clear_cache(self) -> None:
        for layer in self.layers:
            layer.cache.clear()

    def census(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for layer in self.layers:
            counts[layer.kind] = counts.get(layer.kind, 0) + 1
        return counts

    def astype(self, dtype) -> "ModelGraph":
        """Copy of the graph with parameters converted to ``dtype``."""
        clone = build_model(self.config, seed=0, dtype=dtype)
        clone.set_parameters({k: v.astype(dtype) for k, v in self.parameters().items()})
        return clone


def _build_layers(cfg: ModelConfig, rng: np.random.Generator, dtype) -> List[Layer]:
    layers: List[Layer] = []
    channels = 1
    for part, (count, width) in enumerate(cfg.conv_parts, start=1):
        for index in range(1, count + 1):
            layers.append(
                Conv1dLayer(f"conv{part}_{index}", channels, width, cfg.kernel_len, rng, dtype)
            )
            layers.append(ReLULayer(f"relu{part}_{index}"))
            channels = width
        if part in cfg.se_positions:
            layers.append(SELayer(f"se{part}", channels, cfg.se_reduction, rng, dtype))
        layers.append(MaxPoolLayer(f"pool{part}"))

    layers.append(LstmLayer("lstm", channels, cfg.lstm_hidden, rng, dtype))
    features = cfg.lstm_hidden
    for index, width in enumerate(cfg.fc_sizes, start=1):
        last = index == len(cfg.fc_sizes)
        gain = 1.0 if last else RELU_GAIN
        layers.append(DenseLayer(f"fc{index}", features, width, gain, rng, dtype))
        if not last:
            layers.append(ReLULayer(f"relu_fc{index}"))
        features = width
    layers.append(SoftmaxLayer("softmax"))
    return layers


def trace_shapes(layers: Sequence[Layer], input_len: int) -> List[Tuple[int, ...]]:
    shape: Tuple[int, ...] = (1, input_len)
    trace = []
    for layer in layers:
        shape = tuple(layer.output_shape(shape))
        trace.append(shape)
    return trace


def infer_shapes(cfg: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """
    Per-layer output shapes (batch axis excluded) from the config alone.

    The trace is computed from the layer specs without running any kernel.
    """
    shapes: List[Tuple[str, Tuple[int, ...]]] = []
    channels, length = 1, cfg.input_len
    for part, (count, width) in enumerate(cfg.conv_parts, start=1):
        for index in range(1, count + 1):
            length = conv1d_output_len(length, cfg.kernel_len, "same")
            channels = width
            shapes.append((f"conv{part}_{index}", (channels, length)))
            shapes.append((f"relu{part}_{index}", (channels, length)))
        if part in cfg.se_positions:
            shapes.append((f"se{part}", (channels, length)))
        length = maxpool1d_output_len(length, POOL_WINDOW, POOL_STRIDE)
        shapes.append((f"pool{part}", (channels, length)))
    shapes.append(("lstm", (cfg.lstm_hidden,)))
    for index, width in enumerate(cfg.fc_sizes, start=1):
        shapes.append((f"fc{index}", (width,)))
        if index < len(cfg.fc_sizes):
            shapes.append((f"relu_fc{index}", (width,)))
    shapes.append(("softmax", (cfg.num_classes,)))
    return shapes


def build_model(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelGraph:
    """
    Build and initialize the network.

    Conv and dense weights are drawn from a fan-in scaled uniform
    distribution, LSTM weights from ``U(-1/sqrt(H), 1/sqrt(H))`` with the
    forget-gate bias at +1, and all biases otherwise start at zero.

    Parameters
    ----------
    cfg : ModelConfig
        Architecture.
    seed : int
        Seed of the initialization; equal seeds give identical parameters.
    dtype : numpy dtype
        Parameter precision, float32 unless gradients are being checked.

    Returns
    -------
    ModelGraph
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    layers = _build_layers(cfg, rng, dtype)
    shapes = trace_shapes(layers, cfg.input_len)
    graph = ModelGraph(config=cfg, layers=layers, shapes=shapes)
    logger.debug(
        "built model: %s",
        ", ".join(f"{layer.name}{shape}" for layer, shape in zip(layers, shapes)),
    )
    return graph


def forward(model: ModelGraph, batch: Tensor) -> Tensor:
    """
    Class probabilities for a batch of segments.

    Parameters
    ----------
    model : ModelGraph
        Built network; activations are cached on its layers for
        :func:`backward`.
    batch : Tensor
        Shape (B, 1, input_len).

    Returns
    -------
    Tensor
        Shape (B, K); every row is a softmax distribution.
    """
    batch = np.asarray(batch)
    expected = (1, model.config.input_len)
    if batch.ndim != 3 or batch.shape[1:] != expected:
        raise ShapeMismatchError(
            f"batch shape {batch.shape} does not match (B, {expected[0]}, {expected[1]})"
        )
    dtype = next(iter(model.parameters().values()), batch).dtype
    x = batch.astype(dtype, copy=False)
    for index, layer in enumerate(model.layers):
        x = layer.forward(x)
        if model.shapes and x.shape[1:] != model.shapes[index]:
            raise ShapeMismatchError(
                f"{layer.name} produced {x.shape[1:]}, shape trace says {model.shapes[index]}"
            )
    return x


def backward(model: ModelGraph, grad_logits: Tensor) -> Dict[str, Tensor]:
    """
    Parameter gradients given the loss gradient at the pre-softmax logits.

    Must follow a :func:`forward` call on the same model.
    """
    grads: Dict[str, Tensor] = {}
    grad = grad_logits
    for layer in reversed(model.layers[:-1]):
        grad, param_grads = layer.backward(grad)
        for name, value in param_grads.items():
            grads[f"{layer.name}.{name}"] = value
    return grads


def count_parameters(model: ModelGraph) -> int:
    return int(sum(layer.param_count() for layer in model.layers))


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count of a config."""
    total = 0
    channels = 1
    for part, (count, width) in enumerate(cfg.conv_parts, start=1):
        for _ in range(count):
            total += width * channels * cfg.kernel_len + width
            channels = width
        if part in cfg.se_positions:
            total += 2 * channels * (channels // cfg.se_reduction)
    hidden = cfg.lstm_hidden
    total += 4 * hidden * (channels + hidden) + 4 * hidden
    features = hidden
    for width in cfg.fc_sizes:
        total += features * width + width
        features = width
    return total


def predict_proba(model: ModelGraph, values: Tensor, batch_size: int = 64) -> Tensor:
    """Probabilities for rows of shape (n, input_len), computed in batches."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ShapeMismatchError(f"expected (n, input_len) values, got {values.shape}")
    chunks = [
        forward(model, values[start : start + batch_size, None, :])
        for start in range(0, values.shape[0], batch_size)
    ]
    if not chunks:
        return np.zeros((0, model.config.num_classes))
    return np.concatenate(chunks)


def predict(model: ModelGraph, values: Tensor, batch_size: int = 64) -> np.ndarray:
    return predict_proba(model, values, batch_size).argmax(axis=1)
