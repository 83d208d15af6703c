"""Oversampling, k-fold cross-validation and mini-batch training."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Dict, List, Mapping, Optional

import numpy as np
import pandas as pd

from .config import parse_bool, parse_number
from .constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from .data import Dataset, dataset_norm_stats, normalize_dataset
from .exceptions import ConfigError, NonFiniteError
from .metrics import (
    ConfusionMatrix,
    MetricReport,
    average_reports,
    build_report,
    confusion_matrix,
)
from .models.sevgg_lstm import ModelConfig, ModelGraph, backward, build_model, forward, predict
from .nn.activations import cross_entropy

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")
OVERSAMPLE_STAGES = ("train_fold", "before_split")
NORM_SCOPES = ("all", "train_only")


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization and evaluation settings.

    Attributes
    ----------
    epochs, batch_size : int
        Passes over the training data and rows per mini-batch.
    learning_rate : float
        Step size; zero freezes the parameters.
    optimizer : str
        ``"adam"`` or ``"sgd"``.
    seed : int
        Root seed for fold assignment, initialization, shuffling and
        oversampling.
    k_folds : int
        Number of cross-validation folds.
    oversample : bool
        Balance the training data by random oversampling.
    oversample_stage : str
        ``"train_fold"`` balances each training fold; ``"before_split"``
        balances the whole dataset before it is split.
    norm_scope : str
        ``"all"`` expects data normalized with pooled statistics;
        ``"train_only"`` normalizes each fold with its training statistics.
    workers : int
        Folds trained in parallel.
    """

    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    k_folds: int = 10
    oversample: bool = True
    oversample_stage: str = "train_fold"
    norm_scope: str = "all"
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.workers < 1:
            raise ConfigError("epochs, batch_size and workers must be positive")
        if self.learning_rate < 0 or not np.isfinite(self.learning_rate):
            raise ConfigError(f"invalid learning_rate {self.learning_rate}")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be at least 2")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        for value, allowed, key in (
            (self.optimizer, OPTIMIZERS, "optimizer"),
            (self.oversample_stage, OVERSAMPLE_STAGES, "oversample_stage"),
            (self.norm_scope, NORM_SCOPES, "norm_scope"),
        ):
            if value not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {value!r}")

    def to_mapping(self) -> Dict[str, str]:
        values = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                values[f.name] = str(value).lower()
            elif isinstance(value, float):
                values[f.name] = repr(value)
            else:
                values[f.name] = str(value)
        return values

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "TrainConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(values) - set(kinds))
        if unknown:
            raise ConfigError(f"unknown training config keys {unknown}")
        kwargs = {}
        for key, value in values.items():
            kind = kinds[key]
            if kind in (bool, "bool"):
                kwargs[key] = parse_bool(value, key)
            elif kind in (int, "int"):
                kwargs[key] = parse_number(value, int, key)
            elif kind in (float, "float"):
                kwargs[key] = parse_number(value, float, key)
            else:
                kwargs[key] = value
        return cls(**kwargs)


def _round_half_up_ratio(numerator: int, denominator: int) -> int:
    return (2 * numerator + denominator) // (2 * denominator)


def oversample(data: Dataset, seed: int = 0) -> Dataset:
    """
    Random oversampling of the minority classes.

    With ``N_max`` the largest class count and ``rho = N_max / N_c``: a class
    with ``rho >= 2`` is replicated whole ``m = round_half_up(rho)`` times;
    a class with ``1 < rho < 2`` gains ``N_max - N_c`` (that is
    ``(rho - 1) * N_c``) duplicates drawn without replacement. The largest
    class is left alone. Copies keep the ``origin`` of their source rows.

    Parameters
    ----------
    data : Dataset
        Segments to balance.
    seed : int
        Seed of the partial-duplication draws.

    Returns
    -------
    Dataset
        Original rows first, then the duplicates class by class.

    Raises
    ------
    ValueError
        If the dataset is empty.
    """
    counts = data.class_counts
    if len(data) == 0:
        raise ValueError("cannot oversample an empty dataset")
    rng = np.random.default_rng(seed)
    n_max = int(counts.max())
    extra: List[np.ndarray] = []
    for cls, n_c in enumerate(counts.tolist()):
        if n_c == 0 or n_c == n_max:
            continue
        members = np.flatnonzero(data.labels == cls)
        if n_max >= 2 * n_c:
            multiple = _round_half_up_ratio(n_max, n_c)
            extra.append(np.tile(members, multiple - 1))
        else:
            picked = rng.choice(members, size=n_max - n_c, replace=False)
            extra.append(np.sort(picked))
    indices = np.concatenate([np.arange(len(data))] + extra)
    balanced = data.subset(indices)
    logger.info(
        "oversampled class counts %s -> %s",
        counts.tolist(),
        balanced.class_counts.tolist(),
    )
    return balanced


@dataclass(frozen=True)
class FoldSplit:
    """Train/test partition of one fold; indices point into the split dataset."""

    fold_index: int
    train_indices: np.ndarray
    test_indices: np.ndarray


def kfold_split(n: int, k: int = 10, seed: int = 0) -> List[FoldSplit]:
    """
    Shuffle ``range(n)`` and cut it into ``k`` contiguous blocks.

    Block sizes are ``ceil(n / k)`` for the first ``n % k`` blocks and
    ``floor(n / k)`` for the rest; fold ``i`` tests on block ``i`` and
    trains on the others.

    Raises
    ------
    ValueError
        If ``n < k`` or ``k < 2``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    blocks = np.array_split(order, k)
    return [
        FoldSplit(
            fold_index=i,
            train_indices=np.sort(np.concatenate(blocks[:i] + blocks[i + 1 :])),
            test_indices=np.sort(block),
        )
        for i, block in enumerate(blocks)
    ]


@dataclass
class OptimizerState:
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: Dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainConfig,
) -> OptimizerState:
    """
    Update ``params`` in place with Adam or plain SGD.

    Adam uses beta1 = 0.9, beta2 = 0.999, eps = 1e-8 with bias-corrected
    moments.

    Raises
    ------
    NonFiniteError
        If any gradient holds NaN or infinity; no parameter is touched.
    """
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if grad.shape != params[name].shape:
            raise ValueError(
                f"gradient of {name} has shape {grad.shape}, parameter {params[name].shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(
                f"non-finite gradient for {name} at optimizer step {state.step + 1} "
                f"(max |g| = {np.nanmax(np.abs(grad))})"
            )
    state.step += 1
    lr = cfg.learning_rate
    for name, grad in grads.items():
        param = params[name]
        grad = grad.astype(np.float64)
        if cfg.optimizer == "sgd":
            update = lr * grad
        else:
            m = state.first_moment.setdefault(name, np.zeros_like(grad))
            v = state.second_moment.setdefault(name, np.zeros_like(grad))
            m *= ADAM_BETA1
            m += (1 - ADAM_BETA1) * grad
            v *= ADAM_BETA2
            v += (1 - ADAM_BETA2) * grad * grad
            m_hat = m / (1 - ADAM_BETA1 ** state.step)
            v_hat = v / (1 - ADAM_BETA2 ** state.step)
            update = lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        param -= update.astype(param.dtype)
    return state


class Optimizer:
    """Owns the optimizer state of one model across epochs."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.state = OptimizerState()

    def step(self, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        optimizer_step(params, grads, self.state, self.cfg)


@dataclass(frozen=True)
class EpochStats:
    """Mean per-batch loss and running training accuracy of one epoch."""

    loss: float
    accuracy: float


def train_epoch(
    model: ModelGraph,
    data: Dataset,
    cfg: TrainConfig,
    rng: np.random.Generator,
    optimizer: Optional[Optimizer] = None,
    epoch: int = 0,
) -> EpochStats:
    """
    One shuffled pass of mini-batch training.

    The last partial batch is kept. Accuracy counts the predictions made
    during the pass, before each batch's update.

    Raises
    ------
    NonFiniteError
        If a batch loss or gradient is not finite.
    """
    optimizer = optimizer or Optimizer(cfg)
    order = rng.permutation(len(data))
    losses = []
    correct = 0
    for number, start in enumerate(range(0, len(order), cfg.batch_size)):
        rows = order[start : start + cfg.batch_size]
        labels = data.labels[rows]
        probs = forward(model, data.values[rows, None, :])
        loss, grad_logits = cross_entropy(probs, labels)
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch {number}")
        try:
            optimizer.step(model.parameters(), backward(model, grad_logits))
        except NonFiniteError as exc:
            raise NonFiniteError(f"epoch {epoch}, batch {number}: {exc}") from exc
        losses.append(loss)
        correct += int(np.sum(probs.argmax(axis=1) == labels))
        logger.debug("epoch %d batch %d loss %.6f", epoch, number, loss)
    return EpochStats(loss=float(np.mean(losses)), accuracy=correct / len(data))


def fit(
    model: ModelGraph, data: Dataset, cfg: TrainConfig, seed: int, label: str = ""
) -> List[EpochStats]:
    """Train for ``cfg.epochs`` epochs and return the per-epoch statistics."""
    rng = np.random.default_rng(seed)
    optimizer = Optimizer(cfg)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        stats = train_epoch(model, data, cfg, rng, optimizer, epoch)
        history.append(stats)
        logger.info(
            "%sepoch %d/%d loss %.4f accuracy %.4f",
            label, epoch, cfg.epochs, stats.loss, stats.accuracy,
        )
    return history


def evaluate(model: ModelGraph, data: Dataset, batch_size: int = 64) -> ConfusionMatrix:
    predictions = predict(model, data.values, batch_size)
    return confusion_matrix(data.labels, predictions, len(data.classes))


@dataclass
class FoldResult:
    """
    Outcome of one cross-validation fold.

    Attributes
    ----------
    fold_index : int
    epochs : List[EpochStats]
    confusion : ConfusionMatrix
        Scores on the held-out fold.
    report : MetricReport
    test_indices : np.ndarray
        Rows of the input dataset that were tested.
    train_origin : np.ndarray
        Input-dataset row behind every training row, duplicates included.
    model : ModelGraph
        Trained model, caches cleared.
    """

    fold_index: int
    epochs: List[EpochStats]
    confusion: ConfusionMatrix
    report: MetricReport
    test_indices: np.ndarray
    train_origin: np.ndarray
    model: ModelGraph


@dataclass
class TrainHistory:
    """Per-epoch curves of every fold plus the fold reports."""

    folds: List[FoldResult]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"fold": f.fold_index, "epoch": e, "loss": s.loss, "accuracy": s.accuracy}
            for f in self.folds
            for e, s in enumerate(f.epochs, start=1)
        ]
        return pd.DataFrame(rows, columns=["fold", "epoch", "loss", "accuracy"])


@dataclass
class CrossValidationResult:
    """
    Attributes
    ----------
    history : TrainHistory
        Fold results in fold order.
    combined : MetricReport
        Every per-class and overall metric averaged over the folds.
    pooled : ConfusionMatrix
        Sum of the fold confusion matrices.
    """

    history: TrainHistory
    combined: MetricReport
    pooled: ConfusionMatrix

    @property
    def folds(self) -> List[FoldResult]:
        return self.history.folds


def _fold_seed(seed: int, fold: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, fold, stream]).generate_state(1)[0])


BuildFn = Callable[[ModelConfig, int], ModelGraph]


def _run_fold(
    data: Dataset,
    split: FoldSplit,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    build_fn: BuildFn,
) -> FoldResult:
    fold = split.fold_index
    train = data.subset(split.train_indices)
    test = data.subset(split.test_indices)
    if train_cfg.norm_scope == "train_only":
        stats = dataset_norm_stats(train)
        logger.info("fold %d norm stats mean %.6g std %.6g", fold, stats.mean, stats.std)
        train = normalize_dataset(train, stats)
        test = normalize_dataset(test, stats)
    if train_cfg.oversample and train_cfg.oversample_stage == "train_fold":
        train = oversample(train, _fold_seed(train_cfg.seed, fold, 0))
    logger.info("fold %d: %d training rows, %d test rows", fold, len(train), len(test))

    model = build_fn(model_cfg, _fold_seed(train_cfg.seed, fold, 1))
    epochs = fit(model, train, train_cfg, _fold_seed(train_cfg.seed, fold, 2), f"fold {fold} ")
    cm = evaluate(model, test, train_cfg.batch_size)
    model.clear_cache()
    return FoldResult(
        fold_index=fold,
        epochs=epochs,
        confusion=cm,
        report=build_report(cm, data.classes),
        test_indices=test.origin,
        train_origin=train.origin,
        model=model,
    )


def run_cross_validation(
    data: Dataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    build_fn: BuildFn = build_model,
) -> CrossValidationResult:
    """
    k-fold cross-validation of freshly built, seeded models.

    Each fold optionally oversamples its training part only, so test rows
    are never duplicated into training. ``origin`` indices in the results
    refer to the rows of ``data``.

    Parameters
    ----------
    data : Dataset
        Full dataset; normalized unless ``norm_scope`` is ``"train_only"``.
    model_cfg : ModelConfig
        Architecture; ``input_len`` must equal the segment length.
    train_cfg : TrainConfig
        Optimization settings and seeds.
    build_fn : Callable[[ModelConfig, int], ModelGraph]
        Model factory, :func:`build_model` by default.

    Returns
    -------
    CrossValidationResult
    """
    if model_cfg.input_len != data.segment_len:
        raise ConfigError(
            f"model input_len {model_cfg.input_len} != segment length {data.segment_len}"
        )
    if model_cfg.num_classes != len(data.classes):
        raise ConfigError(
            f"model has {model_cfg.num_classes} classes, data has {len(data.classes)}"
        )
    if train_cfg.norm_scope == "train_only" and data.normalized:
        raise ConfigError("norm_scope train_only needs a store of raw segments")
    if train_cfg.norm_scope == "all" and not data.normalized:
        data = normalize_dataset(data, dataset_norm_stats(data))
    if train_cfg.oversample and train_cfg.oversample_stage == "before_split":
        # duplicates may land in test folds; origin keeps pointing at the source rows
        data = oversample(data, _fold_seed(train_cfg.seed, 0, 3))

    splits = kfold_split(len(data), train_cfg.k_folds, train_cfg.seed)
    args = [(data, split, model_cfg, train_cfg, build_fn) for split in splits]
    if train_cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=train_cfg.workers) as pool:
            folds = list(pool.map(_run_fold, *zip(*args)))
    else:
        folds = [_run_fold(*a) for a in args]

    reports = [f.report for f in folds]
    pooled = ConfusionMatrix(sum(f.confusion.counts for f in folds))
    return CrossValidationResult(
        history=TrainHistory(folds),
        combined=average_reports(reports),
        pooled=pooled,
    )
