"""Command-line front end: ``ecgnet <preprocess|train|evaluate|report>``."""

import argparse
import hashlib
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence

import pandas as pd

from .config import format_kv_text, parse_kv_text, read_kv_file
from .constants import (
    DEFAULT_WINDOW_SECONDS,
    LOSS_FILE,
    REPORT_COLUMNS,
    RUN_MANIFEST_FILE,
    SUMMARY_METRICS_FILE,
)
from .data import (
    Dataset,
    compute_norm_stats,
    label_scheme,
    load_labeled_records,
    normalize,
    normalize_dataset,
    segment,
    synthesize_records,
)
from .exceptions import (
    ConfigError,
    EcgnetError,
    RecordFormatError,
    ShapeMismatchError,
    ZeroVarianceError,
)
from .metrics import build_report, render_report
from .models.checkpoint import load_checkpoint, save_checkpoint
from .models.sevgg_lstm import ModelConfig
from .store import (
    read_norm_stats,
    read_store,
    shard_paths,
    write_norm_stats,
    write_store,
)
from .training import TrainConfig, evaluate, run_cross_validation

logger = logging.getLogger(__name__)

MODEL_KEYS = ("conv_parts", "kernel_len", "se_positions", "se_reduction",
              "lstm_hidden", "fc_sizes", "input_len", "num_classes")
TRAIN_KEYS = tuple(TrainConfig.__dataclass_fields__)
PATH_KEYS = ("segments",)


@dataclass
class RunConfig:
    """
    Parsed run configuration file.

    Attributes
    ----------
    variant : str
        Architecture preset, ``sevgg11`` by default.
    model_values : Dict[str, str]
        Raw model keys overriding the preset.
    train : TrainConfig
    paths : Dict[str, str]
        Dataset paths named in the file.
    """

    variant: str = "sevgg11"
    model_values: Dict[str, str] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, values: Dict[str, str], seed: Optional[int] = None) -> "RunConfig":
        unknown = sorted(set(values) - set(MODEL_KEYS + TRAIN_KEYS + PATH_KEYS + ("variant",)))
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        train_values = {k: v for k, v in values.items() if k in TRAIN_KEYS}
        if seed is not None:
            train_values["seed"] = str(seed)
        return cls(
            variant=values.get("variant", "sevgg11"),
            model_values={k: v for k, v in values.items() if k in MODEL_KEYS},
            train=TrainConfig.from_mapping(train_values),
            paths={k: v for k, v in values.items() if k in PATH_KEYS},
        )

    def model_config(self, input_len: int, num_classes: int) -> ModelConfig:
        """Resolve the architecture against the segment store's shape."""
        overrides = ModelConfig.parse_fields(self.model_values)
        for key, actual in (("input_len", input_len), ("num_classes", num_classes)):
            given = overrides.pop(key, actual)
            if given != actual:
                raise ConfigError(f"config {key} = {given} but the segment store has {actual}")
        return ModelConfig.from_variant(self.variant, input_len, num_classes, **overrides)

    def resolved_text(self, model_cfg: ModelConfig) -> str:
        values = {"variant": self.variant, **model_cfg.to_mapping(), **self.train.to_mapping()}
        values.update(self.paths)
        return format_kv_text(values)


def load_run_config(path: Optional[str], seed: Optional[int] = None) -> RunConfig:
    values = read_kv_file(path) if path else {}
    return RunConfig.from_mapping(values, seed)


@dataclass
class RunManifest:
    """
    Provenance of a training run.

    Attributes
    ----------
    config : Dict[str, str]
        Resolved configuration.
    dataset_fingerprint : str
        SHA-256 over the segment store shards.
    seed : int
    started, finished : str
        UTC timestamps in ISO 8601.
    artifacts : Dict[str, str]
        Output files relative to the run directory.
    """

    config: Dict[str, str]
    dataset_fingerprint: str
    seed: int
    started: str
    finished: str
    artifacts: Dict[str, str]

    def to_text(self) -> str:
        values = {f"config.{k}": v for k, v in self.config.items()}
        values.update({f"artifact.{k}": v for k, v in self.artifacts.items()})
        values.update(
            dataset_fingerprint=self.dataset_fingerprint,
            seed=self.seed,
            started=self.started,
            finished=self.finished,
        )
        return format_kv_text(values)

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        """
        Raises
        ------
        RecordFormatError
            Naming ``path`` if it is missing, unparsable or incomplete.
        """
        try:
            with open(path, encoding="utf-8") as fh:
                values = parse_kv_text(fh.read(), path)
            return cls(
                config={k[7:]: v for k, v in values.items() if k.startswith("config.")},
                artifacts={k[9:]: v for k, v in values.items() if k.startswith("artifact.")},
                dataset_fingerprint=values["dataset_fingerprint"],
                seed=int(values["seed"]),
                started=values["started"],
                finished=values["finished"],
            )
        except (OSError, UnicodeDecodeError, ConfigError, KeyError, ValueError) as exc:
            raise RecordFormatError(f"corrupt run manifest {path}: {exc!r}") from exc


def dataset_fingerprint(store_dir: str) -> str:
    digest = hashlib.sha256()
    for path in shard_paths(store_dir):
        digest.update(os.path.basename(path).encode("utf-8"))
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _echo(config_text: str) -> str:
    return "".join(f"# {line}\n" for line in config_text.splitlines())


def _write_text(path: str, text: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _verify_outputs(paths: Sequence[str]) -> None:
    missing = [p for p in paths if not os.path.isfile(p)]
    if missing:
        raise RecordFormatError(f"expected outputs were not written: {missing}")


def cmd_preprocess(args: argparse.Namespace) -> int:
    """Segment, label and normalize recordings into a segment store."""
    if args.synthetic:
        records, scheme = synthesize_records(args.synthetic, seed=args.seed or 0)
    else:
        if not (args.data and args.manifest):
            raise ConfigError("preprocess needs --data and --manifest, or --synthetic")
        scheme = label_scheme(args.labels)
        records = load_labeled_records(args.data, args.manifest, scheme)

    segments = [s for record in records for s in segment(record, args.window_seconds)]
    if not segments:
        raise RecordFormatError("no labeled segments found")
    stats = compute_norm_stats(segments)
    if stats.std == 0:
        raise ZeroVarianceError("all samples are equal; nothing to normalize")
    logger.info("norm stats: mean %.6g, std %.6g", stats.mean, stats.std)
    if args.norm_scope == "all":
        segments = [normalize(s, stats) for s in segments]
    data = Dataset.from_segments(segments, scheme)
    logger.info(
        "class counts: %s",
        dict(zip(data.classes, data.class_counts.tolist())),
    )
    outputs = [write_store(args.out, data), write_norm_stats(args.out, stats)]
    _verify_outputs(outputs)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    """Cross-validate the model on a segment store and write every artifact."""
    started = _now()
    run_cfg = load_run_config(args.config, args.seed)
    store_dir = args.segments or run_cfg.paths.get("segments")
    if not store_dir:
        raise ConfigError("no segment store given (--segments or 'segments' key)")
    data = read_store(store_dir)
    model_cfg = run_cfg.model_config(data.segment_len, len(data.classes))
    config_text = run_cfg.resolved_text(model_cfg)
    logger.info("training %s on %d segments", run_cfg.variant, len(data))

    result = run_cross_validation(data, model_cfg, run_cfg.train)

    os.makedirs(args.out, exist_ok=True)
    artifacts: Dict[str, str] = {}

    def out(name: str) -> str:
        return os.path.join(args.out, name)

    for fold in result.folds:
        k = fold.fold_index
        save_checkpoint(fold.model, out(f"fold{k}.ckpt"))
        _write_text(out(f"fold{k}.metrics.csv"), _echo(config_text) + render_report(fold.report, "csv"))
        _write_text(out(f"fold{k}.metrics.txt"), render_report(fold.report, "text"))
        artifacts[f"fold{k}.checkpoint"] = f"fold{k}.ckpt"
        artifacts[f"fold{k}.metrics"] = f"fold{k}.metrics.csv"
    curves = result.history.to_frame()
    _write_text(out(LOSS_FILE), _echo(config_text) + curves.to_csv(index=False, lineterminator="\n"))
    artifacts["loss"] = LOSS_FILE
    _write_text(out(SUMMARY_METRICS_FILE), _echo(config_text) + render_report(result.combined, "csv"))
    _write_text(out("summary.metrics.txt"), render_report(result.combined, "text"))
    artifacts["summary_metrics"] = SUMMARY_METRICS_FILE

    if args.plots:
        from .visualization import plot_confusion_matrix, plot_loss_curves

        plot_loss_curves(curves).write_html(out("loss.html"))
        artifacts["loss_plot"] = "loss.html"
        for fold in result.folds:
            name = f"fold{fold.fold_index}.confusion.html"
            plot_confusion_matrix(fold.confusion, data.classes).write_html(out(name))
            artifacts[f"fold{fold.fold_index}.confusion_plot"] = name

    manifest = RunManifest(
        config=parse_kv_text(config_text),
        dataset_fingerprint=dataset_fingerprint(store_dir),
        seed=run_cfg.train.seed,
        started=started,
        finished=_now(),
        artifacts=artifacts,
    )
    _write_text(out(RUN_MANIFEST_FILE), manifest.to_text())
    _verify_outputs([out(p) for p in artifacts.values()] + [out(RUN_MANIFEST_FILE)])
    RunManifest.read(out(RUN_MANIFEST_FILE))
    logger.info(
        "overall: acc %.3f sen %.3f pre %.3f f1 %.3f", *result.combined.overall.as_tuple()
    )
    return 0


def _report_paths(out: str) -> Dict[str, str]:
    stem, ext = os.path.splitext(out)
    if ext.lower() == ".txt":
        return {"text": out, "csv": stem + ".csv"}
    return {"csv": out, "text": stem + ".txt"}


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score every segment of a store with a checkpoint."""
    model = load_checkpoint(args.checkpoint)
    data = read_store(args.segments)
    if data.segment_len != model.config.input_len:
        raise ShapeMismatchError(
            f"store segments have {data.segment_len} samples, model expects "
            f"{model.config.input_len}"
        )
    if len(data.classes) != model.config.num_classes:
        raise ShapeMismatchError(
            f"store has {len(data.classes)} classes, model predicts {model.config.num_classes}"
        )
    if not data.normalized:
        data = normalize_dataset(data, read_norm_stats(args.segments))
    report = build_report(evaluate(model, data), data.classes)
    paths = _report_paths(args.out)
    directory = os.path.dirname(args.out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    _write_text(paths["csv"], render_report(report, "csv"))
    _write_text(paths["text"], render_report(report, "text"))
    _verify_outputs(list(paths.values()))
    logger.info("evaluated %d segments: accuracy per class %s", len(data),
                [round(m.acc, 3) for m in report.per_class])
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    """Merge the overall metrics of several runs into one table."""
    rows: List[List[str]] = []
    for run_dir in args.runs:
        manifest_path = os.path.join(run_dir, RUN_MANIFEST_FILE)
        manifest = RunManifest.read(manifest_path)
        summary = manifest.artifacts.get("summary_metrics")
        if summary is None:
            raise RecordFormatError(f"corrupt run manifest {manifest_path}: no summary metrics")
        summary_path = os.path.join(run_dir, summary)
        try:
            frame = pd.read_csv(summary_path, comment="#", dtype=str)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise RecordFormatError(f"cannot read {summary_path}: {exc}") from exc
        overall = frame[frame["class"] == "overall"] if "class" in frame else frame.iloc[0:0]
        if overall.empty:
            raise RecordFormatError(f"{summary_path} has no overall row")
        name = os.path.basename(os.path.normpath(run_dir))
        rows.append([name] + overall.iloc[0][list(REPORT_COLUMNS[1:])].tolist())

    table = pd.DataFrame(rows, columns=["run"] + list(REPORT_COLUMNS[1:]))
    paths = _report_paths(args.out)
    directory = os.path.dirname(args.out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    _write_text(paths["csv"], table.to_csv(index=False, lineterminator="\n"))
    _write_text(paths["text"], table.to_string(index=False) + "\n")
    _verify_outputs(list(paths.values()))
    return 0


def _common_flags(global_level: bool) -> argparse.ArgumentParser:
    """
    Flags accepted before and after the subcommand.

    The subcommand copies default to ``SUPPRESS`` so a value given before the
    subcommand is not overwritten.
    """
    unset = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed", type=int, default=None if global_level else unset, help="root random seed"
    )
    common.add_argument(
        "-v", "--verbose", action="store_true",
        default=False if global_level else unset, help="debug logging",
    )
    common.add_argument(
        "-q", "--quiet", action="store_true",
        default=False if global_level else unset, help="warnings only",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(global_level=False)

    parser = argparse.ArgumentParser(
        prog="ecgnet",
        description="SE-VGG-LSTM ECG classification pipeline",
        parents=[_common_flags(global_level=True)],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="build a segment store")
    p.add_argument("--data", help="directory holding the record files")
    p.add_argument("--manifest", help="record_path,segment_index,label_code CSV")
    p.add_argument("--labels", default="mitbih", help="label scheme name or code list")
    p.add_argument("--synthetic", help="synthetic fixture spec instead of --data")
    p.add_argument("--out", required=True, help="segment store directory")
    p.add_argument("--window-seconds", type=float, default=DEFAULT_WINDOW_SECONDS)
    p.add_argument("--norm-scope", choices=("all", "train_only"), default="all")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common], help="cross-validate a model")
    p.add_argument("--segments", help="segment store directory")
    p.add_argument("--config", help="key = value run configuration")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--plots", action="store_true", help="also write HTML figures")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a store with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True, help="report CSV (a .txt twin is written)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="compare completed runs")
    p.add_argument("--runs", nargs="+", required=True, help="run directories")
    p.add_argument("--out", required=True, help="comparison CSV (a .txt twin is written)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (EcgnetError, OSError, ValueError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
