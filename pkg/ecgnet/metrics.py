"""Confusion matrices, per-class and overall metrics, and report rendering."""

import io
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .constants import REPORT_COLUMNS
from .exceptions import RecordFormatError

REPORT_FORMATS = ("text", "csv")


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix entries must be nonnegative")

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(
    true_labels: Sequence[int], predicted_labels: Sequence[int], k: int
) -> ConfusionMatrix:
    """
    Tally ``counts[t][p]``, the samples of true class t predicted as p.

    Raises
    ------
    ValueError
        If the sequences differ in length or hold a label outside ``[0, k)``.
    """
    true_labels = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if true_labels.size != predicted_labels.size:
        raise ValueError(
            f"{true_labels.size} true labels but {predicted_labels.size} predictions"
        )
    for labels in (true_labels, predicted_labels):
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"label out of range for {k} classes")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true_labels, predicted_labels), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class ClassMetrics:
    acc: float
    sen: float
    pre: float
    f1: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.acc, self.sen, self.pre, self.f1


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def f1_score(sen: float, pre: float) -> float:
    """Harmonic mean of sensitivity and precision, 0 when both are 0."""
    return _ratio(2 * sen * pre, sen + pre)


def per_class_metrics(cm: ConfusionMatrix, c: int) -> ClassMetrics:
    """
    One-vs-rest metrics of class ``c``.

    ``acc = (TP + TN) / total``, ``sen = TP / (TP + FN)``,
    ``pre = TP / (TP + FP)``. A ratio with a zero denominator is reported as
    0, and so is ``f1`` when ``sen + pre`` is 0.
    """
    c = getattr(c, "index", c)
    counts = cm.counts
    total = cm.total
    tp = int(counts[c, c])
    fn = int(counts[c, :].sum()) - tp
    fp = int(counts[:, c].sum()) - tp
    tn = total - tp - fn - fp
    sen = _ratio(tp, tp + fn)
    pre = _ratio(tp, tp + fp)
    return ClassMetrics(acc=_ratio(tp + tn, total), sen=sen, pre=pre, f1=f1_score(sen, pre))


def macro_average(per_class: Sequence[ClassMetrics]) -> ClassMetrics:
    """
    Unweighted mean of the per-class acc, sen and pre; f1 is the harmonic
    mean of the averaged sen and pre.
    """
    if not per_class:
        raise ValueError("no per-class metrics to average")
    acc, sen, pre = (
        float(np.mean([getattr(m, name) for m in per_class])) for name in ("acc", "sen", "pre")
    )
    return ClassMetrics(acc=acc, sen=sen, pre=pre, f1=f1_score(sen, pre))


def overall_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    return macro_average([per_class_metrics(cm, c) for c in range(cm.k)])


@dataclass
class MetricReport:
    """
    Per-class and overall metrics of one evaluation.

    Attributes
    ----------
    classes : Tuple[str, ...]
        Class codes in index order.
    per_class : List[ClassMetrics]
    overall : ClassMetrics
    notes : List[str]
        Footnotes on metrics whose denominators were zero.
    """

    classes: Tuple[str, ...]
    per_class: List[ClassMetrics]
    overall: ClassMetrics
    notes: List[str] = field(default_factory=list)

    def rows(self) -> List[Tuple[str, ClassMetrics]]:
        return list(zip(self.classes, self.per_class)) + [("overall", self.overall)]


def build_report(cm: ConfusionMatrix, classes: Sequence[str]) -> MetricReport:
    if len(classes) != cm.k:
        raise ValueError(f"{len(classes)} class names for a {cm.k}-class matrix")
    notes = []
    for c, code in enumerate(classes):
        if cm.counts[c, :].sum() == 0:
            notes.append(f"class {code}: no true samples, sen reported as 0")
        if cm.counts[:, c].sum() == 0:
            notes.append(f"class {code}: never predicted, pre reported as 0")
    per_class = [per_class_metrics(cm, c) for c in range(cm.k)]
    return MetricReport(tuple(classes), per_class, macro_average(per_class), notes)


def average_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """Average every metric of several reports over the same classes (fold combination)."""
    if not reports:
        raise ValueError("no reports to average")
    classes = reports[0].classes
    if any(r.classes != classes for r in reports):
        raise ValueError("reports cover different classes")

    def mean(items: Sequence[ClassMetrics]) -> ClassMetrics:
        values = np.mean([m.as_tuple() for m in items], axis=0)
        return ClassMetrics(*(float(v) for v in values))

    per_class = [mean([r.per_class[c] for r in reports]) for c in range(len(classes))]
    notes = sorted({note for r in reports for note in r.notes})
    return MetricReport(classes, per_class, mean([r.overall for r in reports]), notes)


def format_metric(value: float) -> str:
    """Three decimals, rounding half up on the decimal representation."""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def report_frame(report: MetricReport) -> pd.DataFrame:
    return pd.DataFrame(
        [[name] + [format_metric(v) for v in m.as_tuple()] for name, m in report.rows()],
        columns=list(REPORT_COLUMNS),
    )


def render_report(report: MetricReport, format: str = "text") -> str:
    """
    Render a report as an aligned text table or as CSV.

    The CSV has the header ``class,acc,sen,pre,f1`` and one row per class
    followed by ``overall``. The text table uses the same rows with the
    footnotes underneath.
    """
    if format not in REPORT_FORMATS:
        raise ValueError(f"format must be one of {REPORT_FORMATS}, got {format!r}")
    frame = report_frame(report)
    if format == "csv":
        return frame.to_csv(index=False, lineterminator="\n")
    frame.columns = ["Types", "Acc", "Sen", "Pre", "F1"]
    frame["Types"] = frame["Types"].replace({"overall": "Overall"})
    lines = [frame.to_string(index=False)]
    lines.extend(f"* {note}" for note in report.notes)
    return "\n".join(lines) + "\n"


def read_report_csv(source: Union[str, os.PathLike, io.StringIO]) -> MetricReport:
    """
    Parse a CSV written by :func:`render_report`; ``#`` lines are skipped.

    Raises
    ------
    RecordFormatError
        If the columns or the ``overall`` row are missing.
    """
    try:
        frame = pd.read_csv(source, comment="#", dtype={"class": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise RecordFormatError(f"cannot read report {source}: {exc}") from exc
    if list(frame.columns) != list(REPORT_COLUMNS):
        raise RecordFormatError(f"report {source} has columns {list(frame.columns)}")
    if frame.empty or frame["class"].iloc[-1] != "overall":
        raise RecordFormatError(f"report {source} lacks its overall row")
    metrics = [
        ClassMetrics(*(float(v) for v in row[1:])) for row in frame.itertuples(index=False)
    ]
    return MetricReport(tuple(frame["class"].iloc[:-1]), metrics[:-1], metrics[-1])
