"""Functions for loading, segmenting and normalizing ECG recordings."""

import logging
import math
import os
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import parse_kv_text, parse_number
from .constants import DEFAULT_WINDOW_SECONDS, LABEL_SCHEMES
from .exceptions import (
    AlreadyNormalizedError,
    ConfigError,
    RecordFormatError,
    ZeroVarianceError,
)

logger = logging.getLogger(__name__)

RECORD_FORMATS = ("csv",)
MANIFEST_COLUMNS = ("record_path", "segment_index", "label_code")


@dataclass(frozen=True)
class ClassId:
    """A class of the active label scheme: its index and one-letter code."""

    index: int
    code: str


def label_scheme(scheme: Union[str, Sequence[str]]) -> Tuple[ClassId, ...]:
    """
    Resolve a label scheme to its ClassId table.

    Parameters
    ----------
    scheme : str or Sequence[str]
        A scheme name from ``LABEL_SCHEMES`` (``"mitbih"``, ``"pccd"``), a
        comma-separated code list such as ``"N,A"``, or a sequence of codes.

    Returns
    -------
    Tuple[ClassId, ...]
        Classes in index order.
    """
    if isinstance(scheme, str):
        codes = LABEL_SCHEMES.get(scheme.lower())
        if codes is None:
            codes = tuple(code.strip() for code in scheme.split(",") if code.strip())
    else:
        codes = tuple(scheme)
    if not codes:
        raise ValueError(f"empty label scheme: {scheme!r}")
    if len(set(codes)) != len(codes):
        raise ValueError(f"duplicate class codes in scheme: {codes}")
    return tuple(ClassId(index, code) for index, code in enumerate(codes))


def resolve_class(code: str, scheme: Sequence[ClassId]) -> ClassId:
    for cls in scheme:
        if cls.code == code:
            return cls
    raise RecordFormatError(
        f"unknown class code {code!r}; scheme has {[c.code for c in scheme]}"
    )


LabelTrack = Union[ClassId, Dict[int, ClassId]]


@dataclass
class EcgRecord:
    """
    One single-lead recording.

    Attributes
    ----------
    id : str
        Record identifier.
    sampling_rate_hz : int
        Sampling rate, positive.
    samples : np.ndarray
        Amplitudes, non-empty.
    label_track : ClassId or Dict[int, ClassId], optional
        One class for the whole record, or a class per window index.
    """

    id: str
    sampling_rate_hz: int
    samples: np.ndarray
    label_track: Optional[LabelTrack] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sampling_rate_hz <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.sampling_rate_hz}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError(f"record {self.id!r} needs a non-empty 1D sample array")


@dataclass
class Segment:
    """A fixed-length window of one record with its class."""

    source_id: str
    values: np.ndarray
    label: ClassId
    normalized: bool = False


@dataclass(frozen=True)
class NormStats:
    """Pooled mean and population standard deviation used by :func:`normalize`."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError(f"std must be nonnegative, got {self.std}")

    def to_text(self) -> str:
        return f"mean = {self.mean!r}\nstd = {self.std!r}\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<norm stats>") -> "NormStats":
        try:
            values = parse_kv_text(text, source)
            unknown = set(values) - {"mean", "std"}
            if unknown:
                raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
            return cls(
                mean=parse_number(values["mean"], float, "mean"),
                std=parse_number(values["std"], float, "std"),
            )
        except KeyError as exc:
            raise RecordFormatError(f"{source}: norm stats missing {exc.args[0]!r}") from exc
        except ConfigError as exc:
            raise RecordFormatError(str(exc)) from exc


def _header_value(line: str, key: str, path: str) -> str:
    name, sep, value = line.strip().partition(",")
    if not sep or name.strip() != key:
        raise RecordFormatError(f"{path}: expected '{key},<value>' header, got {line!r}")
    return value.strip()


def load_record(path: Union[str, os.PathLike], format: str = "csv") -> EcgRecord:
    """
    Read a record file.

    The CSV layout is ``id,<text>`` / ``rate,<int>`` / ``n,<int>`` followed by
    one sample value per line.

    Parameters
    ----------
    path : str or PathLike
        Record file.
    format : str
        Dataset format identifier; only ``"csv"`` is known.

    Returns
    -------
    EcgRecord
        Record without labels.

    Raises
    ------
    RecordFormatError
        If the file cannot be read, the header is malformed or the sample
        count disagrees with the header.
    """
    if format not in RECORD_FORMATS:
        raise RecordFormatError(f"unknown record format {format!r}")
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            header = [fh.readline() for _ in range(3)]
            body = pd.read_csv(
                fh,
                header=None,
                names=["value"],
                dtype=np.float64,
                float_precision="round_trip",
            )
    except (OSError, UnicodeDecodeError) as exc:
        raise RecordFormatError(f"cannot read record {path}: {exc}") from exc
    except (ValueError, pd.errors.ParserError) as exc:
        raise RecordFormatError(f"{path}: malformed sample values: {exc}") from exc

    record_id = _header_value(header[0], "id", path)
    try:
        rate = int(_header_value(header[1], "rate", path))
        expected = int(_header_value(header[2], "n", path))
    except ValueError as exc:
        raise RecordFormatError(f"{path}: malformed header: {exc}") from exc
    samples = body["value"].to_numpy()
    if samples.size != expected:
        raise RecordFormatError(
            f"{path}: sample count mismatch, header says {expected}, body has {samples.size}"
        )
    if rate <= 0 or expected == 0:
        raise RecordFormatError(f"{path}: rate and sample count must be positive")
    logger.debug("loaded record %s: %d samples at %d Hz", record_id, samples.size, rate)
    return EcgRecord(id=record_id, sampling_rate_hz=rate, samples=samples)


def write_record(record: EcgRecord, path: Union[str, os.PathLike]) -> None:
    """Write a record in the layout read by :func:`load_record`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"id,{record.id}\nrate,{record.sampling_rate_hz}\nn,{record.samples.size}\n")
        fh.writelines(f"{value!r}\n" for value in record.samples.tolist())


def window_length(sampling_rate_hz: int, window_seconds: float) -> int:
    """Samples per window, ``window_seconds * rate`` rounded half-up."""
    length = int(math.floor(window_seconds * sampling_rate_hz + 0.5))
    if length < 1:
        raise ValueError(
            f"window of {window_seconds}s at {sampling_rate_hz} Hz has no samples"
        )
    return length


def segment(
    record: EcgRecord, window_seconds: float = DEFAULT_WINDOW_SECONDS
) -> List[Segment]:
    """
    Cut a record into consecutive non-overlapping windows.

    Windows start at sample 0; a trailing remainder shorter than one window
    is dropped. With a per-window label track, windows without a label are
    skipped.

    Parameters
    ----------
    record : EcgRecord
        Labeled record.
    window_seconds : float
        Window duration, 10 s by default.

    Returns
    -------
    List[Segment]
        Segments in record order; empty if the record is shorter than one
        window.

    Raises
    ------
    RecordFormatError
        If the record has no labels, or its label track names a window the
        record does not contain.
    """
    if window_seconds <= 0:
        raise ValueError(f"window_seconds must be positive, got {window_seconds}")
    length = window_length(record.sampling_rate_hz, window_seconds)
    count = record.samples.size // length
    track = record.label_track
    if track is None:
        raise RecordFormatError(f"record {record.id!r} has no labels")
    if isinstance(track, ClassId):
        labels = {index: track for index in range(count)}
    else:
        beyond = sorted(index for index in track if not 0 <= index < count)
        if beyond:
            raise RecordFormatError(
                f"record {record.id!r} has {count} windows, labels reference {beyond}"
            )
        labels = track

    return [
        Segment(
            source_id=record.id,
            values=record.samples[index * length : (index + 1) * length].copy(),
            label=labels[index],
        )
        for index in range(count)
        if index in labels
    ]


def _pooled_stats(values: np.ndarray) -> NormStats:
    if values.size == 0:
        raise ValueError("cannot compute statistics of zero samples")
    values = values.astype(np.float64, copy=False)
    mean = float(values.mean())
    return NormStats(mean=mean, std=float(np.sqrt(np.mean((values - mean) ** 2))))


def compute_norm_stats(segments: Sequence[Segment]) -> NormStats:
    """
    Pooled mean and population standard deviation of every sample.

    Raises
    ------
    ValueError
        If no segments (or no samples) are given.
    """
    if not segments:
        raise ValueError("cannot compute statistics of an empty segment list")
    return _pooled_stats(np.concatenate([s.values for s in segments]))


def _check_stats(stats: NormStats) -> None:
    if stats.std == 0:
        raise ZeroVarianceError("standard deviation is zero; signal cannot be normalized")


def normalize(segment: Segment, stats: NormStats) -> Segment:
    """Return a copy with every value mapped to ``(x - mean) / std``."""
    _check_stats(stats)
    if segment.normalized:
        raise AlreadyNormalizedError(f"segment of {segment.source_id!r} is already normalized")
    values = (np.asarray(segment.values, dtype=np.float64) - stats.mean) / stats.std
    return replace(segment, values=values, normalized=True)


def denormalize(segment: Segment, stats: NormStats) -> Segment:
    if not segment.normalized:
        raise ValueError(f"segment of {segment.source_id!r} is not normalized")
    values = np.asarray(segment.values, dtype=np.float64) * stats.std + stats.mean
    return replace(segment, values=values, normalized=False)


@dataclass
class Dataset:
    """
    Segments of one length stacked into arrays.

    Attributes
    ----------
    values : np.ndarray
        Shape (n, segment_len).
    labels : np.ndarray
        Class index per row.
    classes : Tuple[str, ...]
        Class codes in index order.
    origin : np.ndarray
        Index of every row in the dataset it was derived from; subsets and
        oversampled copies keep pointing at their source rows.
    normalized : bool
        Whether ``values`` are already normalized; raw by default.
    """

    values: np.ndarray
    labels: np.ndarray
    classes: Tuple[str, ...]
    origin: Optional[np.ndarray] = None
    normalized: bool = False

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[0] != self.labels.size:
            raise ValueError(
                f"values shape {self.values.shape} does not match {self.labels.size} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
            raise ValueError(f"labels outside the {len(self.classes)} known classes")
        if self.origin is None:
            self.origin = np.arange(self.labels.size)
        self.origin = np.asarray(self.origin, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def segment_len(self) -> int:
        return int(self.values.shape[1])

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.classes))

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            values=self.values[indices],
            labels=self.labels[indices],
            classes=self.classes,
            origin=self.origin[indices],
            normalized=self.normalized,
        )

    @classmethod
    def from_segments(
        cls, segments: Sequence[Segment], classes: Sequence[ClassId]
    ) -> "Dataset":
        if not segments:
            raise ValueError("cannot build a dataset from zero segments")
        lengths = {s.values.size for s in segments}
        if len(lengths) != 1:
            raise ValueError(f"segments have differing lengths {sorted(lengths)}")
        flags = {s.normalized for s in segments}
        if len(flags) != 1:
            raise ValueError("dataset mixes normalized and raw segments")
        return cls(
            values=np.stack([s.values for s in segments]),
            labels=np.array([s.label.index for s in segments]),
            classes=tuple(c.code for c in classes),
            normalized=flags.pop(),
        )

    def to_segments(self, source_id: str = "") -> List[Segment]:
        classes = label_scheme(self.classes)
        return [
            Segment(source_id, self.values[i].copy(), classes[self.labels[i]], self.normalized)
            for i in range(len(self))
        ]


def dataset_norm_stats(data: Dataset) -> NormStats:
    return _pooled_stats(data.values)


def normalize_dataset(data: Dataset, stats: NormStats) -> Dataset:
    """Apply :func:`normalize` to every row of a raw dataset."""
    _check_stats(stats)
    if data.normalized:
        raise AlreadyNormalizedError("dataset is already normalized")
    values = (data.values.astype(np.float64) - stats.mean) / stats.std
    return Dataset(
        values=values.astype(data.values.dtype, copy=False),
        labels=data.labels,
        classes=data.classes,
        origin=data.origin,
        normalized=True,
    )


def load_manifest(
    path: Union[str, os.PathLike], scheme: Sequence[ClassId]
) -> Dict[str, Dict[int, ClassId]]:
    """
    Read the window-label manifest.

    Parameters
    ----------
    path : str or PathLike
        CSV with columns ``record_path,segment_index,label_code``.
    scheme : Sequence[ClassId]
        Active label scheme.

    Returns
    -------
    Dict[str, Dict[int, ClassId]]
        Label track per record path, in manifest order of first appearance.
    """
    try:
        frame = pd.read_csv(path, dtype={"record_path": str, "label_code": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise RecordFormatError(f"cannot read manifest {path}: {exc}") from exc
    missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing:
        raise RecordFormatError(f"manifest {path} lacks columns {missing}")
    if frame["segment_index"].isna().any() or (frame["segment_index"] < 0).any():
        raise RecordFormatError(f"manifest {path} has invalid segment indices")

    tracks: Dict[str, Dict[int, ClassId]] = {}
    for row in frame.itertuples(index=False):
        track = tracks.setdefault(row.record_path, {})
        index = int(row.segment_index)
        if index in track:
            raise RecordFormatError(
                f"manifest {path} labels window {index} of {row.record_path} twice"
            )
        track[index] = resolve_class(row.label_code, scheme)
    return tracks


def load_labeled_records(
    data_dir: Union[str, os.PathLike],
    manifest_path: Union[str, os.PathLike],
    scheme: Sequence[ClassId],
) -> List[EcgRecord]:
    """Load every record named by the manifest and attach its label track."""
    records = []
    for record_path, track in load_manifest(manifest_path, scheme).items():
        full_path = os.path.join(data_dir, record_path)
        if not os.path.isfile(full_path):
            raise RecordFormatError(f"manifest references missing record {full_path}")
        record = load_record(full_path)
        record.label_track = track
        records.append(record)
    logger.info("loaded %d labeled records from %s", len(records), manifest_path)
    return records


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Parameters of the synthetic spike-train fixture.

    Parsed from strings such as ``"classes=5,per_class=40,rate=64,seconds=1"``;
    ``classes`` is either a count or a scheme name.
    """

    classes: str = "mitbih"
    per_class: int = 40
    rate: int = 64
    seconds: float = 1.0
    noise: float = 0.05
    offset: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "SyntheticSpec":
        kwargs = {}
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in cls.__dataclass_fields__:
                raise ValueError(f"bad synthetic spec item {item!r}")
            kwargs[key] = value.strip()
        spec = cls()
        return cls(
            classes=kwargs.get("classes", spec.classes),
            per_class=int(kwargs.get("per_class", spec.per_class)),
            rate=int(kwargs.get("rate", spec.rate)),
            seconds=float(kwargs.get("seconds", spec.seconds)),
            noise=float(kwargs.get("noise", spec.noise)),
            offset=float(kwargs.get("offset", spec.offset)),
        )

    def scheme(self) -> Tuple[ClassId, ...]:
        if self.classes.isdigit():
            count = int(self.classes)
            codes = LABEL_SCHEMES["mitbih"]
            if count > len(codes):
                codes = tuple(f"C{i}" for i in range(count))
            return label_scheme(codes[:count])
        return label_scheme(self.classes)


def _spike_train(length: int, class_index: int, rng: np.random.Generator) -> np.ndarray:
    # class c: 2 + c spikes per window, widening with c, odd classes inverted
    period = length / (2 + class_index)
    width = 0.6 + 0.4 * class_index
    phase = rng.uniform(0, period)
    t = np.arange(length)
    wave = np.zeros(length)
    for centre in np.arange(phase, length, period):
        wave += np.exp(-0.5 * ((t - centre) / width) ** 2)
    sign = -1.0 if class_index % 2 else 1.0
    return sign * rng.uniform(0.9, 1.1) * wave


def synthesize_records(
    spec: Union[str, SyntheticSpec], seed: int = 0
) -> Tuple[List[EcgRecord], Tuple[ClassId, ...]]:
    """
    Build one labeled record per class from class-dependent spike trains.

    Returns
    -------
    records : List[EcgRecord]
        ``per_class`` windows per record, every window labeled with the class.
    scheme : Tuple[ClassId, ...]
        Classes of the fixture.
    """
    if isinstance(spec, str):
        spec = SyntheticSpec.parse(spec)
    scheme = spec.scheme()
    length = window_length(spec.rate, spec.seconds)
    rng = np.random.default_rng(seed)
    records = []
    for cls in scheme:
        windows = [_spike_train(length, cls.index, rng) for _ in range(spec.per_class)]
        samples = np.concatenate(windows) + spec.offset
        samples += rng.normal(0, spec.noise, samples.size)
        records.append(
            EcgRecord(
                id=f"synthetic_{cls.code}",
                sampling_rate_hz=spec.rate,
                samples=samples,
                label_track={i: cls for i in range(spec.per_class)},
            )
        )
    return records, scheme
