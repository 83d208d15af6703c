"""Small configs and fixtures shared by the test modules."""

import os

import numpy as np

from ecgnet.data import (
    Dataset,
    EcgRecord,
    dataset_norm_stats,
    normalize_dataset,
    segment,
    synthesize_records,
)
from ecgnet.models.sevgg_lstm import ModelConfig

TINY_PARTS = ((1, 4), (1, 4), (2, 8), (2, 8), (2, 8))


def tiny_config(num_classes: int = 5, input_len: int = 64, **overrides) -> ModelConfig:
    values = dict(
        conv_parts=TINY_PARTS,
        se_positions=(4, 5),
        se_reduction=4,
        lstm_hidden=4,
        fc_sizes=(16, 8, num_classes),
    )
    values.update(overrides)
    return ModelConfig(input_len=input_len, num_classes=num_classes, **values)


def synthetic_dataset(spec: str = "classes=5,per_class=40,rate=64,seconds=1", seed: int = 0):
    """Normalized dataset built from the synthetic spike-train records."""
    records, scheme = synthesize_records(spec, seed=seed)
    segments = [s for record in records for s in segment(record, 1.0)]
    raw = Dataset.from_segments(segments, scheme)
    return normalize_dataset(raw, dataset_norm_stats(raw))


def write_text(path: str, text: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def record_text(record_id: str, rate: int, samples) -> str:
    body = "".join(f"{float(v)!r}\n" for v in samples)
    return f"id,{record_id}\nrate,{rate}\nn,{len(samples)}\n{body}"


def constant_record(value: float, rate: int = 4, seconds: int = 4) -> EcgRecord:
    return EcgRecord("flat", rate, np.full(rate * seconds, value))
