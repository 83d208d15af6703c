"""Binary segment store and normalization-stats files.

A store directory holds one or more ``*.seg`` shards. Each shard is::

    magic "SEGS" | u16 version | u8 normalized | u32 count | u32 segment_len
    | u16 class-map length | class map (UTF-8, comma-separated codes)
    | count * segment_len little-endian float32 | count u8 labels
"""

import glob
import logging
import os
import struct
from typing import List, Union

import numpy as np

from .constants import NORM_STATS_FILE, STORE_FILE, STORE_MAGIC, STORE_VERSION
from .data import Dataset, NormStats
from .exceptions import RecordFormatError

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sHBIIH")

PathLike = Union[str, os.PathLike]


def encode_shard(data: Dataset) -> bytes:
    if len(data.classes) > 255:
        raise ValueError("the store holds at most 255 classes")
    class_map = ",".join(data.classes).encode("utf-8")
    header = _HEADER.pack(
        STORE_MAGIC,
        STORE_VERSION,
        int(data.normalized),
        len(data),
        data.segment_len,
        len(class_map),
    )
    values = np.ascontiguousarray(data.values, dtype="<f4").tobytes()
    labels = data.labels.astype(np.uint8).tobytes()
    return header + class_map + values + labels


def decode_shard(blob: bytes, name: str = "<shard>") -> Dataset:
    if len(blob) < _HEADER.size:
        raise RecordFormatError(f"{name}: truncated store header")
    magic, version, normalized, count, seg_len, map_len = _HEADER.unpack_from(blob)
    if magic != STORE_MAGIC:
        raise RecordFormatError(f"{name}: not a segment store")
    if version != STORE_VERSION:
        raise RecordFormatError(f"{name}: store version {version}, expected {STORE_VERSION}")
    offset = _HEADER.size
    classes = tuple(blob[offset : offset + map_len].decode("utf-8").split(","))
    offset += map_len
    n_values = count * seg_len
    expected = offset + 4 * n_values + count
    if len(blob) != expected:
        raise RecordFormatError(f"{name}: {len(blob)} bytes, header implies {expected}")
    values = np.frombuffer(blob, dtype="<f4", count=n_values, offset=offset)
    labels = np.frombuffer(blob, dtype=np.uint8, count=count, offset=offset + 4 * n_values)
    try:
        return Dataset(
            values=values.reshape(count, seg_len).astype(np.float32),
            labels=labels.astype(np.int64),
            classes=classes,
            normalized=bool(normalized),
        )
    except ValueError as exc:
        raise RecordFormatError(f"{name}: {exc}") from exc


def shard_paths(store_dir: PathLike) -> List[str]:
    paths = sorted(glob.glob(os.path.join(os.fspath(store_dir), "*.seg")))
    if not paths:
        raise RecordFormatError(f"no segment shards in {store_dir}")
    return paths


def write_store(store_dir: PathLike, data: Dataset) -> str:
    """Write ``data`` as a single shard and return its path."""
    os.makedirs(store_dir, exist_ok=True)
    path = os.path.join(os.fspath(store_dir), STORE_FILE)
    with open(path, "wb") as fh:
        fh.write(encode_shard(data))
    logger.info("wrote %d segments of length %d to %s", len(data), data.segment_len, path)
    return path


def read_store(store_dir: PathLike) -> Dataset:
    """
    Read and concatenate every shard of a store directory.

    Raises
    ------
    RecordFormatError
        If a shard is corrupt or shards disagree on segment length, class
        map or normalization.
    """
    parts = []
    for path in shard_paths(store_dir):
        with open(path, "rb") as fh:
            parts.append(decode_shard(fh.read(), path))
    first = parts[0]
    for part in parts[1:]:
        if (part.segment_len, part.classes, part.normalized) != (
            first.segment_len, first.classes, first.normalized
        ):
            raise RecordFormatError(f"shards of {store_dir} are inconsistent")
    if len(parts) == 1:
        return first
    return Dataset(
        values=np.concatenate([p.values for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        classes=first.classes,
        normalized=first.normalized,
    )


def write_norm_stats(store_dir: PathLike, stats: NormStats) -> str:
    path = os.path.join(os.fspath(store_dir), NORM_STATS_FILE)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(stats.to_text())
    return path


def read_norm_stats(store_dir: PathLike) -> NormStats:
    path = os.path.join(os.fspath(store_dir), NORM_STATS_FILE)
    with open(path, encoding="utf-8") as fh:
        return NormStats.from_text(fh.read(), path)
