"""Binary checkpoints of a built model.

Layout (little-endian)::

    "SEVL" | u16 version | u32 config length | config text (UTF-8)
    | u32 parameter count
    | per parameter: u16 name length | name | u8 rank | rank * u32 extents
                     | float32 values
    | u32 CRC-32 of every preceding byte
"""

import logging
import os
import struct
import zlib
from typing import Dict, List, Tuple, Union

import numpy as np

from ..constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from ..exceptions import (
    CheckpointError,
    ChecksumError,
    ConfigError,
    ShapeMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from .sevgg_lstm import ModelConfig, ModelGraph, build_model

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

# magic, version, config length, parameter count, CRC-32
_MIN_SIZE = len(CHECKPOINT_MAGIC) + 2 + 4 + 4 + 4
MAX_RANK = 8


def encode_checkpoint(model: ModelGraph) -> bytes:
    config = model.config.to_text().encode("utf-8")
    params = model.parameters()
    chunks = [
        CHECKPOINT_MAGIC,
        struct.pack("<HI", CHECKPOINT_VERSION, len(config)),
        config,
        struct.pack("<I", len(params)),
    ]
    for name, value in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    body = b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, blob: bytes, end: int):
        self.blob = blob
        self.end = end
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > self.end:
            raise TruncatedCheckpointError("checkpoint ends before its declared content")
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


Record = Tuple[bytes, Tuple[int, ...], bytes]


def _read_records(reader: _Reader) -> Tuple[bytes, List[Record]]:
    # lengths only; nothing here allocates from declared sizes
    reader.take(len(CHECKPOINT_MAGIC) + 2)
    (config_len,) = reader.unpack("<I")
    config_text = reader.take(config_len)
    (count,) = reader.unpack("<I")
    records = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len)
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I")
        size = 1
        for extent in shape:
            size *= extent
        records.append((name, shape, reader.take(4 * size)))
    return config_text, records


def decode_checkpoint(blob: bytes) -> Tuple[ModelConfig, Dict[str, np.ndarray]]:
    """
    Parse checkpoint bytes into the config and the parameter arrays.

    The CRC-32 is verified before any parameter record is interpreted.

    Raises
    ------
    CheckpointError
        If the magic bytes are wrong or the verified content is malformed.
    VersionMismatchError
        If the format version is not the one this package writes.
    ChecksumError
        If the trailing CRC-32 does not match.
    TruncatedCheckpointError
        If the content is shorter than declared (a kind of ChecksumError).
    """
    if len(blob) < len(CHECKPOINT_MAGIC) + 2:
        raise TruncatedCheckpointError("checkpoint shorter than its header")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    (version,) = struct.unpack_from("<H", blob, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"checkpoint format version {version}, expected {CHECKPOINT_VERSION}"
        )
    if len(blob) < _MIN_SIZE:
        raise TruncatedCheckpointError("checkpoint shorter than its header")

    end = len(blob) - 4
    (stored,) = struct.unpack_from("<I", blob, end)
    if zlib.crc32(blob[:end]) != stored:
        # a walk that runs out of bytes means the file was cut short
        _read_records(_Reader(blob, end))
        raise ChecksumError("checkpoint checksum mismatch")

    reader = _Reader(blob, end)
    config_text, records = _read_records(reader)
    if reader.offset != end:
        raise CheckpointError(f"{end - reader.offset} unexpected bytes before the checksum")
    try:
        config = ModelConfig.from_text(config_text.decode("utf-8"))
        params = {}
        for name, shape, raw in records:
            if len(shape) > MAX_RANK:
                raise CheckpointError(f"parameter rank {len(shape)} exceeds {MAX_RANK}")
            params[name.decode("utf-8")] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    except (UnicodeDecodeError, ConfigError) as exc:
        raise CheckpointError(f"invalid checkpoint content: {exc}") from exc
    return config, params


def save_checkpoint(model: ModelGraph, path: PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(model))
    logger.info("saved checkpoint %s (%d parameter arrays)", path, len(model.parameters()))


def load_checkpoint(path: PathLike) -> ModelGraph:
    """Rebuild the model stored by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    config, params = decode_checkpoint(blob)
    model = build_model(config, seed=0, dtype=np.float32)
    try:
        model.set_parameters(params)
    except ShapeMismatchError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return model
