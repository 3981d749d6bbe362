"""Binary checkpoint container.

Layout (little-endian throughout)::

    b"TGAN" | u32 version (=1) | u32 entry count
    per entry: u16 name length | UTF-8 name | u8 dtype (0=f32, 1=f64) | u8 rank
               | rank × u32 dims | raw values
    u32 CRC-32 of every preceding byte

Text and JSON payloads are stored as rank-1 f64 entries holding one byte per
element (see ``bytes_entry``).
"""

from __future__ import annotations

import logging
import os
import struct
import zlib
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from triplegan.core.errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"TGAN"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def bytes_entry(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype=np.uint8).astype(np.float64)


def entry_bytes(array: np.ndarray) -> bytes:
    values = np.asarray(array).reshape(-1)
    if values.size and (values.min() < 0 or values.max() > 255 or np.any(values != np.round(values))):
        raise CheckpointError("entry does not hold a byte vector")
    return values.astype(np.uint8).tobytes()


def encode_entries(entries: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, value in entries.items():
        array = np.asarray(value)
        code = _CODES.get(array.dtype)
        if code is None:
            raise CheckpointError(f"entry {name!r} has unsupported dtype {array.dtype}")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or array.ndim > 0xFF:
            raise CheckpointError(f"entry {name!r} exceeds the name-length or rank limit")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<BB", code, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes())
    body = b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_entries(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic bytes)")
    body, (stored_crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != stored_crc:
        raise CheckpointError("checkpoint CRC-32 mismatch (file is corrupt or truncated)")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")

    entries: dict[str, np.ndarray] = {}
    offset = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, offset)
            offset += 2
            name = body[offset : offset + name_len].decode("utf-8")
            offset += name_len
            code, rank = struct.unpack_from("<BB", body, offset)
            offset += 2
            if code not in _DTYPES:
                raise CheckpointError(f"entry {name!r} has unknown dtype code {code}")
            shape = struct.unpack_from(f"<{rank}I", body, offset)
            offset += 4 * rank
            dtype = _DTYPES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + nbytes > len(body):
                raise CheckpointError(f"entry {name!r} runs past the end of the file")
            data = np.frombuffer(body, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
            entries[name] = data.reshape(shape).astype(dtype.newbyteorder("="))
            offset += nbytes
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint entry table: {exc}") from exc
    if offset != len(body):
        raise CheckpointError(f"{len(body) - offset} trailing bytes after the last entry")
    return entries


def write_checkpoint(path: str | Path, entries: Mapping[str, np.ndarray]) -> Path:
    """Atomically write ``entries`` to ``path`` (temporary file + rename)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(encode_entries(entries))
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc.strerror or exc}") from exc
    logger.info("checkpoint written: %s (%d entries)", path, len(entries))
    return path


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc
    try:
        return decode_entries(blob)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
