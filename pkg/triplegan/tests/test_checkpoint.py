"""Tests for triplegan/cli/checkpoint.py and checkpoint-backed run state."""

import struct
import zlib

import numpy as np
import pytest

from triplegan.cli.checkpoint import (
    MAGIC,
    VERSION,
    bytes_entry,
    decode_entries,
    encode_entries,
    entry_bytes,
    read_checkpoint,
    write_checkpoint,
)
from triplegan.core.errors import CheckpointError
from triplegan.data.splits import make_benchmark
from triplegan.game.state import TrainState


def _make_entries():
    return {
        "w": np.arange(6, dtype=np.float64).reshape(2, 3) / 7,
        "half": np.array([1.5, -2.25], dtype=np.float32),
        "scalar": np.array(3.0),
    }


# ---------------------------------------------------------------------------
# Container format
# ---------------------------------------------------------------------------


def test_header_layout():
    blob = encode_entries({"a": np.zeros(1)})
    assert blob[:4] == MAGIC
    assert struct.unpack_from("<II", blob, 4) == (VERSION, 1)
    assert struct.unpack("<I", blob[-4:])[0] == zlib.crc32(blob[:-4])


def test_entries_survive_encoding_with_dtype_and_shape():
    entries = _make_entries()
    decoded = decode_entries(encode_entries(entries))
    assert list(decoded) == list(entries)
    for name, value in entries.items():
        assert decoded[name].dtype == value.dtype
        assert decoded[name].shape == value.shape
        assert np.array_equal(decoded[name], value)


def test_bad_magic_is_rejected():
    blob = bytearray(encode_entries(_make_entries()))
    blob[0:4] = b"NOPE"
    with pytest.raises(CheckpointError, match="bad magic"):
        decode_entries(bytes(blob))


def test_flipped_byte_fails_crc():
    blob = bytearray(encode_entries(_make_entries()))
    blob[20] ^= 0xFF
    with pytest.raises(CheckpointError, match="CRC-32 mismatch"):
        decode_entries(bytes(blob))


def test_truncated_file_fails_crc():
    blob = encode_entries(_make_entries())
    with pytest.raises(CheckpointError, match="CRC-32"):
        decode_entries(blob[:-9])


def test_unknown_version_is_rejected():
    body = MAGIC + struct.pack("<II", VERSION + 1, 0)
    blob = body + struct.pack("<I", zlib.crc32(body))
    with pytest.raises(CheckpointError, match="unsupported checkpoint version"):
        decode_entries(blob)


def test_entry_running_past_the_end_is_rejected():
    body = MAGIC + struct.pack("<II", VERSION, 1) + struct.pack("<H", 1) + b"x" + struct.pack("<BBI", 1, 1, 50)
    blob = body + struct.pack("<I", zlib.crc32(body))
    with pytest.raises(CheckpointError, match="runs past the end"):
        decode_entries(blob)


def test_trailing_bytes_are_rejected():
    body = encode_entries({"a": np.zeros(1)})[:-4] + b"\x00\x00"
    blob = body + struct.pack("<I", zlib.crc32(body))
    with pytest.raises(CheckpointError, match="trailing bytes"):
        decode_entries(blob)


def test_integer_arrays_are_not_encodable():
    with pytest.raises(CheckpointError, match="unsupported dtype"):
        encode_entries({"i": np.arange(3)})


def test_byte_entries():
    payload = "α = 0.5\n".encode()
    assert entry_bytes(bytes_entry(payload)) == payload
    with pytest.raises(CheckpointError, match="byte vector"):
        entry_bytes(np.array([0.5]))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def test_write_is_atomic_and_readable(tmp_path):
    path = write_checkpoint(tmp_path / "nested" / "run.tgan", _make_entries())
    assert path.exists()
    assert list(path.parent.iterdir()) == [path]
    assert np.array_equal(read_checkpoint(path)["w"], _make_entries()["w"])


def test_missing_checkpoint_file(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read checkpoint"):
        read_checkpoint(tmp_path / "absent.tgan")


def test_corrupt_file_error_names_the_path(tmp_path):
    path = tmp_path / "bad.tgan"
    path.write_bytes(b"garbage" * 4)
    with pytest.raises(CheckpointError, match="bad.tgan"):
        read_checkpoint(path)


# ---------------------------------------------------------------------------
# Run state
# ---------------------------------------------------------------------------


def test_train_state_rebuilds_from_entries(tiny_config):
    state = TrainState.create(tiny_config, make_benchmark(tiny_config.data))
    state.iteration = 4
    entries = decode_entries(encode_entries(state.to_entries()))
    restored = TrainState.from_entries(entries)
    assert restored.iteration == 4
    assert restored.config == tiny_config
    for name, value in state.to_entries().items():
        assert np.array_equal(restored.to_entries()[name], value), name


def test_train_state_needs_config_entry(tiny_config):
    entries = TrainState.create(tiny_config, make_benchmark(tiny_config.data)).to_entries()
    del entries["meta/config"]
    with pytest.raises(CheckpointError, match="meta/config"):
        TrainState.from_entries(entries)


def test_train_state_needs_state_entry(tiny_config):
    state = TrainState.create(tiny_config, make_benchmark(tiny_config.data))
    entries = state.to_entries()
    del entries["meta/state"]
    with pytest.raises(CheckpointError, match="meta/state"):
        state.load_entries(entries)
