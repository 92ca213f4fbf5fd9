import struct

import numpy as np
import pytest

from causalbed.stateio import MAGIC, StateFormatError, read_state, write_state


def test_roundtrip(tmp_path):
    path = str(tmp_path / "state.bin")
    meta = {"run_id": "r1", "t": 3, "nested": {"a": [1, 2]}}
    arrays = {
        "z": np.random.default_rng(0).normal(size=(2, 3, 3, 2)),
        "adj": np.array([[0, 1], [0, 0]], dtype=np.int8),
        "counts": np.arange(5, dtype=np.int64),
        "scalar": np.array(3.5),
    }
    write_state(path, meta, arrays)
    header, back = read_state(path)
    assert header["run_id"] == "r1" and header["t"] == 3
    assert header["nested"] == {"a": [1, 2]}
    assert set(back) == set(arrays)
    for name, arr in arrays.items():
        np.testing.assert_array_equal(back[name], arr)
        assert back[name].shape == np.asarray(arr).shape
    assert back["adj"].dtype == np.dtype("<i1")
    assert back["counts"].dtype == np.dtype("<i8")


def test_write_is_byte_deterministic(tmp_path):
    a = {"x": np.arange(4.0), "y": np.ones((2, 2), dtype=np.int8)}
    p1, p2 = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
    write_state(p1, {"k": 1}, a)
    write_state(p2, {"k": 1}, a)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_bad_magic_rejected(tmp_path):
    path = str(tmp_path / "bad.bin")
    with open(path, "wb") as f:
        f.write(b"NOPE" + b"\x00" * 32)
    with pytest.raises(StateFormatError, match="magic"):
        read_state(path)


def test_unknown_version_rejected(tmp_path):
    path = str(tmp_path / "v9.bin")
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<I", 99) + struct.pack("<Q", 2) + b"{}")
    with pytest.raises(StateFormatError, match="version"):
        read_state(path)


def test_corrupt_header_rejected(tmp_path):
    path = str(tmp_path / "hdr.bin")
    garbage = b"{not json"
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<I", 1) + struct.pack("<Q", len(garbage)) + garbage)
    with pytest.raises(StateFormatError, match="header"):
        read_state(path)


def test_truncated_payload_rejected(tmp_path):
    path = str(tmp_path / "trunc.bin")
    write_state(path, {}, {"x": np.arange(100.0)})
    raw = open(path, "rb").read()
    with open(path, "wb") as f:
        f.write(raw[:-8])
    with pytest.raises(StateFormatError, match="truncated"):
        read_state(path)


def test_unsupported_dtype_rejected(tmp_path):
    path = str(tmp_path / "c.bin")
    with pytest.raises(StateFormatError, match="dtype"):
        write_state(path, {}, {"x": np.array(["a", "b"])})
