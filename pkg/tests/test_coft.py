import struct

import numpy as np
import pytest

from cosal import coft


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.normal(size=(5, 7, 3)).astype(np.float32)
    path = tmp_path / "x.coft"
    coft.write_coft(values, path)
    stack = coft.read_coft(path)
    assert stack.values.shape == (5, 7, 3)
    assert np.array_equal(stack.values.astype(np.float32), values)
    # writing what was read reproduces the file byte for byte
    path2 = tmp_path / "y.coft"
    coft.write_coft(stack.values, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_verify_reports_dims(tmp_path):
    path = tmp_path / "x.coft"
    coft.write_coft(np.zeros((2, 3, 4), np.float32), path)
    assert coft.verify_coft(path) == (2, 3, 4)


def test_header_is_little_endian(tmp_path):
    path = tmp_path / "x.coft"
    coft.write_coft(np.ones((1, 1, 1), np.float32), path)
    raw = path.read_bytes()
    assert raw[:4] == b"COFT"
    assert struct.unpack("<IIII", raw[4:20]) == (1, 1, 1, 1)
    assert struct.unpack("<f", raw[20:24])[0] == 1.0


@pytest.mark.parametrize(
    "corrupt,message",
    [
        (lambda b: b"XOFT" + b[4:], "bad magic"),
        (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], "unsupported version"),
        (lambda b: b[:10], "truncated header"),
        (lambda b: b[:-4], "payload length mismatch"),
        (lambda b: b + b"\x00" * 4, "payload length mismatch"),
        (lambda b: b[:8] + struct.pack("<III", 0, 1, 1) + b[20:], "zero dimension"),
    ],
)
def test_rejects_corruptions(tmp_path, corrupt, message):
    path = tmp_path / "x.coft"
    coft.write_coft(np.ones((2, 2, 1), np.float32), path)
    bad = tmp_path / "bad.coft"
    bad.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(coft.CoftFormatError, match=message):
        coft.verify_coft(bad)


def test_rejects_nan_payload(tmp_path):
    path = tmp_path / "x.coft"
    coft.write_coft(np.ones((1, 2, 2), np.float32), path)
    raw = bytearray(path.read_bytes())
    raw[20:24] = struct.pack("<f", float("nan"))
    bad = tmp_path / "bad.coft"
    bad.write_bytes(bytes(raw))
    with pytest.raises(coft.CoftFormatError, match="non-finite"):
        coft.verify_coft(bad)


def test_write_rejects_nonfinite():
    with pytest.raises(ValueError):
        coft.write_coft(np.full((1, 1, 1), np.nan, np.float32), "/tmp/never.coft")
