"""Header + raw payload array format: roundtrips and malformed inputs."""

import json

import numpy as np
import pytest

from perfmoco.arrayio import read_array, read_header, write_array
from perfmoco.errors import FormatError


def test_roundtrip_dtypes(tmp_path):
    rng = np.random.default_rng(0)
    cases = {
        "c": (rng.normal(size=(4, 5, 3)) + 1j * rng.normal(size=(4, 5, 3))).astype(np.complex64),
        "f": rng.normal(size=(4, 5, 3)).astype(np.float32),
        "u": (rng.random((4, 5, 3)) < 0.5).astype(np.uint8),
    }
    for name, arr in cases.items():
        header = write_array(tmp_path / name, arr)
        back = read_array(tmp_path / name)
        assert np.array_equal(back, arr)
        assert back.dtype == arr.dtype
        assert header["shape"] == [4, 5, 3]


def test_wider_dtypes_narrowed(tmp_path):
    arr = np.linspace(0.0, 1.0, 24).reshape(2, 3, 4)  # float64 in
    write_array(tmp_path / "a", arr)
    back = read_array(tmp_path / "a")
    assert back.dtype == np.float32
    assert np.allclose(back, arr, atol=1e-6)


def test_frame_contiguous_layout(tmp_path):
    # each frame is stored contiguously, frames in temporal order
    arr = np.arange(2 * 3 * 2, dtype=np.float32).reshape(2, 3, 2)
    write_array(tmp_path / "a", arr)
    raw = np.fromfile(tmp_path / "a.raw", dtype="<f4")
    assert np.array_equal(raw[:6], arr[:, :, 0].ravel())
    assert np.array_equal(raw[6:], arr[:, :, 1].ravel())


def test_read_accepts_stem_or_extension(tmp_path):
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    write_array(tmp_path / "a", arr)
    assert np.array_equal(read_array(tmp_path / "a.json"), arr)
    assert np.array_equal(read_array(tmp_path / "a.raw"), arr)
    header = read_header(tmp_path / "a")
    assert header["dtype"] == "float32"


def test_malformed_headers(tmp_path):
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    write_array(tmp_path / "a", arr)

    (tmp_path / "bad1.json").write_text("{not json")
    with pytest.raises(FormatError):
        read_header(tmp_path / "bad1")

    header = json.loads((tmp_path / "a.json").read_text())
    for corrupt in (
        {k: v for k, v in header.items() if k != "dtype"},
        dict(header, dtype="float64"),
        dict(header, order="column-major"),
        dict(header, byte_order="big-endian"),
        dict(header, shape=[2, 2, 0]),
        dict(header, shape=[4]),
    ):
        (tmp_path / "bad2.json").write_text(json.dumps(corrupt))
        with pytest.raises(FormatError):
            read_header(tmp_path / "bad2")


def test_truncated_payload(tmp_path):
    arr = np.ones((4, 4, 4), dtype=np.float32)
    write_array(tmp_path / "a", arr)
    raw = (tmp_path / "a.raw").read_bytes()
    (tmp_path / "a.raw").write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        read_array(tmp_path / "a")
