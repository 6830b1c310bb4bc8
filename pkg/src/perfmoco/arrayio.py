"""Array file format used by every stage: a ``<name>.json`` header next to a
``<name>.raw`` payload.

Header fields: ``dtype`` (one of complex64 / float32 / uint8), ``shape``,
``order`` (always ``row-major-frame-contiguous``: the last axis indexes
frames and each frame is stored row-major), ``byte_order`` (little-endian).
Complex values are interleaved (re, im) 32-bit floats.
"""

import json
from pathlib import Path

import numpy as np

from .errors import FormatError

ORDER = "row-major-frame-contiguous"
BYTE_ORDER = "little-endian"

_DTYPES = {
    "complex64": np.dtype("<c8"),
    "float32": np.dtype("<f4"),
    "uint8": np.dtype("u1"),
}


def _dtype_name(arr):
    if np.iscomplexobj(arr):
        return "complex64"
    if arr.dtype == np.uint8:
        return "uint8"
    return "float32"


def write_array(path, arr):
    """Write ``arr`` as ``path.json`` + ``path.raw``; returns the header dict.

    ``path`` is the stem (no extension).  Wider dtypes are narrowed to the
    format's complex64 / float32 on disk.
    """
    path = Path(path)
    arr = np.asarray(arr)
    name = _dtype_name(arr)
    header = {
        "dtype": name,
        "shape": list(arr.shape),
        "order": ORDER,
        "byte_order": BYTE_ORDER,
    }
    payload = np.ascontiguousarray(np.moveaxis(arr, -1, 0), dtype=_DTYPES[name])
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    payload.tofile(path.with_suffix(".raw"))
    return header


def read_header(path):
    """Parse and validate the JSON header for ``path`` (stem or .json)."""
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    try:
        with open(path) as fh:
            header = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON header: {exc}") from exc
    for key in ("dtype", "shape", "order", "byte_order"):
        if key not in header:
            raise FormatError(f"{path}: header missing field '{key}'")
    if header["dtype"] not in _DTYPES:
        raise FormatError(f"{path}: unsupported dtype '{header['dtype']}'")
    if header["order"] != ORDER:
        raise FormatError(f"{path}: unsupported order '{header['order']}'")
    if header["byte_order"] != BYTE_ORDER:
        raise FormatError(f"{path}: unsupported byte_order '{header['byte_order']}'")
    shape = header["shape"]
    if (not isinstance(shape, list) or len(shape) < 2
            or not all(isinstance(n, int) and n > 0 for n in shape)):
        raise FormatError(f"{path}: bad shape {shape!r}")
    return header


def read_array(path):
    """Read ``path.json`` + ``path.raw`` back into an ndarray."""
    path = Path(path)
    if path.suffix in (".json", ".raw"):
        path = path.with_suffix("")
    header = read_header(path)
    dtype = _DTYPES[header["dtype"]]
    shape = tuple(header["shape"])
    raw = path.with_suffix(".raw")
    expected = int(np.prod(shape)) * dtype.itemsize
    actual = raw.stat().st_size
    if actual != expected:
        raise FormatError(
            f"{raw}: payload is {actual} bytes, header implies {expected}")
    flat = np.fromfile(raw, dtype=dtype)
    framed = flat.reshape((shape[-1],) + shape[:-1])
    return np.moveaxis(framed, 0, -1)
