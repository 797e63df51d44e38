"""Flat binary array files with a self-describing JSON header.

Layout: 8-byte magic, 4-byte little-endian header length, UTF-8 JSON
header (dtype, shape, plus caller metadata such as sample_rate and hop),
then the raw C-order little-endian array bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_MAGIC = b"MVFEAT1\n"


def save_array(path: str | Path, array: np.ndarray, **metadata) -> None:
    arr = np.ascontiguousarray(array)
    dtype = arr.dtype.newbyteorder("<")
    arr = arr.astype(dtype, copy=False)
    header = {"dtype": dtype.str, "shape": list(arr.shape)}
    for key, value in metadata.items():
        if key in header:
            raise ValueError(f"reserved metadata key: {key}")
        header[key] = value
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(arr.tobytes())


def load_array(path: str | Path) -> tuple[np.ndarray, dict]:
    """Return (array, metadata). Rejects files with a foreign magic."""
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a feature cache file")
        (header_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(header_len).decode("utf-8"))
        raw = f.read()
    shape = tuple(header.pop("shape"))
    dtype = np.dtype(header.pop("dtype"))
    expected = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
    if len(raw) != expected:
        raise ValueError(f"{path}: payload size {len(raw)} does not match "
                         f"header shape {shape}")
    array = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return array, header
