"""Shared binary container used by the episode, run and checkpoint formats.

Layout (all integers little-endian):

    magic      4 bytes, format tag
    version    uint32
    meta_len   uint32
    meta       meta_len bytes of UTF-8 JSON (scalars, shapes live here)
    n_arrays   uint32
    then per array:
        name_len   uint32
        name       UTF-8 bytes
        dtype_len  uint32
        dtype      numpy dtype string, e.g. "<f8"
        ndim       uint32
        shape      ndim * uint64
        data       C-order raw bytes

Spike matrices are stored bit-packed ("packbits:<T>x<N>" pseudo-dtype) to keep
run and episode files compact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import IngestionError


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    if arr.dtype == np.uint8 and name.startswith("packed:"):
        dtype = arr.dtype.str
    else:
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.str
    name_b = name.encode("utf-8")
    dtype_b = dtype.encode("utf-8")
    fh.write(struct.pack("<I", len(name_b)))
    fh.write(name_b)
    fh.write(struct.pack("<I", len(dtype_b)))
    fh.write(dtype_b)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes())


def write_record(path, magic: bytes, version: int, meta: dict, arrays: dict) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    meta_b = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", version, len(meta_b)))
        fh.write(meta_b)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            _write_array(fh, name, np.asarray(arr))


def _read_exact(fh, n: int, path) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise IngestionError(f"truncated file: {path}", path=str(path))
    return data


def read_record(path, magic: bytes) -> tuple[int, dict, dict]:
    """Return (version, meta, arrays); raises IngestionError on a bad file."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}", path=str(path)) from exc
    with fh:
        got = _read_exact(fh, 4, path)
        if got != magic:
            raise IngestionError(
                f"bad magic in {path}: expected {magic!r}, got {got!r}", path=str(path)
            )
        version, meta_len = struct.unpack("<II", _read_exact(fh, 8, path))
        meta = json.loads(_read_exact(fh, meta_len, path).decode("utf-8"))
        (n_arrays,) = struct.unpack("<I", _read_exact(fh, 4, path))
        arrays = {}
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
            name = _read_exact(fh, name_len, path).decode("utf-8")
            (dtype_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
            dtype = np.dtype(_read_exact(fh, dtype_len, path).decode("utf-8"))
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, path))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, path))
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            data = _read_exact(fh, count * dtype.itemsize, path)
            arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
    return version, meta, arrays


def pack_spikes(spikes: np.ndarray) -> np.ndarray:
    return np.packbits(spikes.astype(np.uint8), axis=None)


def unpack_spikes(packed: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    total = int(shape[0]) * int(shape[1])
    bits = np.unpackbits(packed, count=total)
    return bits.reshape(shape).astype(np.float64)
