"""Versioned binary checkpoint of named arrays.

Layout (little-endian):

    magic    4 bytes  b"WCKP"
    version  u8       1
    count    u32      number of entries
    entry:
      name_len u16, name utf-8 bytes
      dtype    u8    0 = float64, 1 = float32, 2 = int64
      ndim     u8
      dims     u32 per axis
      data     raw array bytes, C order
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"WCKP"
VERSION = 1

_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1, np.dtype(np.int64): 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named arrays to ``path`` in file order = dict order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BI", VERSION, len(arrays)))
        for name, array in arrays.items():
            array = np.ascontiguousarray(array)
            if array.dtype not in _DTYPE_CODES:
                array = array.astype(np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", _DTYPE_CODES[array.dtype], array.ndim))
            for dim in array.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(array.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"not a checkpoint file: bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 9
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        code, ndim = struct.unpack_from("<BB", data, pos)
        pos += 2
        if code not in _CODE_DTYPES:
            raise ValueError(f"unknown dtype code {code} for entry {name!r}")
        shape = struct.unpack_from(f"<{ndim}I", data, pos) if ndim else ()
        pos += 4 * ndim
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        array = np.frombuffer(data[pos : pos + nbytes], dtype=dtype).reshape(shape)
        pos += nbytes
        out[name] = array.copy()
    return out
