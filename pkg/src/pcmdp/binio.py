"""Versioned little-endian container for named numpy arrays.

Layout::

    magic    8 bytes  b"PCMDPBIN"
    version  u16      FORMAT_VERSION
    kind     u16      payload kind (see KINDS)
    count    u32      number of arrays
    then per array:
      name_len u16, name (utf-8)
      dtype    u8     index into DTYPES
      ndim     u8
      shape    u64 * ndim
      data     little-endian, C order
"""

import struct

import numpy as np

MAGIC = b"PCMDPBIN"
FORMAT_VERSION = 1
KINDS = {"exo_stats": 1, "full_stats": 2, "exaq": 3, "ql": 4, "tables": 5}
DTYPES = ["<i8", "<f8", "<i4", "|u1"]


def dump_arrays(path, kind, arrays):
    code = KINDS[kind]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HHI", FORMAT_VERSION, code, len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            dt = np.dtype(arr.dtype).newbyteorder("<").str if arr.dtype.itemsize > 1 else "|u1"
            if dt not in DTYPES:
                raise TypeError(f"array {name!r} has unsupported dtype {arr.dtype}")
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<BB", DTYPES.index(dt), arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_arrays(path, expect_kind=None):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a pcmdp binary file")
    version, code, count = struct.unpack_from("<HHI", data, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    kind = {v: k for k, v in KINDS.items()}.get(code)
    if expect_kind is not None and kind != expect_kind:
        raise ValueError(f"{path}: holds {kind!r}, expected {expect_kind!r}")
    pos = 16
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode()
        pos += n
        dcode, ndim = struct.unpack_from("<BB", data, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        dt = np.dtype(DTYPES[dcode])
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        out[name] = np.frombuffer(data, dtype=dt, count=size // dt.itemsize, offset=pos).reshape(shape).copy()
        pos += size
    return kind, out
