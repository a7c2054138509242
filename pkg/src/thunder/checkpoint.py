"""Binary checkpoint format.

Layout (little-endian)::

    b"THDR"  u32 version=1  u32 tensor_count
    per tensor: u16 name_len, name (UTF-8), u8 dtype, u8 ndim,
                ndim x u32 extents, raw payload

dtype 0 is float32 and dtype 1 is float64. Model parameters are stored
under ``param.<name>``, optimizer moments under ``adam.m.<name>`` /
``adam.v.<name>``, scalars such as the step count under ``adam.step`` and
configuration values under ``meta.<key>``.
"""

import struct

import numpy as np

from .optim import AdamState

MAGIC = b"THDR"
VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


def write_tensors(path, tensors):
    """Write an ordered mapping name -> float array."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        if dtype not in _DTYPE_CODES:
            raise CheckpointError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", _DTYPE_CODES[dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_tensors(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}, not a checkpoint")
    if len(buf) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 12
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + nlen].decode("utf-8")
            pos += nlen
            code, ndim = struct.unpack_from("<BB", buf, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            if code not in _CODE_DTYPES:
                raise CheckpointError(f"{path}: tensor {name!r} has unknown dtype code {code}")
            dtype = _CODE_DTYPES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if pos + nbytes > len(buf):
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(buf, dtype=dtype, count=nbytes // dtype.itemsize, offset=pos).reshape(shape).copy()
            pos += nbytes
    except struct.error:
        raise CheckpointError(f"{path}: truncated tensor record") from None
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return out


def save_checkpoint(params, optim, path, meta=None):
    """Save parameters (name -> array), an optional AdamState and meta scalars."""
    tensors = {}
    for key, value in (meta or {}).items():
        tensors[f"meta.{key}"] = np.asarray([float(value)], dtype=np.float64)
    for name, arr in params.items():
        tensors[f"param.{name}"] = arr
    if optim is not None:
        tensors["adam.step"] = np.asarray([float(optim.t)], dtype=np.float64)
        for name in params:
            if name in optim.m:
                tensors[f"adam.m.{name}"] = optim.m[name]
                tensors[f"adam.v.{name}"] = optim.v[name]
    write_tensors(path, tensors)


def load_checkpoint(path):
    """Return (params, optim state or None, meta dict)."""
    tensors = read_tensors(path)
    params, meta = {}, {}
    m, v = {}, {}
    step = None
    for key, arr in tensors.items():
        if key.startswith("param."):
            params[key[6:]] = arr
        elif key.startswith("meta."):
            meta[key[5:]] = float(arr.reshape(-1)[0])
        elif key.startswith("adam.m."):
            m[key[7:]] = arr
        elif key.startswith("adam.v."):
            v[key[7:]] = arr
        elif key == "adam.step":
            step = int(arr.reshape(-1)[0])
        else:
            raise CheckpointError(f"{path}: unrecognised tensor {key!r}")
    optim = None
    if step is not None:
        optim = AdamState(m=m, v=v, t=step)
    return params, optim, meta
