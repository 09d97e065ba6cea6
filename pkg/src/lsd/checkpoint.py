"""Binary checkpoint files.

Layout (little-endian)::

    b"LSDC" | u32 version | u32 precision bits (32 or 64) | u32 tensor count
    per tensor: u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
                u64 byte offset into the data section
    data section: raw tensor bytes in manifest order
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpointError
from .model import ModelParams, Seq2Seq

MAGIC = b"LSDC"
VERSION = 1
_DTYPES = {32: np.dtype("<f4"), 64: np.dtype("<f8")}


def to_bytes(params: ModelParams) -> bytes:
    bits = params.dtype.itemsize * 8
    dt = _DTYPES[bits]
    header = [MAGIC, struct.pack("<III", VERSION, bits, len(params))]
    chunks = []
    offset = 0
    for name, v in params.values.items():
        raw = np.ascontiguousarray(v, dtype=dt).tobytes()
        enc = name.encode("utf-8")
        header.append(struct.pack("<I", len(enc)) + enc)
        header.append(struct.pack("<I", v.ndim) + struct.pack(f"<{v.ndim}Q", *v.shape))
        header.append(struct.pack("<Q", offset))
        chunks.append(raw)
        offset += len(raw)
    return b"".join(header) + b"".join(chunks)


def save_checkpoint(params: ModelParams | Seq2Seq, path):
    if isinstance(params, Seq2Seq):
        params = params.params
    Path(path).write_bytes(to_bytes(params))


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, fmt):
        n = struct.calcsize(fmt)
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError(f"{self.path}: truncated header")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += n
        return out

    def raw(self, n):
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError(f"{self.path}: truncated header")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def from_bytes(buf: bytes, path="<bytes>") -> ModelParams:
    if buf[:4] != MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic {buf[:4]!r}")
    r = _Reader(buf, path)
    r.pos = 4
    version, bits, count = r.take("<III")
    if version != VERSION:
        raise CorruptCheckpointError(f"{path}: unsupported format version {version}")
    if bits not in _DTYPES:
        raise CorruptCheckpointError(f"{path}: bad precision flag {bits}")
    dt = _DTYPES[bits]
    manifest = []
    expected = 0
    for _ in range(count):
        (n,) = r.take("<I")
        try:
            name = r.raw(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptCheckpointError(f"{path}: tensor name is not UTF-8") from None
        (rank,) = r.take("<I")
        if rank > 8:
            raise CorruptCheckpointError(f"{path}: tensor {name!r} has implausible rank {rank}")
        dims = r.take(f"<{rank}Q")
        (offset,) = r.take("<Q")
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        if offset != expected:
            raise CorruptCheckpointError(
                f"{path}: tensor {name!r} offset {offset} does not follow previous data ({expected})")
        manifest.append((name, tuple(int(d) for d in dims), offset, nbytes))
        expected += nbytes
    data = buf[r.pos:]
    if len(data) != expected:
        raise CorruptCheckpointError(
            f"{path}: data section is {len(data)} bytes, manifest describes {expected}")
    values = OrderedDict()
    for name, dims, offset, nbytes in manifest:
        if name in values:
            raise CorruptCheckpointError(f"{path}: duplicate tensor {name!r}")
        arr = np.frombuffer(data, dtype=dt, count=nbytes // dt.itemsize, offset=offset)
        values[name] = arr.reshape(dims).astype(dt.newbyteorder("="), copy=True)
    return ModelParams(values)


def load_checkpoint(path) -> ModelParams:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptCheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    return from_bytes(buf, path)


def load_into(model: Seq2Seq, path) -> Seq2Seq:
    """Load a checkpoint into ``model`` after validating names and shapes."""
    params = load_checkpoint(path)
    model.params.check_compatible(params)
    model.params = params
    return model
