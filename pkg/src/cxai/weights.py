"""Binary weights file.

Layout (all integers little-endian)::

    b"CXAI"  u8 version (=1)  u32 tensor_count
    per tensor: u16 name_len, name (UTF-8), u8 rank, rank * u32 dims,
                prod(dims) * f32 values (row-major)

Values are stored as float32 and widened to float64 on load.
"""

import struct
from dataclasses import replace

import numpy as np

from .errors import (
    BadMagicError,
    EmptyModelError,
    TruncatedFileError,
    VersionMismatchError,
    WeightsDimensionError,
    WeightsFileError,
)

MAGIC = b"CXAI"
VERSION = 1


def encode_tensors(tensors):
    out = [MAGIC, struct.pack("<BI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"file truncated while reading {what} at byte {self.pos} "
                f"(need {n} bytes, {len(self.data) - self.pos} left)"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_tensors(data):
    r = _Reader(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}")
    r.pos = 4
    (version,) = r.unpack("<B", "version")
    if version != VERSION:
        raise VersionMismatchError(f"weights format version {version}, this reader supports {VERSION}")
    (count,) = r.unpack("<I", "tensor count")
    if count == 0:
        raise EmptyModelError("weights file declares zero tensors")
    tensors = {}
    for i in range(count):
        (name_len,) = r.unpack("<H", f"name length of tensor {i}")
        try:
            name = r.take(name_len, f"name of tensor {i}").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightsFileError(f"tensor {i} name is not UTF-8: {exc}") from None
        (rank,) = r.unpack("<B", f"rank of {name}")
        dims = r.unpack(f"<{rank}I", f"dims of {name}")
        size = int(np.prod(dims, dtype=np.int64))
        raw = r.take(4 * size, f"values of {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(dims)
    if r.pos != len(data):
        raise WeightsFileError(f"{len(data) - r.pos} trailing bytes after last tensor")
    return tensors


def write_tensors(path, tensors):
    with open(path, "wb") as fh:
        fh.write(encode_tensors(tensors))


def read_tensors(path):
    with open(path, "rb") as fh:
        return decode_tensors(fh.read())


def save_weights(net, path):
    write_tensors(path, {name: net.params[name] for name in net.param_names()})


def load_weights(path, net):
    """Load parameters from ``path`` into the architecture of ``net``.

    ``net`` only supplies the architecture (it lives in the human-readable
    config); its current parameter values are ignored.
    """
    tensors = read_tensors(path)
    expected = {name: net.params[name].shape for name in net.param_names()}
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise WeightsDimensionError(f"tensor names do not match architecture: missing={missing} unexpected={extra}")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise WeightsDimensionError(f"{name}: file has shape {tensors[name].shape}, architecture needs {shape}")
    return replace(net, params=tensors)
