"""Binary on-disk container for linearized tensors.

Little-endian layout::

    magic   4 bytes  b"ALTO"
    version u8       1
    order   u8       number of modes N
    width   u8       index word width in bits, 64 or 128
    reserved u8      0
    dims    N x u64  mode extents
    nnz     u64      element count M
    masks   N x (width / 8 bytes)   per-mode bit masks
    indices M x (width / 8 bytes)   sorted linear indices
    values  M x f64                 element values

Masks are redundant with the dims (the layout is a pure function of the
shape); they are stored so a reader can verify it derives the same bit
placement, and checked on load.
"""

from __future__ import annotations

import struct

import numpy as np

from .format import AltoTensor
from .layout import build_masks

MAGIC = b"ALTO"
VERSION = 1


class ContainerError(ValueError):
    """Raised when a binary container is malformed or inconsistent."""


def serialize(tensor: AltoTensor) -> bytes:
    """Encode an `AltoTensor` as container bytes."""
    layout = tensor.layout
    wordlen = layout.width // 8
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BBBB", VERSION, layout.order, layout.width, 0)
    out += struct.pack(f"<{layout.order}Q", *layout.dims)
    out += struct.pack("<Q", tensor.nnz)
    for mask in layout.masks:
        out += mask.to_bytes(wordlen, "little")
    out += np.ascontiguousarray(tensor.indices, dtype="<u8").tobytes()
    out += np.ascontiguousarray(tensor.values, dtype="<f8").tobytes()
    return bytes(out)


def deserialize(data: bytes) -> AltoTensor:
    """Decode container bytes, verifying structure and the stored masks."""
    if len(data) < 8:
        raise ContainerError("truncated container (missing header)")
    if data[:4] != MAGIC:
        raise ContainerError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, order, width, _reserved = struct.unpack_from("<BBBB", data, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if width not in (64, 128):
        raise ContainerError(f"unsupported index width {width}")
    if order < 1:
        raise ContainerError("container declares zero modes")
    off = 8
    need = order * 8 + 8
    if len(data) < off + need:
        raise ContainerError("truncated container (missing dims)")
    dims = struct.unpack_from(f"<{order}Q", data, off)
    off += order * 8
    (nnz,) = struct.unpack_from("<Q", data, off)
    off += 8
    try:
        layout = build_masks(dims)
    except ValueError as exc:
        raise ContainerError(f"invalid dims {dims}: {exc}") from None
    if layout.width != width:
        raise ContainerError(
            f"declared width {width} does not match shape (needs {layout.width})"
        )
    wordlen = width // 8
    mask_bytes = order * wordlen
    index_bytes = nnz * wordlen
    value_bytes = nnz * 8
    expected = off + mask_bytes + index_bytes + value_bytes
    if len(data) < expected:
        raise ContainerError(
            f"truncated container ({len(data)} bytes, expected {expected})"
        )
    if len(data) > expected:
        raise ContainerError(f"trailing data ({len(data) - expected} extra bytes)")
    for n in range(order):
        stored = int.from_bytes(data[off : off + wordlen], "little")
        if stored != layout.masks[n]:
            raise ContainerError(
                f"mask for mode {n} is {stored:#x}, layout derives"
                f" {layout.masks[n]:#x}"
            )
        off += wordlen
    n_words = width // 64
    indices = (
        np.frombuffer(data, dtype="<u8", count=nnz * n_words, offset=off)
        .reshape(nnz, n_words)
        .astype(np.uint64)
    )
    off += index_bytes
    values = np.frombuffer(data, dtype="<f8", count=nnz, offset=off).astype(np.float64)
    return AltoTensor(layout, indices, values)


def write_alto(tensor: AltoTensor, path: str) -> None:
    """Serialize `tensor` to a file."""
    with open(path, "wb") as f:
        f.write(serialize(tensor))


def read_alto(path: str) -> AltoTensor:
    """Read and verify a container file."""
    with open(path, "rb") as f:
        return deserialize(f.read())
