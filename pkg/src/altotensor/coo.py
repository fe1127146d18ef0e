"""Coordinate-format sparse tensors and FROSTT-style text I/O.

The text format is one element per line: N one-based indices followed by a
value, separated by whitespace.  Blank lines and lines starting with ``#``
are ignored.  The number of modes is inferred from the first data line, and
dimensions from the per-mode index maxima, unless an optional header
comment ``# dims: I1 I2 ...`` declares them explicitly::

    # dims: 3 5 2
    1 1 1 2.0
    2 4 1 -0.5

Tensors are stored coalesced: coordinates are unique and sorted
lexicographically with mode 0 as the primary key.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np


class TnsParseError(ValueError):
    """Raised when tensor text input is malformed."""


@dataclass(frozen=True)
class CooTensor:
    """Sparse tensor as a coordinate list.

    Attributes
    ----------
    dims : tuple of int
        Extent of each mode.
    coords : (nnz, order) int64 ndarray
        Zero-based coordinates, one row per stored element.
    values : (nnz,) float64 ndarray
        Element values, aligned with `coords` rows.
    """

    dims: tuple[int, ...]
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("tensor needs at least one mode")
        if any(d < 1 for d in dims):
            raise ValueError(f"dimensions must be positive, got {dims}")
        coords = np.ascontiguousarray(self.coords, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != len(dims):
            raise ValueError(
                f"coords must have shape (nnz, {len(dims)}), got {coords.shape}"
            )
        if values.shape != (coords.shape[0],):
            raise ValueError("values length must match number of coordinate rows")
        if coords.size and (
            coords.min() < 0 or (coords >= np.asarray(dims, dtype=np.int64)).any()
        ):
            raise ValueError("coordinates out of range for dims")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def nnz(self) -> int:
        return self.coords.shape[0]

    @property
    def density(self) -> float:
        return self.nnz / math.prod(self.dims)

    def coalesce(self) -> "CooTensor":
        """Return a copy with duplicate coordinates summed and rows sorted."""
        return _coalesce(self.dims, self.coords, self.values)

    def isequal(self, other: "CooTensor") -> bool:
        """True if both tensors hold identical dims, coordinates, and values."""
        if self.dims != other.dims:
            return False
        a, b = self.coalesce(), other.coalesce()
        return bool(
            np.array_equal(a.coords, b.coords) and np.array_equal(a.values, b.values)
        )


def _coalesce(
    dims: Sequence[int], coords: np.ndarray, values: np.ndarray
) -> CooTensor:
    """Sort rows lexicographically (mode 0 major) and sum duplicates."""
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if coords.shape[0] == 0:
        return CooTensor(tuple(dims), coords.reshape(0, len(dims)), values)
    # np.lexsort treats the last key as primary, so feed columns reversed.
    perm = np.lexsort(tuple(coords[:, n] for n in reversed(range(coords.shape[1]))))
    coords = coords[perm]
    values = values[perm]
    fresh = np.empty(coords.shape[0], dtype=bool)
    fresh[0] = True
    np.any(coords[1:] != coords[:-1], axis=1, out=fresh[1:])
    group = np.cumsum(fresh) - 1
    summed = np.bincount(group, weights=values)
    return CooTensor(tuple(dims), coords[fresh], summed)


def parse_tns(
    source: IO[str] | str | Iterable[str], dims: Sequence[int] | None = None
) -> CooTensor:
    """Parse text-format tensor data into a coalesced `CooTensor`.

    `source` may be an open text file, an iterable of lines, or a string
    holding the whole document.  Dimensions default to the per-mode
    coordinate maxima; a ``# dims: I1 I2 ...`` header comment before the
    first data line, or the `dims` argument (which wins), overrides them.
    Declared extents must cover the data.  Duplicate coordinates are summed.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    rows: list[list[int]] = []
    vals: list[float] = []
    order: int | None = None
    header: tuple[int, ...] | None = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if header is None and order is None and body.startswith("dims:"):
                try:
                    header = tuple(int(f) for f in body[len("dims:"):].split())
                except ValueError:
                    raise TnsParseError(
                        f"line {lineno}: malformed dims header {line!r}"
                    ) from None
                if not header or any(d < 1 for d in header):
                    raise TnsParseError(
                        f"line {lineno}: dims header needs positive extents"
                    )
            continue
        fields = line.split()
        if order is None:
            order = len(fields) - 1
            if order < 1:
                raise TnsParseError(
                    f"line {lineno}: expected at least one index and a value"
                )
        if len(fields) != order + 1:
            raise TnsParseError(
                f"line {lineno}: expected {order + 1} fields, got {len(fields)}"
            )
        try:
            idx = [int(f) for f in fields[:-1]]
            val = float(fields[-1])
        except ValueError:
            raise TnsParseError(f"line {lineno}: malformed entry {line!r}") from None
        if min(idx) < 1:
            raise TnsParseError(f"line {lineno}: indices are one-based, got {min(idx)}")
        rows.append(idx)
        vals.append(val)
    if dims is None:
        dims = header
    if order is None:
        if dims is None:
            raise TnsParseError("no data lines found")
        order = len(dims)
    coords = np.asarray(rows, dtype=np.int64).reshape(len(rows), order) - 1
    values = np.asarray(vals, dtype=np.float64)
    if dims is None:
        shape = tuple(int(m) + 1 for m in coords.max(axis=0))
    else:
        shape = tuple(int(d) for d in dims)
        if len(shape) != order:
            raise TnsParseError(
                f"declared {len(shape)} dimensions but data has {order} modes"
            )
        if (coords >= np.asarray(shape, dtype=np.int64)).any():
            raise TnsParseError("coordinate exceeds declared dimensions")
    return _coalesce(shape, coords, values)


def write_tns(tensor: CooTensor, stream: IO[str] | None = None) -> str | None:
    """Write a tensor in the text format, one-based indices, one line per element.

    A ``# dims:`` header records the exact extents and values are rendered
    with `repr`, so a parse round trip reproduces the tensor bit-exactly.
    Writes to `stream` when given, otherwise returns the text.
    """
    out = ["# dims: " + " ".join(str(d) for d in tensor.dims)]
    for row, val in zip(tensor.coords, tensor.values):
        fields = [str(int(i) + 1) for i in row]
        fields.append(repr(float(val)))
        out.append(" ".join(fields))
    text = "\n".join(out) + "\n"
    if stream is None:
        return text
    stream.write(text)
    return None


def random_tensor(dims: Sequence[int], target_nnz: int, seed: int) -> CooTensor:
    """Draw `target_nnz` elements uniformly over the index space.

    Coordinates are sampled independently per mode and values uniformly on
    [0, 1).  Collisions coalesce, so the resulting nnz may be slightly below
    `target_nnz`.  Reproducible for a fixed seed.
    """
    shape = tuple(int(d) for d in dims)
    if any(d < 1 for d in shape):
        raise ValueError(f"dimensions must be positive, got {shape}")
    if target_nnz < 0:
        raise ValueError("target_nnz must be nonnegative")
    if target_nnz > math.prod(shape):
        raise ValueError(
            f"target_nnz {target_nnz} exceeds index space {math.prod(shape)}"
        )
    rng = np.random.default_rng(seed)
    coords = rng.integers(0, shape, size=(target_nnz, len(shape)), dtype=np.int64)
    values = rng.random(target_nnz)
    return _coalesce(shape, coords, values)


class ReuseClass(str, enum.Enum):
    """Qualitative fiber-reuse level of a mode; worst one bounds the tensor."""

    HIGH = "High"
    MEDIUM = "Medium"
    LIMITED = "Limited"


_REUSE_RANK = {ReuseClass.LIMITED: 0, ReuseClass.MEDIUM: 1, ReuseClass.HIGH: 2}


@dataclass(frozen=True)
class ReuseReport:
    """Per-mode average fiber reuse (nnz / dim) with qualitative classes."""

    reuse: tuple[float, ...]
    classes: tuple[ReuseClass, ...]
    overall: ReuseClass


def classify_reuse(reuse: float) -> ReuseClass:
    """Map an average reuse factor to its class.

    High above 8, Medium on [5, 8], Limited below 5.
    """
    if reuse > 8:
        return ReuseClass.HIGH
    if reuse >= 5:
        return ReuseClass.MEDIUM
    return ReuseClass.LIMITED


def reuse_report(nnz: int, dims: Sequence[int]) -> ReuseReport:
    """Build a `ReuseReport` from an element count and mode extents."""
    reuse = tuple(nnz / int(d) for d in dims)
    classes = tuple(classify_reuse(r) for r in reuse)
    overall = min(classes, key=_REUSE_RANK.__getitem__)
    return ReuseReport(reuse, classes, overall)


def fiber_reuse(tensor: CooTensor) -> ReuseReport:
    """Report the average per-mode fiber reuse of `tensor`."""
    return reuse_report(tensor.nnz, tensor.dims)
