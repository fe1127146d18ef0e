"""Linearized sparse tensor storage, balanced partitions, and conflict plans.

An `AltoTensor` keeps one encoded linear index per element, sorted
ascending, plus the value array.  Partitioning slices that sorted sequence
into contiguous, size-balanced element ranges; because the encoding packs
spatial locality into nearby linear indices, each range touches a compact
coordinate interval per mode.  Conflict planning inspects those intervals
to decide how a parallel kernel must synchronize its output writes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .coo import CooTensor
from .layout import (
    AltoLayout,
    build_masks,
    delinearize_array,
    extract_mode_array,
    linearize_array,
)


@dataclass(frozen=True)
class AltoTensor:
    """Sparse tensor with bit-interleaved linear indices, sorted ascending.

    `indices` has shape (nnz, width // 64), least significant word first.
    Bits above `layout.total_bits` are normally zero; kernels may borrow
    them transiently as per-element flags.
    """

    layout: AltoLayout
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        indices = np.ascontiguousarray(self.indices, dtype=np.uint64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if indices.ndim != 2 or indices.shape[1] != self.layout.n_words:
            raise ValueError(
                f"indices must have shape (nnz, {self.layout.n_words}),"
                f" got {indices.shape}"
            )
        if values.shape != (indices.shape[0],):
            raise ValueError("values length must match number of indices")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)

    @property
    def nnz(self) -> int:
        return self.indices.shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.layout.dims

    def linear_at(self, row: int) -> int:
        """Linear index of one element as a Python int (flag bits included)."""
        pos = 0
        for w in range(self.layout.n_words):
            pos |= int(self.indices[row, w]) << (64 * w)
        return pos

    def linear_positions(self) -> list[int]:
        """Linear indices as Python ints (flag bits included, if any)."""
        return [self.linear_at(row) for row in range(self.nnz)]

    def to_coo(self) -> CooTensor:
        """Decode back to coordinate form (flag bits are ignored)."""
        coords = delinearize_array(self.layout, self.indices)
        return CooTensor(self.layout.dims, coords, self.values.copy()).coalesce()


def _sort_by_words(indices: np.ndarray) -> np.ndarray:
    """Permutation sorting multiword indices ascending (last word is primary)."""
    keys = tuple(indices[:, w] for w in range(indices.shape[1]))
    return np.lexsort(keys)


def build_alto(tensor: CooTensor, layout: AltoLayout | None = None) -> AltoTensor:
    """Encode a coalesced coordinate tensor into sorted linearized form.

    Raises ValueError if duplicate coordinates remain (coalesce first).
    """
    if layout is None:
        layout = build_masks(tensor.dims)
    elif layout.dims != tensor.dims:
        raise ValueError("layout dims do not match tensor dims")
    words = linearize_array(layout, tensor.coords)
    perm = _sort_by_words(words)
    words = words[perm]
    values = tensor.values[perm]
    if words.shape[0] > 1 and bool(np.all(words[1:] == words[:-1], axis=1).any()):
        raise ValueError("duplicate coordinates; coalesce the tensor first")
    return AltoTensor(layout, words, values)


@dataclass(frozen=True)
class PartitionSet:
    """Contiguous, size-balanced slices of a sorted linearized tensor.

    Attributes
    ----------
    offsets : (count + 1,) int64 ndarray
        Element range of partition l is [offsets[l], offsets[l + 1]).
    intervals : (count, order, 2) int64 ndarray
        intervals[l, n] = (min, max) coordinate of mode n inside partition l.
        Undefined (set to (0, -1)) for empty partitions.
    spans : tuple of (int, int)
        First and last linear index in each nonempty partition.
    """

    offsets: np.ndarray
    intervals: np.ndarray
    spans: tuple[tuple[int, int], ...]

    @property
    def count(self) -> int:
        return len(self.offsets) - 1


def partition(tensor: AltoTensor, count: int) -> PartitionSet:
    """Split `tensor` into `count` contiguous element ranges of near-equal size.

    Sizes differ by at most one element, with the larger ranges first.
    `count` must lie in [1, nnz].
    """
    m = tensor.nnz
    if not 1 <= count <= max(m, 1):
        raise ValueError(f"partition count {count} not in [1, {max(m, 1)}]")
    base, extra = divmod(m, count)
    sizes = np.full(count, base, dtype=np.int64)
    sizes[:extra] += 1
    offsets = np.zeros(count + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    coords = delinearize_array(tensor.layout, tensor.indices)
    intervals = np.empty((count, tensor.layout.order, 2), dtype=np.int64)
    spans = []
    for l in range(count):
        lo, hi = offsets[l], offsets[l + 1]
        if lo == hi:
            intervals[l, :, 0] = 0
            intervals[l, :, 1] = -1
            continue
        seg = coords[lo:hi]
        intervals[l, :, 0] = seg.min(axis=0)
        intervals[l, :, 1] = seg.max(axis=0)
        spans.append((tensor.linear_at(lo), tensor.linear_at(hi - 1)))
    return PartitionSet(offsets, intervals, tuple(spans))


class Strategy(enum.Enum):
    """Output-synchronization strategy of the parallel kernel."""

    BUFFERED = "buffered"
    ATOMIC = "atomic"


@dataclass(frozen=True)
class ConflictPlan:
    """How a parallel kernel synchronizes output rows for one mode.

    Buffered mode gives each partition a private output staging buffer and
    merges afterwards; it pays off when the output matrix is small enough
    to be reused heavily.  Atomic mode writes the shared output directly
    and only elements whose output row is also touched by another
    partition (rows inside `overlaps`) need guarding; those elements are
    marked with `flag_bit` in the index words.

    `overlaps[l]` is a tuple of disjoint, ascending (lo, hi) coordinate
    ranges of the kernel mode shared between partition l and any other.
    `flag_bit` is None when every index bit is occupied; kernels must then
    guard all writes.
    """

    mode: int
    strategy: Strategy
    reuse: float
    offsets: np.ndarray
    overlaps: tuple[tuple[tuple[int, int], ...], ...] | None
    flag_bit: int | None

    @property
    def count(self) -> int:
        return len(self.offsets) - 1


# An output row is reused this many times on average before the strategy
# flips to direct writes: below it, a staging buffer costs more memory
# traffic (two extra reads and writes per row) than it saves.
REUSE_THRESHOLD = 4.0


def _merge_ranges(ranges: list[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    """Union of closed integer ranges as disjoint ascending ranges."""
    merged: list[tuple[int, int]] = []
    for lo, hi in sorted(ranges):
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


def plan_conflicts(
    tensor: AltoTensor,
    parts: PartitionSet,
    mode: int,
    force_strategy: Strategy | None = None,
) -> ConflictPlan:
    """Choose a synchronization strategy and locate shared output rows.

    The strategy is Buffered when average output-row reuse nnz / I_mode
    exceeds `REUSE_THRESHOLD`, else Atomic; `force_strategy` overrides.
    Overlap ranges are computed only for Atomic plans.
    """
    if not 0 <= mode < tensor.layout.order:
        raise ValueError(f"mode {mode} out of range for order {tensor.layout.order}")
    dim = tensor.layout.dims[mode]
    reuse = tensor.nnz / dim
    strategy = force_strategy
    if strategy is None:
        strategy = Strategy.BUFFERED if reuse > REUSE_THRESHOLD else Strategy.ATOMIC
    overlaps = None
    flag_bit = None
    if strategy is Strategy.ATOMIC:
        if tensor.layout.total_bits < tensor.layout.width:
            flag_bit = tensor.layout.total_bits
        count = parts.count
        mode_iv = parts.intervals[:, mode, :].tolist()
        per_part = []
        for l in range(count):
            lo_l, hi_l = mode_iv[l]
            shared = [
                (max(lo_l, mode_iv[j][0]), min(hi_l, mode_iv[j][1]))
                for j in range(count)
                if j != l
                and max(lo_l, mode_iv[j][0]) <= min(hi_l, mode_iv[j][1])
            ]
            per_part.append(_merge_ranges(shared))
        overlaps = tuple(per_part)
    return ConflictPlan(
        mode=mode,
        strategy=strategy,
        reuse=reuse,
        offsets=parts.offsets,
        overlaps=overlaps,
        flag_bit=flag_bit,
    )


def apply_boundary_flags(tensor: AltoTensor, plan: ConflictPlan) -> AltoTensor:
    """Return a copy whose shared-row elements carry the plan's flag bit.

    An element is flagged when its kernel-mode coordinate falls inside its
    partition's overlap ranges.  Every element whose output row is written
    by more than one partition is flagged: such a row lies in both
    partitions' coordinate intervals, hence in the overlap ranges of each.
    Only valid for Atomic plans with a free flag bit.
    """
    if plan.strategy is not Strategy.ATOMIC or plan.overlaps is None:
        raise ValueError("boundary flags only apply to atomic plans")
    if plan.flag_bit is None:
        raise ValueError("no unused index bit available for flags")
    if plan.offsets[-1] != tensor.nnz:
        raise ValueError("plan does not match tensor (element counts differ)")
    w, off = divmod(plan.flag_bit, 64)
    coords = extract_mode_array(tensor.layout, tensor.indices, plan.mode)
    indices = tensor.indices.copy()
    for l in range(plan.count):
        lo, hi = plan.offsets[l], plan.offsets[l + 1]
        if lo == hi or not plan.overlaps[l]:
            continue
        seg = coords[lo:hi]
        sel = np.zeros(hi - lo, dtype=bool)
        for r_lo, r_hi in plan.overlaps[l]:
            sel |= (seg >= r_lo) & (seg <= r_hi)
        rows = lo + np.nonzero(sel)[0]
        indices[rows, w] |= np.uint64(1 << off)
    return AltoTensor(tensor.layout, indices, tensor.values)


def read_flags(tensor: AltoTensor, flag_bit: int) -> np.ndarray:
    """Boolean array of per-element flag bits."""
    w, off = divmod(int(flag_bit), 64)
    return ((tensor.indices[:, w] >> np.uint64(off)) & np.uint64(1)).astype(bool)


def clear_flags(tensor: AltoTensor, flag_bit: int) -> AltoTensor:
    """Return a copy with the given flag bit cleared on every element."""
    w, off = divmod(int(flag_bit), 64)
    indices = tensor.indices.copy()
    indices[:, w] &= np.uint64(~(1 << off) & 0xFFFFFFFFFFFFFFFF)
    return AltoTensor(tensor.layout, indices, tensor.values)
