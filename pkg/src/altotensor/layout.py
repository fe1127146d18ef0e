"""Adaptive bit-interleaved index encoding.

Each mode n with extent I_n needs b_n = ceil(log2 I_n) index bits.  The
linear index interleaves them by significance group: group g (g = 0 is the
least significant) takes bit g of every mode that still has bits left,
ordered within the group by ascending extent (ties by mode number), so the
shortest mode lands in the lowest position.  Unlike a fixed Morton curve
this adapts to non-power-of-two, skewed shapes and wastes no bits: the
encoding is a bijection onto [0, 2**total_bits).

Encoded indices are stored in 64- or 128-bit words, chosen as the smallest
that fits; wider shapes are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SUPPORTED_WIDTHS = (64, 128)
MAX_BITS = SUPPORTED_WIDTHS[-1]


class WidthOverflowError(ValueError):
    """Total index bits exceed the widest supported storage word."""


def bits_for(dim: int) -> int:
    """Index bits needed for extent `dim`: ceil(log2 dim), zero for 1."""
    if dim < 1:
        raise ValueError(f"extent must be positive, got {dim}")
    return (dim - 1).bit_length()


@dataclass(frozen=True)
class AltoLayout:
    """Bit layout of the linearized index for one tensor shape.

    Attributes
    ----------
    dims : tuple of int
        Mode extents.
    bits : tuple of int
        Per-mode index bit counts b_n.
    positions : tuple of tuple of int
        positions[n][g] is the linear-index bit holding bit g of mode n.
    masks : tuple of int
        Per-mode bit masks over the linear index (union of positions).
    total_bits : int
        Sum of all b_n; linear indices live in [0, 2**total_bits).
    width : int
        Storage word width in bits, 64 or 128.
    """

    dims: tuple[int, ...]
    bits: tuple[int, ...]
    positions: tuple[tuple[int, ...], ...]
    masks: tuple[int, ...]
    total_bits: int
    width: int

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def n_words(self) -> int:
        return self.width // 64


def build_masks(dims: Sequence[int]) -> AltoLayout:
    """Derive the interleaved bit layout for a tensor shape."""
    shape = tuple(int(d) for d in dims)
    if not shape:
        raise ValueError("need at least one mode")
    mode_bits = tuple(bits_for(d) for d in shape)
    total = sum(mode_bits)
    if total > MAX_BITS:
        raise WidthOverflowError(
            f"shape {shape} needs {total} index bits, more than {MAX_BITS}"
        )
    width = SUPPORTED_WIDTHS[0] if total <= SUPPORTED_WIDTHS[0] else SUPPORTED_WIDTHS[1]
    slots: list[list[int]] = [[] for _ in shape]
    pos = 0
    for g in range(max(mode_bits, default=0)):
        group = [n for n in range(len(shape)) if mode_bits[n] > g]
        group.sort(key=lambda n: (shape[n], n))
        for n in group:
            slots[n].append(pos)
            pos += 1
    masks = tuple(sum(1 << p for p in mode_slots) for mode_slots in slots)
    return AltoLayout(
        dims=shape,
        bits=mode_bits,
        positions=tuple(tuple(s) for s in slots),
        masks=masks,
        total_bits=total,
        width=width,
    )


def linearize(layout: AltoLayout, coords: Sequence[int]) -> int:
    """Encode one coordinate tuple into its linear index."""
    if len(coords) != layout.order:
        raise ValueError(f"expected {layout.order} coordinates, got {len(coords)}")
    pos = 0
    for n, c in enumerate(coords):
        c = int(c)
        if not 0 <= c < layout.dims[n]:
            raise ValueError(f"coordinate {c} out of range for mode {n}")
        for g, p in enumerate(layout.positions[n]):
            pos |= ((c >> g) & 1) << p
    return pos


def delinearize(layout: AltoLayout, pos: int) -> tuple[int, ...]:
    """Decode a linear index back into its coordinate tuple.

    Total on W-bit words: bits outside the mode masks, including flag bits
    above `total_bits`, are ignored.
    """
    pos = int(pos) & ((1 << layout.width) - 1)
    coords = []
    for slots in layout.positions:
        c = 0
        for g, p in enumerate(slots):
            c |= ((pos >> p) & 1) << g
        coords.append(c)
    return tuple(coords)


def _check_coords_array(layout: AltoLayout, coords: np.ndarray) -> np.ndarray:
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] != layout.order:
        raise ValueError(
            f"coords must have shape (nnz, {layout.order}), got {coords.shape}"
        )
    if coords.size and (
        coords.min() < 0 or (coords >= np.asarray(layout.dims, dtype=np.int64)).any()
    ):
        raise ValueError("coordinates out of range for layout dims")
    return coords


def linearize_array(layout: AltoLayout, coords: np.ndarray) -> np.ndarray:
    """Encode coordinate rows into linear indices.

    Returns a (nnz, width // 64) uint64 array, least significant word first.
    """
    coords = _check_coords_array(layout, coords)
    words = np.zeros((coords.shape[0], layout.n_words), dtype=np.uint64)
    for n, slots in enumerate(layout.positions):
        col = coords[:, n].astype(np.uint64)
        for g, p in enumerate(slots):
            w, off = divmod(p, 64)
            words[:, w] |= ((col >> np.uint64(g)) & np.uint64(1)) << np.uint64(off)
    return words


def extract_mode_array(layout: AltoLayout, words: np.ndarray, mode: int) -> np.ndarray:
    """Decode one mode's coordinates from linear index words, as int64."""
    out = np.zeros(words.shape[0], dtype=np.uint64)
    for g, p in enumerate(layout.positions[mode]):
        w, off = divmod(p, 64)
        out |= ((words[:, w] >> np.uint64(off)) & np.uint64(1)) << np.uint64(g)
    return out.astype(np.int64)


def delinearize_array(layout: AltoLayout, words: np.ndarray) -> np.ndarray:
    """Decode linear index words into an (nnz, order) int64 coordinate array."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    if words.ndim != 2 or words.shape[1] != layout.n_words:
        raise ValueError(
            f"index words must have shape (nnz, {layout.n_words}), got {words.shape}"
        )
    coords = np.empty((words.shape[0], layout.order), dtype=np.int64)
    for n in range(layout.order):
        coords[:, n] = extract_mode_array(layout, words, n)
    return coords


@dataclass(frozen=True)
class StorageStats:
    """Index storage footprint of one tensor, in bits.

    `s_alto` is the information-theoretic cost nnz * sum(log2 I_n);
    `s_alto_native` rounds each element's index up to the native word.
    `s_coo` stores each mode in its own ceil(b_n / word_bits) words and
    `s_sfc` pads every mode to the longest one, as a fixed space-filling
    curve over the cubic bounding box would.  `coo_over_alto` is the
    per-element word-count ratio of the two formats; it is at least 1.
    """

    word_bits: int
    width: int
    s_coo: int
    s_alto: float
    s_alto_native: int
    s_sfc: int
    coo_over_alto: float


def storage_stats(dims: Sequence[int], nnz: int, word_bits: int = 8) -> StorageStats:
    """Compute index storage sizes for a shape at a given word granularity."""
    if word_bits not in (8, 16, 32, 64):
        raise ValueError(f"word_bits must be one of 8, 16, 32, 64, got {word_bits}")
    if nnz < 0:
        raise ValueError("nnz must be nonnegative")
    layout = build_masks(dims)
    words_coo = sum(-(-b // word_bits) for b in layout.bits)
    # sum(log2 I_n) == log2(prod I_n); fsum keeps the boundary cases (all
    # powers of two) exact so the ceiling does not jump a word.
    log_sum = math.fsum(math.log2(d) for d in layout.dims)
    words_alto = math.ceil(log_sum / word_bits)
    ratio = words_coo / words_alto if words_alto else 1.0
    return StorageStats(
        word_bits=word_bits,
        width=layout.width,
        s_coo=nnz * words_coo * word_bits,
        s_alto=nnz * log_sum,
        s_alto_native=nnz * layout.width,
        s_sfc=nnz * layout.order * max(layout.bits),
        coo_over_alto=ratio,
    )
