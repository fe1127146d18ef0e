"""Matricized-tensor times Khatri-Rao product kernels.

For a sparse tensor X and factor matrices F_0..F_{N-1} with a common rank
R, the mode-n MTTKRP is

    out[i_n, r] = sum over elements x of X:  x.value
                  * prod over modes m != n of F_m[x.coord_m, r]

Three implementations are provided: a coordinate-list oracle used for
verification, a sequential kernel over the linearized format, and a
thread-parallel kernel that synchronizes output writes per a
`ConflictPlan` (private staging buffers, or direct writes with the
flagged boundary elements pre-aggregated under a lock).
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .coo import CooTensor
from .format import (
    AltoTensor,
    ConflictPlan,
    PartitionSet,
    Strategy,
    apply_boundary_flags,
    partition,
    plan_conflicts,
    read_flags,
)
from .layout import delinearize_array

# Elements processed per scatter batch; bounds temporary memory at
# roughly CHUNK * rank floats.
CHUNK = 1 << 17


def _check_factors(
    dims: Sequence[int], factors: Sequence[np.ndarray], mode: int
) -> int:
    if not 0 <= mode < len(dims):
        raise ValueError(f"mode {mode} out of range for order {len(dims)}")
    if len(factors) != len(dims):
        raise ValueError(f"expected {len(dims)} factor matrices, got {len(factors)}")
    rank = None
    for n, f in enumerate(factors):
        if f.ndim != 2:
            raise ValueError(f"factor {n} must be 2-D, got {f.ndim}-D")
        if f.shape[0] != dims[n]:
            raise ValueError(
                f"factor {n} has {f.shape[0]} rows, mode extent is {dims[n]}"
            )
        if rank is None:
            rank = f.shape[1]
        elif f.shape[1] != rank:
            raise ValueError("factor matrices must share one rank")
    return int(rank)


def mttkrp_oracle(
    tensor: CooTensor, factors: Sequence[np.ndarray], mode: int
) -> np.ndarray:
    """Reference MTTKRP over the coordinate list, accumulated in input order."""
    rank = _check_factors(tensor.dims, factors, mode)
    out = np.zeros((tensor.dims[mode], rank), dtype=np.float64)
    if tensor.nnz == 0:
        return out
    contrib = tensor.values[:, None].copy()
    for n in range(tensor.order):
        if n != mode:
            contrib = contrib * factors[n][tensor.coords[:, n]]
    np.add.at(out, tensor.coords[:, mode], contrib)
    return out


def _contrib(
    tensor: AltoTensor,
    factors: Sequence[np.ndarray],
    mode: int,
    start: int,
    stop: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Output rows and per-element contributions for elements [start, stop).

    The contribution array has one column per rank component, except for
    order-1 tensors where the empty factor product leaves a single column
    that broadcasts across the rank.
    """
    coords = delinearize_array(tensor.layout, tensor.indices[start:stop])
    contrib = tensor.values[start:stop, None]
    expanded = False
    for n in range(tensor.layout.order):
        if n == mode:
            continue
        gathered = factors[n][coords[:, n]]
        if expanded:
            contrib *= gathered
        else:
            contrib = contrib * gathered
            expanded = True
    return coords[:, mode], contrib


def mttkrp_seq(
    tensor: AltoTensor, factors: Sequence[np.ndarray], mode: int
) -> np.ndarray:
    """Sequential MTTKRP over the linearized element order."""
    rank = _check_factors(tensor.layout.dims, factors, mode)
    out = np.zeros((tensor.layout.dims[mode], rank), dtype=np.float64)
    for start in range(0, tensor.nnz, CHUNK):
        rows, contrib = _contrib(tensor, factors, mode, start, start + CHUNK)
        np.add.at(out, rows, contrib)
    return out


def _run_workers(workers: int, task, count: int) -> None:
    """Run task(worker_id) for ids 0..workers-1, inline when single."""
    ids = [w for w in range(workers) if w < count]
    if len(ids) <= 1:
        for w in ids:
            task(w)
        return
    with ThreadPoolExecutor(max_workers=len(ids)) as pool:
        # list() propagates the first worker exception, if any.
        list(pool.map(task, ids))


def _par_buffered(
    tensor: AltoTensor,
    plan: ConflictPlan,
    parts: PartitionSet,
    factors: Sequence[np.ndarray],
    rank: int,
    workers: int,
) -> np.ndarray:
    mode = plan.mode
    dim = tensor.layout.dims[mode]
    count = parts.count
    offsets = parts.offsets
    starts = parts.intervals[:, mode, 0]
    ends = parts.intervals[:, mode, 1]
    buffers: list[np.ndarray | None] = [None] * count

    def stage(worker: int) -> None:
        for l in range(worker, count, workers):
            buf = np.zeros((max(ends[l] - starts[l] + 1, 0), rank), dtype=np.float64)
            for s in range(offsets[l], offsets[l + 1], CHUNK):
                rows, contrib = _contrib(
                    tensor, factors, mode, s, min(s + CHUNK, offsets[l + 1])
                )
                np.add.at(buf, rows - starts[l], contrib)
            buffers[l] = buf

    _run_workers(workers, stage, count)

    out = np.zeros((dim, rank), dtype=np.float64)
    bounds = [dim * w // workers for w in range(workers + 1)]

    def merge(worker: int) -> None:
        # Each worker owns a disjoint output row block; partitions are
        # pulled in ascending order, so per-row accumulation order does
        # not depend on the worker count.
        b_lo, b_hi = bounds[worker], bounds[worker + 1] - 1
        for l in range(count):
            lo = max(int(starts[l]), b_lo)
            hi = min(int(ends[l]), b_hi)
            if lo <= hi:
                out[lo : hi + 1] += buffers[l][lo - starts[l] : hi - starts[l] + 1]

    _run_workers(workers, merge, workers)
    return out


def _par_atomic(
    tensor: AltoTensor,
    plan: ConflictPlan,
    parts: PartitionSet,
    factors: Sequence[np.ndarray],
    rank: int,
    workers: int,
) -> np.ndarray:
    mode = plan.mode
    offsets = parts.offsets
    count = parts.count
    if plan.flag_bit is None:
        flags = np.ones(tensor.nnz, dtype=bool)
    else:
        flags = read_flags(tensor, plan.flag_bit)
        if (
            not flags.any()
            and plan.overlaps is not None
            and any(plan.overlaps)
            and tensor.nnz
        ):
            raise ValueError(
                "plan expects boundary flags; apply_boundary_flags first"
            )
    out = np.zeros((tensor.layout.dims[mode], rank), dtype=np.float64)
    lock = threading.Lock()

    def work(worker: int) -> None:
        for l in range(worker, count, workers):
            for s in range(offsets[l], offsets[l + 1], CHUNK):
                e = min(s + CHUNK, offsets[l + 1])
                rows, contrib = _contrib(tensor, factors, mode, s, e)
                guarded = flags[s:e]
                plain = ~guarded
                if plain.any():
                    # Rows of unflagged elements are private to this
                    # partition, so unguarded scatter is race-free.
                    np.add.at(out, rows[plain], contrib[plain])
                if guarded.any():
                    uniq, inv = np.unique(rows[guarded], return_inverse=True)
                    packed = np.zeros((len(uniq), rank), dtype=np.float64)
                    np.add.at(packed, inv, contrib[guarded])
                    with lock:
                        out[uniq] += packed

    _run_workers(workers, work, count)
    return out


def mttkrp_par(
    tensor: AltoTensor,
    parts: PartitionSet,
    plan: ConflictPlan,
    factors: Sequence[np.ndarray],
    mode: int,
    workers: int = 1,
) -> np.ndarray:
    """Parallel MTTKRP following a conflict plan.

    Buffered plans are bitwise deterministic for a fixed partition count,
    independent of `workers`.  Atomic plans require the tensor to carry
    the plan's boundary flags (see `apply_boundary_flags`) unless the plan
    has no flag bit, in which case every element is treated as shared.
    """
    rank = _check_factors(tensor.layout.dims, factors, mode)
    if workers < 1:
        raise ValueError("workers must be at least 1")
    if plan.mode != mode:
        raise ValueError(f"plan is for mode {plan.mode}, kernel asked for {mode}")
    if not np.array_equal(plan.offsets, parts.offsets):
        raise ValueError("plan and partition set do not match")
    if plan.strategy is Strategy.BUFFERED:
        return _par_buffered(tensor, plan, parts, factors, rank, workers)
    return _par_atomic(tensor, plan, parts, factors, rank, workers)


def mttkrp(
    tensor: AltoTensor,
    factors: Sequence[np.ndarray],
    mode: int,
    workers: int = 1,
    partitions: int | None = None,
    strategy: Strategy | None = None,
) -> np.ndarray:
    """Partition, plan, flag if needed, and run the parallel kernel."""
    rank = _check_factors(tensor.layout.dims, factors, mode)
    if tensor.nnz == 0:
        return np.zeros((tensor.layout.dims[mode], rank), dtype=np.float64)
    count = min(partitions if partitions is not None else workers, tensor.nnz)
    parts = partition(tensor, max(count, 1))
    plan = plan_conflicts(tensor, parts, mode, force_strategy=strategy)
    if plan.strategy is Strategy.ATOMIC and plan.flag_bit is not None:
        tensor = apply_boundary_flags(tensor, plan)
    return mttkrp_par(tensor, parts, plan, factors, mode, workers)
