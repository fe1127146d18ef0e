"""Command-line interface.

Subcommands: `convert` between text and binary tensors, `stats` for
layout and storage reports, `mttkrp` for kernel benchmarking, `cpd` for
decomposition, and `check` for verifying kernels against the coordinate
oracle.  All results go to stdout as JSON; diagnostics go to stderr.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 input
format or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .container import MAGIC, ContainerError, read_alto, write_alto
from .coo import TnsParseError, parse_tns, reuse_report, write_tns
from .cpd import BACKENDS, cpd_als, save_factors_csv
from .format import (
    AltoTensor,
    Strategy,
    apply_boundary_flags,
    partition,
    plan_conflicts,
)
from .layout import WidthOverflowError, storage_stats
from .mttkrp import mttkrp_oracle, mttkrp_par, mttkrp_seq

CHECK_TOLERANCE = 1e-10
WORKERS_ENV = "ALTOTENSOR_WORKERS"


@dataclass
class BenchReport:
    """Timing record of one kernel benchmark run."""

    command: str
    input: str
    dims: list[int]
    nnz: int
    mode: int
    rank: int
    strategy: str
    workers: int
    partitions: int
    warmup: int
    iters: int
    times_s: list[float]
    mean_s: float
    min_s: float
    throughput_per_s: float
    check: dict | None = field(default=None)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _resolve_workers(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{WORKERS_ENV} must be positive, got {value}")
        return value
    return os.cpu_count() or 1


def _load(path: str) -> AltoTensor:
    """Load a tensor file, sniffing binary containers by magic bytes."""
    from .format import build_alto

    with open(path, "rb") as f:
        head = f.read(len(MAGIC))
    if head == MAGIC:
        return read_alto(path)
    with open(path, "r", encoding="utf-8") as f:
        return build_alto(parse_tns(f))


def _layout_summary(tensor: AltoTensor) -> dict:
    layout = tensor.layout
    return {
        "dims": list(layout.dims),
        "order": layout.order,
        "nnz": tensor.nnz,
        "bits": list(layout.bits),
        "total_bits": layout.total_bits,
        "width": layout.width,
        "masks": [f"{m:#x}" for m in layout.masks],
    }


def _random_factors(dims, rank: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.random((d, rank)) for d in dims]


def _rel_error(out: np.ndarray, ref: np.ndarray) -> float:
    denom = float(np.linalg.norm(ref))
    diff = float(np.linalg.norm(out - ref))
    return diff / denom if denom else diff


def _prepare(tensor: AltoTensor, mode0: int, count: int, strategy: str):
    """Partition, plan, and flag for one parallel run."""
    count = max(min(count, tensor.nnz), 1)
    parts = partition(tensor, count)
    force = None if strategy == "auto" else Strategy(strategy)
    plan = plan_conflicts(tensor, parts, mode0, force_strategy=force)
    run_tensor = tensor
    if plan.strategy is Strategy.ATOMIC and plan.flag_bit is not None:
        run_tensor = apply_boundary_flags(tensor, plan)
    return run_tensor, parts, plan


def cmd_convert(args: argparse.Namespace) -> int:
    with open(args.input, "rb") as f:
        is_container = f.read(len(MAGIC)) == MAGIC
    t0 = time.perf_counter()
    if is_container:
        tensor = read_alto(args.input)
        with open(args.output, "w", encoding="utf-8") as f:
            write_tns(tensor.to_coo(), f)
        direction = "binary-to-text"
    else:
        tensor = _load(args.input)
        write_alto(tensor, args.output)
        direction = "text-to-binary"
    elapsed = time.perf_counter() - t0
    summary = _layout_summary(tensor)
    summary.update(
        {
            "input": args.input,
            "output": args.output,
            "direction": direction,
            "generation_time_s": elapsed,
        }
    )
    print(json.dumps(summary, indent=2))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    tensor = _load(args.input)
    layout = tensor.layout
    stats = storage_stats(layout.dims, tensor.nnz, word_bits=args.word_bits)
    reuse = reuse_report(tensor.nnz, layout.dims)
    report = _layout_summary(tensor)
    report["input"] = args.input
    report["density"] = tensor.nnz / float(np.prod(np.asarray(layout.dims, float)))
    report["storage_bits"] = {
        "word_bits": stats.word_bits,
        "coo": stats.s_coo,
        "linearized": stats.s_alto,
        "linearized_native": stats.s_alto_native,
        "cubic_curve": stats.s_sfc,
        "coo_over_linearized": stats.coo_over_alto,
    }
    report["reuse"] = {
        "per_mode": list(reuse.reuse),
        "classes": [c.value for c in reuse.classes],
        "overall": reuse.overall.value,
    }
    print(json.dumps(report, indent=2))
    return 0


def cmd_mttkrp(args: argparse.Namespace) -> int:
    tensor = _load(args.input)
    order = tensor.layout.order
    if not 1 <= args.mode <= order:
        print(f"error: --mode must be in 1..{order}", file=sys.stderr)
        return 2
    if args.iters < 1 or args.warmup < 0 or args.rank < 1:
        print(
            "error: need --iters >= 1, --warmup >= 0, --rank >= 1", file=sys.stderr
        )
        return 2
    mode0 = args.mode - 1
    workers = _resolve_workers(args.workers)
    count = args.partitions if args.partitions is not None else workers
    run_tensor, parts, plan = _prepare(tensor, mode0, count, args.strategy)
    factors = _random_factors(tensor.layout.dims, args.rank, args.seed)
    out = None
    times = []
    for i in range(args.warmup + args.iters):
        t0 = time.perf_counter()
        out = mttkrp_par(run_tensor, parts, plan, factors, mode0, workers)
        t1 = time.perf_counter()
        if i >= args.warmup:
            times.append(t1 - t0)
    mean_s = float(np.mean(times))
    check = None
    rc = 0
    if args.check:
        reference = mttkrp_oracle(tensor.to_coo(), factors, mode0)
        err = _rel_error(out, reference)
        check = {
            "max_rel_error": err,
            "tolerance": CHECK_TOLERANCE,
            "pass": err <= CHECK_TOLERANCE,
        }
        if not check["pass"]:
            rc = 1
    report = BenchReport(
        command="mttkrp",
        input=args.input,
        dims=list(tensor.layout.dims),
        nnz=tensor.nnz,
        mode=args.mode,
        rank=args.rank,
        strategy=plan.strategy.value,
        workers=workers,
        partitions=parts.count,
        warmup=args.warmup,
        iters=args.iters,
        times_s=times,
        mean_s=mean_s,
        min_s=float(np.min(times)),
        throughput_per_s=tensor.nnz * args.rank / mean_s if mean_s else 0.0,
        check=check,
    )
    print(report.to_json())
    return rc


def cmd_cpd(args: argparse.Namespace) -> int:
    tensor = _load(args.input)
    workers = _resolve_workers(args.workers)
    t0 = time.perf_counter()
    model = cpd_als(
        tensor,
        rank=args.rank,
        max_iters=args.max_iters,
        tol=args.tol,
        seed=args.seed,
        backend=args.backend,
        workers=workers,
        partitions=args.partitions,
    )
    elapsed = time.perf_counter() - t0
    report = {
        "command": "cpd",
        "input": args.input,
        "dims": list(tensor.layout.dims),
        "nnz": tensor.nnz,
        "rank": args.rank,
        "backend": args.backend,
        "workers": workers,
        "iterations": model.iterations,
        "fit": model.fit_history[-1],
        "fit_history": model.fit_history,
        "weights": [float(w) for w in model.weights],
        "time_s": elapsed,
    }
    if args.out_dir:
        report["factor_files"] = save_factors_csv(model, args.out_dir)
    print(json.dumps(report, indent=2))
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    tensor = _load(args.input)
    order = tensor.layout.order
    if not 1 <= args.mode <= order:
        print(f"error: --mode must be in 1..{order}", file=sys.stderr)
        return 2
    mode0 = args.mode - 1
    workers = _resolve_workers(args.workers)
    count = args.partitions if args.partitions is not None else workers
    factors = _random_factors(tensor.layout.dims, args.rank, args.seed)
    reference = mttkrp_oracle(tensor.to_coo(), factors, mode0)
    errors = {"seq": _rel_error(mttkrp_seq(tensor, factors, mode0), reference)}
    for strategy in ("atomic", "buffered"):
        run_tensor, parts, plan = _prepare(tensor, mode0, count, strategy)
        out = mttkrp_par(run_tensor, parts, plan, factors, mode0, workers)
        errors[strategy] = _rel_error(out, reference)
    worst = max(errors.values())
    report = {
        "command": "check",
        "input": args.input,
        "mode": args.mode,
        "rank": args.rank,
        "workers": workers,
        "partitions": max(min(count, tensor.nnz), 1),
        "errors": errors,
        "max_rel_error": worst,
        "tolerance": CHECK_TOLERANCE,
        "pass": worst <= CHECK_TOLERANCE,
    }
    print(json.dumps(report, indent=2))
    return 0 if report["pass"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alto",
        description="Linearized sparse tensor kernels and decomposition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "convert",
        help="convert text tensors to the binary container (or back)",
        description=(
            "Text input is encoded, sorted, and written as a binary"
            " container; binary input is decoded back to text."
        ),
    )
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(handler=cmd_convert)

    p = sub.add_parser("stats", help="layout, storage, and reuse report")
    p.add_argument("input")
    p.add_argument(
        "--word-bits",
        type=int,
        default=8,
        choices=(8, 16, 32, 64),
        help="storage word granularity for size accounting",
    )
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("mttkrp", help="benchmark the parallel MTTKRP kernel")
    p.add_argument("input")
    p.add_argument("--mode", type=int, required=True, help="tensor mode, one-based")
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--iters", type=int, default=10, help="timed iterations")
    p.add_argument("--warmup", type=int, default=1, help="untimed iterations")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument(
        "--partitions", type=int, default=None, help="defaults to worker count"
    )
    p.add_argument(
        "--strategy",
        choices=("auto", "atomic", "buffered"),
        default="auto",
    )
    p.add_argument("--seed", type=int, default=0, help="factor initialization seed")
    p.add_argument(
        "--check",
        action="store_true",
        help="verify against the coordinate oracle; nonzero exit on mismatch",
    )
    p.set_defaults(handler=cmd_mttkrp)

    p = sub.add_parser("cpd", help="CP decomposition by alternating least squares")
    p.add_argument("input")
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=BACKENDS, default="auto")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--partitions", type=int, default=None)
    p.add_argument("--out-dir", default=None, help="write factor matrices as CSV here")
    p.set_defaults(handler=cmd_cpd)

    p = sub.add_parser(
        "check", help="verify kernels against the coordinate oracle"
    )
    p.add_argument("input")
    p.add_argument("--mode", type=int, required=True, help="tensor mode, one-based")
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--partitions", type=int, default=None)
    p.set_defaults(handler=cmd_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (
        TnsParseError,
        ContainerError,
        WidthOverflowError,
        UnicodeDecodeError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
