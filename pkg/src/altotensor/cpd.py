"""CP decomposition by alternating least squares.

Each sweep updates every factor matrix in turn from the normal equations
F_n * V = MTTKRP_n(X), where V is the Hadamard product of the other
factors' Gram matrices.  Columns are renormalized after each update and
the norms collected in a weight vector.  The fit is evaluated without
forming the dense tensor, using

    ||X - X~||^2 = ||X||^2 - 2 <X, X~> + ||X~||^2,
    <X, X~>  = sum_r w_r * <mttkrp_col_r, factor_col_r>,
    ||X~||^2 = w^T (hadamard of all Grams) w,

which holds with the MTTKRP and Gram of any one mode's current factor.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .coo import CooTensor
from .format import (
    AltoTensor,
    Strategy,
    apply_boundary_flags,
    partition,
    plan_conflicts,
)
from .layout import delinearize_array
from .mttkrp import mttkrp_oracle, mttkrp_par, mttkrp_seq

BACKENDS = ("seq", "oracle", "auto", "buffered", "atomic")


@dataclass
class CpModel:
    """Rank-R CP model: weights w and unit-column factor matrices."""

    factors: list[np.ndarray]
    weights: np.ndarray
    fit_history: list[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def rank(self) -> int:
        return int(self.weights.shape[0])

    def to_dense(self) -> np.ndarray:
        """Reconstruct the dense tensor (small shapes only)."""
        dims = tuple(f.shape[0] for f in self.factors)
        out = np.zeros(dims)
        for r in range(self.rank):
            term = self.weights[r]
            for n, f in enumerate(self.factors):
                shape = [1] * len(dims)
                shape[n] = dims[n]
                term = term * f[:, r].reshape(shape)
            out += term
        return out


def gram(factor: np.ndarray) -> np.ndarray:
    """Gram matrix F^T F of one factor."""
    return factor.T @ factor


def _hadamard_grams(factors: Sequence[np.ndarray], skip: int | None) -> np.ndarray:
    rank = factors[0].shape[1]
    v = np.ones((rank, rank), dtype=np.float64)
    for n, f in enumerate(factors):
        if n != skip:
            v *= gram(f)
    return v


def _solve_gram(v: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve out @ v = rhs for out, retrying once with a ridge term."""
    try:
        c = scipy.linalg.cho_factor(v)
        return scipy.linalg.cho_solve(c, rhs.T).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        pass
    rank = v.shape[0]
    ridge = 1e-12 * np.trace(v) / rank
    try:
        c = scipy.linalg.cho_factor(v + ridge * np.eye(rank))
        return scipy.linalg.cho_solve(c, rhs.T).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise np.linalg.LinAlgError(
            f"normal equations singular even with ridge {ridge:g}: {exc}"
        ) from None


def als_update(
    tensor: AltoTensor,
    model: CpModel,
    mode: int,
    mttkrp_fn: Callable[[Sequence[np.ndarray], int], np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One least-squares update of the model's factor `mode`.

    Solves new_factor @ V = MTTKRP for V the Hadamard product of the other
    factors' Grams, then normalizes columns.  Returns the unit-column
    factor, the column-norm weights, and the MTTKRP matrix (callers reuse
    it for the fit); `model` itself is not mutated.  `mttkrp_fn` defaults
    to the sequential kernel on `tensor`.
    """
    if mttkrp_fn is None:
        m = mttkrp_seq(tensor, model.factors, mode)
    else:
        m = mttkrp_fn(model.factors, mode)
    v = _hadamard_grams(model.factors, skip=mode)
    new = _solve_gram(v, m)
    weights = np.linalg.norm(new, axis=0)
    safe = np.where(weights == 0.0, 1.0, weights)
    new = new / safe
    return new, weights, m


def fit_from_parts(
    tensor_norm_sq: float,
    factors: Sequence[np.ndarray],
    weights: np.ndarray,
    last_mttkrp: np.ndarray,
    last_mode: int,
) -> float:
    """Fit 1 - ||X - X~|| / ||X|| from one mode's MTTKRP, no dense pass."""
    if tensor_norm_sq == 0.0:
        return 1.0
    v_all = _hadamard_grams(factors, skip=None)
    model_norm_sq = float(weights @ v_all @ weights)
    inner = float(np.sum(last_mttkrp * factors[last_mode] * weights[None, :]))
    resid_sq = max(tensor_norm_sq - 2.0 * inner + model_norm_sq, 0.0)
    return 1.0 - np.sqrt(resid_sq) / np.sqrt(tensor_norm_sq)


def fit(
    tensor: AltoTensor, model: CpModel, last_mttkrp: np.ndarray, last_mode: int
) -> float:
    """Fit of `model` against `tensor`, reusing the last MTTKRP result."""
    norm_sq = float(np.dot(tensor.values, tensor.values))
    return fit_from_parts(norm_sq, model.factors, model.weights, last_mttkrp, last_mode)


def _make_backend(
    tensor: AltoTensor, backend: str, workers: int, partitions: int | None
) -> Callable[[Sequence[np.ndarray], int], np.ndarray]:
    """Bind an MTTKRP implementation to `tensor`, precomputing per-mode plans."""
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
    if backend == "seq":
        return lambda factors, mode: mttkrp_seq(tensor, factors, mode)
    if backend == "oracle":
        coords = delinearize_array(tensor.layout, tensor.indices)
        coo = CooTensor(tensor.layout.dims, coords, tensor.values)
        return lambda factors, mode: mttkrp_oracle(coo, factors, mode)
    force = {
        "auto": None,
        "buffered": Strategy.BUFFERED,
        "atomic": Strategy.ATOMIC,
    }[backend]
    count = max(min(partitions if partitions is not None else workers, tensor.nnz), 1)
    parts = partition(tensor, count)
    plans = []
    variants = []
    for mode in range(tensor.layout.order):
        plan = plan_conflicts(tensor, parts, mode, force_strategy=force)
        flagged = tensor
        if plan.strategy is Strategy.ATOMIC and plan.flag_bit is not None:
            flagged = apply_boundary_flags(tensor, plan)
        plans.append(plan)
        variants.append(flagged)

    def run(factors: Sequence[np.ndarray], mode: int) -> np.ndarray:
        return mttkrp_par(variants[mode], parts, plans[mode], factors, mode, workers)

    return run


def cpd_als(
    tensor: AltoTensor,
    rank: int,
    max_iters: int = 50,
    tol: float = 1e-5,
    seed: int = 0,
    backend: str = "seq",
    workers: int = 1,
    partitions: int | None = None,
) -> CpModel:
    """Fit a rank-`rank` CP model to `tensor` by ALS.

    Factors start uniform on [0, 1) from `seed`.  After every sweep the
    fit is appended to `fit_history` (entry 0 is the initial guess); the
    loop stops when the fit improves by less than `tol` or after
    `max_iters` sweeps.  Set `tol=0` to always run `max_iters` sweeps.
    """
    if rank < 1:
        raise ValueError("rank must be at least 1")
    if max_iters < 0:
        raise ValueError("max_iters must be nonnegative")
    dims = tensor.layout.dims
    rng = np.random.default_rng(seed)
    model = CpModel(
        factors=[rng.random((d, rank)) for d in dims],
        weights=np.ones(rank, dtype=np.float64),
    )
    norm_sq = float(np.dot(tensor.values, tensor.values))
    run = _make_backend(tensor, backend, workers, partitions)
    history = [
        fit_from_parts(norm_sq, model.factors, model.weights, run(model.factors, 0), 0)
    ]
    for _ in range(max_iters):
        for mode in range(len(dims)):
            model.factors[mode], model.weights, last_m = als_update(
                tensor, model, mode, run
            )
        history.append(
            fit_from_parts(norm_sq, model.factors, model.weights, last_m, len(dims) - 1)
        )
        model.iterations += 1
        if abs(history[-1] - history[-2]) < tol:
            break
    model.fit_history = history
    return model


def save_factors_csv(model: CpModel, out_dir: str, prefix: str = "factor") -> list[str]:
    """Write each factor as `<prefix>_<mode>.csv` (row per index, comma-separated).

    Returns the written paths.  Mode numbering in file names is one-based.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for n, f in enumerate(model.factors, start=1):
        path = os.path.join(out_dir, f"{prefix}_{n}.csv")
        np.savetxt(path, f, delimiter=",")
        paths.append(path)
    return paths
