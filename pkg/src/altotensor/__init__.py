"""Sparse tensor kernels over an adaptive linearized index format.

Coordinates are compressed into single bit-interleaved words, stored
sorted, split into balanced contiguous partitions, and consumed by
MTTKRP kernels whose output synchronization adapts to the mode being
computed.  A CP-ALS driver and a coordinate-list oracle sit on top.
"""

from .container import ContainerError, deserialize, read_alto, serialize, write_alto
from .coo import (
    CooTensor,
    ReuseClass,
    ReuseReport,
    TnsParseError,
    fiber_reuse,
    parse_tns,
    random_tensor,
    reuse_report,
    write_tns,
)
from .cpd import CpModel, als_update, cpd_als, gram, save_factors_csv
from .format import (
    AltoTensor,
    ConflictPlan,
    PartitionSet,
    Strategy,
    apply_boundary_flags,
    build_alto,
    clear_flags,
    partition,
    plan_conflicts,
    read_flags,
)
from .layout import (
    AltoLayout,
    StorageStats,
    WidthOverflowError,
    build_masks,
    delinearize,
    delinearize_array,
    linearize,
    linearize_array,
    storage_stats,
)
from .mttkrp import mttkrp, mttkrp_oracle, mttkrp_par, mttkrp_seq

__version__ = "0.1.0"

__all__ = [
    "AltoLayout",
    "AltoTensor",
    "ConflictPlan",
    "ContainerError",
    "CooTensor",
    "CpModel",
    "PartitionSet",
    "ReuseClass",
    "ReuseReport",
    "StorageStats",
    "Strategy",
    "TnsParseError",
    "WidthOverflowError",
    "als_update",
    "apply_boundary_flags",
    "build_alto",
    "build_masks",
    "clear_flags",
    "cpd_als",
    "delinearize",
    "delinearize_array",
    "deserialize",
    "fiber_reuse",
    "gram",
    "linearize",
    "linearize_array",
    "mttkrp",
    "mttkrp_oracle",
    "mttkrp_par",
    "mttkrp_seq",
    "partition",
    "parse_tns",
    "plan_conflicts",
    "random_tensor",
    "read_alto",
    "read_flags",
    "reuse_report",
    "save_factors_csv",
    "serialize",
    "storage_stats",
    "write_alto",
    "write_tns",
]
