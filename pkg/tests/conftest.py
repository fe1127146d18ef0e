"""Shared fixtures: the six-element worked example and helpers."""

import numpy as np
import pytest

import altotensor as at

# 4 x 8 x 2 tensor whose two balanced partitions span linear positions
# [2-20] and [25-51] with mode intervals {[0-3],[0-3],[0-1]} and
# {[1-3],[2-6],[0-1]}.  Linear positions: 2, 11, 20, 25, 26, 51.
EXAMPLE_DIMS = (4, 8, 2)
EXAMPLE_ENTRIES = [
    ((1, 0, 0), 1.0),
    ((3, 0, 1), 2.0),
    ((0, 3, 0), 3.0),
    ((2, 2, 1), 4.0),
    ((3, 2, 0), 5.0),
    ((1, 6, 1), 6.0),
]
EXAMPLE_LINEAR = [2, 11, 20, 25, 26, 51]


@pytest.fixture
def example_coo() -> at.CooTensor:
    coords = np.array([c for c, _ in EXAMPLE_ENTRIES])
    values = np.array([v for _, v in EXAMPLE_ENTRIES])
    return at.CooTensor(EXAMPLE_DIMS, coords, values)


@pytest.fixture
def example_alto(example_coo) -> at.AltoTensor:
    return at.build_alto(example_coo)


def rel_error(out: np.ndarray, ref: np.ndarray) -> float:
    denom = float(np.linalg.norm(ref))
    diff = float(np.linalg.norm(out - ref))
    return diff / denom if denom else diff
