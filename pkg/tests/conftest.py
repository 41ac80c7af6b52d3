"""Shared fixtures: small grids, partitions and seeded generators."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.grid import TorusGrid
from src.lpdecomp import build_partition, max_levels
from src.parallel import get_max_workers, set_max_workers


@pytest.fixture
def grid1d():
    return TorusGrid(1, 256)


@pytest.fixture
def part1d(grid1d):
    return build_partition(grid1d, max_levels(grid1d))


@pytest.fixture
def grid2d():
    return TorusGrid(2, 64)


@pytest.fixture
def part2d(grid2d):
    return build_partition(grid2d, max_levels(grid2d))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def restore_workers():
    before = get_max_workers()
    yield
    set_max_workers(before)
