"""Tests for the Littlewood-Paley partition and block operators."""

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from src.errors import IndexRangeError, UnresolvedInputError
from src.grid import GridFunction, TorusGrid
from src.lpdecomp import (
    CUTOFF_START,
    PLATEAU_END,
    CutoffProfile,
    block,
    build_partition,
    decompose,
    low_pass,
    max_levels,
    partition_rows,
    x_levels_for,
)
from src.probes import random_resolved


def test_profile_plateau_and_cutoff():
    psi = CutoffProfile()
    assert np.all(psi(np.array([0.0, 0.5, 1.0, PLATEAU_END])) == 1.0)
    assert np.all(psi(np.array([CUTOFF_START, 1.5, 10.0])) == 0.0)
    band = psi(np.linspace(1.11, 1.29, 50))
    assert np.all(np.diff(band) < 0)
    assert psi(1.2) == pytest.approx(0.5, abs=1e-12)


def test_profile_derivative_matches_difference_quotient():
    psi = CutoffProfile()
    t = np.linspace(1.12, 1.28, 9)
    step = 1e-6
    numeric = (psi(t + step) - psi(t - step)) / (2 * step)
    assert np.allclose(psi.derivative(t), numeric, rtol=1e-5, atol=1e-8)


def test_max_levels():
    assert max_levels(TorusGrid(1, 256)) == 6
    assert max_levels(TorusGrid(1, 4096)) == 10
    assert max_levels(TorusGrid(2, 64)) == 4


def test_unresolved_level_rejected(grid1d):
    with pytest.raises(IndexRangeError):
        build_partition(grid1d, 7)
    with pytest.raises(IndexRangeError):
        build_partition(grid1d, -1)


def test_x_levels_cover_lattice(grid2d):
    part = build_partition(grid2d, 2)
    assert part.x_levels == x_levels_for(grid2d)
    total = sum(part.phi(j) for j in range(part.x_levels + 1))
    assert np.allclose(total, 1.0, rtol=0, atol=1e-14)


def test_partition_of_unity_exact():
    grid = TorusGrid(1, 4096)
    part = build_partition(grid, 10)
    inner = grid.frequency_norm() <= 2.0 ** 10
    assert np.max(np.abs(part.blocks.sum(axis=0)[inner] - 1.0)) <= 1e-12


@pytest.mark.parametrize("j", [1, 3, 5])
def test_block_support_constants(part1d, j):
    radius = part1d.grid.frequency_norm()
    phi = part1d.phi(j)
    assert np.all(phi[radius < 0.55 * 2 ** j] == 0.0)
    assert np.all(phi[radius > 1.3 * 2 ** j] == 0.0)
    assert part1d.phi(j)[part1d.grid.index_of([2 ** j])] == 1.0


def test_phi_tilde_reproduces_phi(part1d):
    for k in range(part1d.J_max + 1):
        product = part1d.phi_tilde(k) * part1d.phi(k)
        assert np.array_equal(product, part1d.phi(k))


def test_phi_at_matches_lattice_samples(part2d):
    lattice = part2d.grid.lattice_array().astype(float)
    for j in range(part2d.J_max + 1):
        assert np.allclose(part2d.phi_at(j, lattice), part2d.phi(j).ravel(), atol=1e-12)


def test_decompose_single_modes(part1d):
    grid = part1d.grid
    (x,) = grid.points()
    u = GridFunction(grid, np.exp(4j * x) + np.exp(16j * x))
    blocks = decompose(u, part1d)
    assert blocks.nonzero_levels() == [2, 4]
    assert blocks.reconstruction_error() <= 1e-12


def test_decompose_constant_one_block(part1d):
    blocks = decompose(GridFunction(part1d.grid, np.ones(part1d.grid.shape)), part1d)
    assert blocks.nonzero_levels() == [0]


def test_unresolved_input_raises(part1d):
    grid = part1d.grid
    (x,) = grid.points()
    with pytest.raises(UnresolvedInputError):
        decompose(GridFunction(grid, np.cos(100 * x)), part1d)


@hsettings(max_examples=15, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_reconstruction_property(seed):
    grid = TorusGrid(1, 128)
    part = build_partition(grid, max_levels(grid))
    u = random_resolved(grid, part, np.random.default_rng(seed))
    assert decompose(u, part).reconstruction_error() <= 1e-10


def test_block_and_low_pass_telescoping(part1d, rng):
    u = random_resolved(part1d.grid, part1d, rng)
    j = 3
    difference = low_pass(u, j, part1d) - low_pass(u, j - 1, part1d)
    assert np.allclose(difference.values, block(u, j, part1d).values, atol=1e-12)
    with pytest.raises(IndexRangeError):
        block(u, part1d.J_max + 1, part1d)


def test_partition_rows_sorted(part1d):
    rows = partition_rows(part1d)
    assert len(rows) == part1d.grid.size
    assert [r["xi"] for r in rows] == sorted(r["xi"] for r in rows)
    assert set(rows[0]) == {"xi"} | {f"phi_{j}" for j in range(part1d.J_max + 1)}
