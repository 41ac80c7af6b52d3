"""Tests for the paradifferential splitting against the direct quadrature."""

import itertools

import numpy as np
import pytest

from src.errors import IndexRangeError, UnresolvedInputError
from src.grid import GridFunction
from src.models import SymbolSpec
from src.paradiff import (
    apply,
    direct_apply,
    operator_apply,
    piece_apply,
    relative_l2_error,
    series1,
    series1_pairs,
    series2,
    series2_pairs,
    series3,
    series3_pairs,
    SymbolPiece,
)
from src.probes import random_resolved
from src.symbols import NONLINEARITIES, build_symbol, constant_symbol, nonlinear_symbol, random_real_input


def _flatten(table):
    return [pair for key in sorted(table) for pair in table[key]]


def test_identity_reproduces_input(part1d, rng):
    u = random_resolved(part1d.grid, part1d, rng)
    result = apply(constant_symbol(part1d.grid), u, part1d)
    assert relative_l2_error(result.total, u) <= 1e-10


@pytest.mark.parametrize("name", ["identity", "bessel", "ching", "smooth", "reduced", "cutoff"])
def test_splitting_matches_direct_quadrature(part1d, rng, name):
    a = build_symbol(SymbolSpec(name=name, d=1.0, C=2.0), part1d, seed=21)
    u = random_resolved(part1d.grid, part1d, rng)
    result = apply(a, u, part1d)
    assert relative_l2_error(result.total, direct_apply(a, u, part1d)) <= 1e-8
    assert relative_l2_error(result.total, operator_apply(a, u)) <= 1e-8


def test_terms_sum_to_total(part1d, rng):
    a = build_symbol(SymbolSpec(name="smooth"), part1d, seed=4)
    result = apply(a, random_resolved(part1d.grid, part1d, rng), part1d)
    term_sum = result.term1 + result.term2 + result.term3
    assert relative_l2_error(term_sum, result.total) <= 1e-13
    assert set(result.term_spectra) == {"series1", "series2", "series3"}


def test_series_functions_match_terms(part1d, rng):
    a = build_symbol(SymbolSpec(name="ching", d=1.0), part1d, seed=2)
    u = random_resolved(part1d.grid, part1d, rng)
    result = apply(a, u, part1d, keep_spectra=False)
    for series, term in zip((series1, series2, series3), result.terms):
        assert np.allclose(series(a, u, part1d).values, term.values, rtol=0, atol=1e-12 * np.max(np.abs(result.total.values)))


def test_dense_path_agrees_with_structured(part2d, rng):
    a = build_symbol(SymbolSpec(name="smooth"), part2d, seed=8)
    u = random_resolved(part2d.grid, part2d, rng)
    structured = apply(a, u, part2d, keep_spectra=False).total
    dense = apply(a.without_structure(), u, part2d, keep_spectra=False).total
    assert relative_l2_error(dense, structured) <= 1e-9


def test_symbol_piece_matches_piece_apply(part1d, rng):
    a = build_symbol(SymbolSpec(name="smooth"), part1d, seed=9)
    u = random_resolved(part1d.grid, part1d, rng)
    piece = SymbolPiece(a, 1, 3, part1d)
    assert np.array_equal(piece.apply(u).values, piece_apply(a, 1, 3, u, part1d).values)

    eta = np.arange(part1d.grid.size)
    block = piece.partial_transform(eta)
    assert block.shape == (part1d.grid.size, eta.size)
    assert np.all(block[:, part1d.phi_tilde(3).ravel() == 0] == 0)
    assert np.all(block[part1d.phi(1).ravel() == 0, :] == 0)


def test_series_cover_every_pair_once(part1d):
    pairs = _flatten(series1_pairs(part1d)) + _flatten(series2_pairs(part1d)) + _flatten(series3_pairs(part1d))
    expected = set(itertools.product(range(part1d.x_levels + 1), range(part1d.J_max + 1)))
    assert len(pairs) == len(set(pairs))
    assert set(pairs) == expected


def test_series_index_ranges(part1d):
    assert all(j <= k - 2 for j, k in _flatten(series1_pairs(part1d)))
    assert all(abs(j - k) <= 1 for j, k in _flatten(series2_pairs(part1d)))
    assert all(k <= j - 2 for j, k in _flatten(series3_pairs(part1d)))


def test_linearity(part1d, rng):
    a = build_symbol(SymbolSpec(name="ching", d=0.5), part1d)
    u, v = random_resolved(part1d.grid, part1d, rng), random_resolved(part1d.grid, part1d, rng)
    alpha, beta = 2.0 + 1j, -0.5
    combined = apply(a, alpha * u + beta * v, part1d, keep_spectra=False).total
    separate = alpha * apply(a, u, part1d, keep_spectra=False).total + beta * apply(a, v, part1d, keep_spectra=False).total
    assert relative_l2_error(combined, separate) <= 1e-12


@pytest.mark.parametrize("j,k", [(0, 2), (3, 1), (2, 2)])
def test_tilde_factor_is_redundant(part1d, rng, j, k):
    a = build_symbol(SymbolSpec(name="smooth"), part1d, seed=2)
    u = random_resolved(part1d.grid, part1d, rng)
    with_tilde = piece_apply(a, j, k, u, part1d)
    without = piece_apply(a, j, k, u, part1d, with_tilde=False)
    assert np.allclose(with_tilde.values, without.values, atol=1e-13)


def test_piece_index_range(part1d, rng):
    u = random_resolved(part1d.grid, part1d, rng)
    a = constant_symbol(part1d.grid)
    with pytest.raises(IndexRangeError):
        piece_apply(a, 0, part1d.J_max + 1, u, part1d)
    with pytest.raises(IndexRangeError):
        piece_apply(a, part1d.x_levels + 1, 0, u, part1d)


def test_unresolved_input_rejected(part1d):
    (x,) = part1d.grid.points()
    u = GridFunction(part1d.grid, np.cos(100 * x))
    with pytest.raises(UnresolvedInputError):
        apply(constant_symbol(part1d.grid), u, part1d)


@pytest.mark.parametrize("function", sorted(NONLINEARITIES))
def test_linearisation_identity(part1d, function):
    F, F_prime = NONLINEARITIES[function]
    u = random_real_input(part1d.grid, part1d, seed=17)
    a_u = nonlinear_symbol(F_prime, u, part1d)
    output = apply(a_u, u, part1d, keep_spectra=False).total
    expected = GridFunction(part1d.grid, F(u.values.real) - F(np.zeros(part1d.grid.shape)))
    assert relative_l2_error(output, expected) <= 1e-10


def test_relative_error_of_zero_reference(grid1d):
    zero = GridFunction(grid1d, np.zeros(grid1d.shape))
    one = GridFunction(grid1d, np.ones(grid1d.shape))
    assert relative_l2_error(one, one) == 0.0
    assert relative_l2_error(one, zero) == pytest.approx(np.sqrt(2 * np.pi))
