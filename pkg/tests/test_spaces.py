"""Tests for Besov/Triebel-Lizorkin norms and maximal functions."""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from pydantic import ValidationError

from src.errors import InvalidSpecError, UnresolvedInputError
from src.grid import GridFunction, TorusGrid
from src.lpdecomp import CutoffProfile, build_partition, max_levels
from src.models import NormKind, NormSpec
from src.probes import random_band_limited, random_resolved
from src.spaces import (
    b_norm,
    block_norm_table,
    f_norm,
    fefferman_stein_constant,
    hom_besov_norm_in_xi,
    maximal,
    maximal_all_radii,
    nikolskii_constant,
    nikolskii_ratio,
    norm,
    vector_maximal_ratio,
)

TL = NormKind.TRIEBEL_LIZORKIN


def test_single_mode_norm(part1d):
    (x,) = part1d.grid.points()
    f = GridFunction(part1d.grid, np.exp(8j * x))
    spec = NormSpec(kind=TL, s=1.0, p=2.0, q=1.0)
    assert f_norm(f, spec, part1d) == pytest.approx(8 * math.sqrt(2 * math.pi), rel=1e-12)
    besov = NormSpec(kind=NormKind.BESOV, s=1.0, p=2.0, q=math.inf)
    assert b_norm(f, besov, part1d) == pytest.approx(8 * math.sqrt(2 * math.pi), rel=1e-12)


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0])
def test_besov_equals_triebel_lizorkin_when_p_equals_q(part1d, rng, p):
    f = random_resolved(part1d.grid, part1d, rng)
    F = norm(f, NormSpec(kind=TL, s=0.5, p=p, q=p), part1d)
    B = norm(f, NormSpec(kind=NormKind.BESOV, s=0.5, p=p, q=p), part1d)
    assert F == pytest.approx(B, rel=1e-10)


def test_lebesgue_and_homogeneous_dispatch(part1d, rng):
    f = random_resolved(part1d.grid, part1d, rng)
    assert norm(f, NormSpec(kind=NormKind.LEBESGUE, p=2.0), part1d) == pytest.approx(1.0)
    with pytest.raises(InvalidSpecError):
        norm(f, NormSpec(kind=NormKind.HOMOGENEOUS_BESOV, s=1.0, p=1.0, q=1.0), part1d)
    with pytest.raises(InvalidSpecError):
        f_norm(f, NormSpec(kind=NormKind.BESOV, p=1.0), part1d)


def test_norm_spec_validation():
    with pytest.raises(ValidationError):
        NormSpec(kind=TL, p=math.inf, q=1.0)
    with pytest.raises(ValidationError):
        NormSpec(kind=NormKind.BESOV, p=0.0, q=1.0)
    spec = NormSpec(kind=TL, s=0.0, p=0.5, q=2.0)
    assert spec.is_quasi
    assert spec.shifted(1.5).s == 1.5
    assert spec.label() == "F^0_0.5,2"


@hsettings(max_examples=20, deadline=None)
@given(scale=st.floats(min_value=1e-3, max_value=1e3), seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_norms_are_homogeneous(scale, seed):
    grid = TorusGrid(1, 128)
    part = build_partition(grid, max_levels(grid))
    f = random_resolved(grid, part, np.random.default_rng(seed))
    spec = NormSpec(kind=TL, s=1.0, p=1.0, q=2.0)
    assert norm(scale * f, spec, part) == pytest.approx(scale * norm(f, spec, part), rel=1e-10)


def test_block_norm_table_matches_besov(part1d, rng):
    f = random_resolved(part1d.grid, part1d, rng)
    spec = NormSpec(kind=NormKind.BESOV, s=0.5, p=2.0, q=1.0)
    assert sum(block_norm_table(f, spec, part1d)) == pytest.approx(b_norm(f, spec, part1d), rel=1e-12)


def test_maximal_of_constant(grid1d):
    f = GridFunction(grid1d, 3.0 * np.ones(grid1d.shape))
    assert np.allclose(maximal(f, 0.5).values, 3.0)
    with pytest.raises(ValueError):
        maximal(f, 1.5)


@pytest.mark.parametrize("t", [0.5, 1.0])
def test_dyadic_maximal_brackets_all_radii(t):
    grid = TorusGrid(1, 64)
    f = random_band_limited(grid, 6.0, np.random.default_rng(7))
    dyadic = maximal(f, t).values.real
    full = maximal_all_radii(f, t).values.real
    assert np.all(dyadic >= np.abs(f.values) - 1e-12)
    assert np.all(full >= dyadic * (1 - 1e-10))
    assert np.all(full <= 3.0 ** (1.0 / t) * dyadic * (1 + 1e-10))


def test_nikolskii_ratio_requires_band_limit(grid1d, rng):
    f = random_band_limited(grid1d, 8.0, rng)
    assert 0 < nikolskii_ratio(f, 8.0, 0.5) < math.inf
    with pytest.raises(UnresolvedInputError):
        nikolskii_ratio(f, 4.0, 0.5)


@pytest.mark.parametrize("t", [0.5, 0.75, 1.0])
def test_homogeneous_besov_dyadic_scaling(t):
    M, h = 1024, 1.0 / 64
    freqs = np.fft.fftfreq(M, d=1.0 / M) * h
    row = CutoffProfile()(np.abs(freqs)) ** 2
    s = 1.0 / t
    base = hom_besov_norm_in_xi(row, s, 1.0, t, h)
    for k in (1, 2, 3):
        scaled = hom_besov_norm_in_xi(row, s, 1.0, t, h / 2 ** k)
        assert scaled == pytest.approx(2.0 ** (k * (s - 1.0)) * base, rel=1e-9)


@hsettings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**31 - 1),
    s=st.floats(min_value=-1.0, max_value=2.0),
    p=st.sampled_from([0.5, 1.0, 2.0, 4.0]),
)
def test_f_norm_decreases_in_q(seed, s, p):
    grid = TorusGrid(1, 128)
    part = build_partition(grid, max_levels(grid))
    f = random_resolved(grid, part, np.random.default_rng(seed))
    values = [f_norm(f, NormSpec(kind=TL, s=s, p=p, q=q), part) for q in (1.0, 2.0, math.inf)]
    assert values[0] >= values[1] * (1 - 1e-12)
    assert values[1] >= values[2] * (1 - 1e-12)


def test_homogeneous_norm_is_stable_under_refinement():
    profile = CutoffProfile()
    box = 4096.0
    norms = []
    for h in (1.0, 0.5):
        M = int(box / h)
        xi = np.abs(np.fft.fftfreq(M, d=1.0 / M) * h)
        # Phi_8 + Phi_9 + Phi_10
        row = profile(xi / 1024) - profile(xi / 128)
        norms.append(hom_besov_norm_in_xi(row, 0.5, 2.0, 2.0, h))
    assert 0 < norms[0] < math.inf
    assert norms[1] == pytest.approx(norms[0], rel=1e-4)


@pytest.mark.parametrize("t", [0.5, 1.0])
def test_maximal_of_spike_decays_like_ball_volume(t):
    grid = TorusGrid(1, 64)
    values = np.zeros(grid.shape)
    values[10] = 1.0
    spike = GridFunction(grid, values)
    full = maximal_all_radii(spike, t).values.real
    dyadic = maximal(spike, t).values.real
    for r in range(1, 32):
        expected = (1.0 / (2 * r + 1)) ** (1.0 / t)
        for index in ((10 + r) % 64, (10 - r) % 64):
            assert full[index] == pytest.approx(expected, rel=1e-12)
            assert expected / 3.0 ** (1.0 / t) * (1 - 1e-10) <= dyadic[index] <= expected * (1 + 1e-10)
    assert dyadic[10] == pytest.approx(1.0)


def test_empirical_constants(grid1d, rng):
    families = [[random_band_limited(grid1d, 8.0, rng) for _ in range(3)] for _ in range(4)]
    ratios = [vector_maximal_ratio(fam, 2.0, 2.0, 0.5) for fam in families]
    assert fefferman_stein_constant(families, 2.0, 2.0, 0.5) == pytest.approx(max(ratios))
    assert min(ratios) >= 1.0 - 1e-12
    maxima = [maximal(f, 0.5).values for f in families[0]]
    assert vector_maximal_ratio(families[0], 2.0, 2.0, 0.5, maxima) == ratios[0]

    functions = [random_band_limited(grid1d, 8.0, rng) for _ in range(5)]
    assert nikolskii_constant(functions, 8.0, 0.5) == pytest.approx(
        max(nikolskii_ratio(f, 8.0, 0.5) for f in functions))
