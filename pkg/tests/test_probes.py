"""Tests for the theta_N family, the boundedness probe and the Marschall ratio."""

import math
from fractions import Fraction

import numpy as np
import pytest

from src.errors import GridMismatchError, InadmissibleFamilyError, IndexRangeError, UnresolvedInputError
from src.grid import GridFunction, TorusGrid, dft, inner
from src.lpdecomp import build_partition, max_levels
from src.models import NormKind, NormSpec, SymbolSpec
from src.probes import (
    boundedness_probe,
    boundedness_target,
    build_theta_family,
    check_family,
    closed_form_norm,
    counterexample_run,
    exact_growth_table,
    growth_reference,
    harmonic_sum,
    marschall_ensemble,
    marschall_probe,
    marschall_ratios,
    power_sum,
    random_resolved,
)
from src.symbols import build_symbol, ching_symbol, constant_symbol

TL = NormKind.TRIEBEL_LIZORKIN


@pytest.fixture
def part128():
    grid = TorusGrid(1, 128)
    return build_partition(grid, max_levels(grid))


def test_exact_sums():
    assert harmonic_sum(2) == Fraction(13, 12)
    assert harmonic_sum(1) == 1
    assert power_sum(2, 2) == Fraction(61, 144)
    assert power_sum(3, math.inf) == Fraction(1, 3)
    assert power_sum(2, 1.5) == pytest.approx(2 ** -1.5 + 3 ** -1.5 + 4 ** -1.5)


def test_growth_references():
    assert growth_reference(4, 1.0) == pytest.approx(1.0)
    assert growth_reference(2, 2.0) == pytest.approx((13 / 12) / math.sqrt(61 / 144))
    assert closed_form_norm(2.0, 2, math.inf) == pytest.approx(1.0)
    rows = exact_growth_table([2, 3, 4], [1.0, 2.0])
    ratios = [row["ratio_q=2"] for row in rows]
    assert ratios == sorted(ratios)
    assert all(row["ratio_q=1"] == pytest.approx(1.0) for row in rows)


def test_family_admissibility(part1d):
    with pytest.raises(InadmissibleFamilyError):
        check_family([], 0, part1d)
    with pytest.raises(InadmissibleFamilyError):
        check_family([0], 0, part1d)
    with pytest.raises(InadmissibleFamilyError):
        check_family([3], 0, part1d)
    with pytest.raises(InadmissibleFamilyError):
        check_family([2], 1, part1d)
    check_family([1, 2], 0, part1d)


def test_theta_members_sit_at_dyadic_modes(part1d):
    d = 0.5
    family = build_theta_family(d, [2], 0, part1d)
    spectrum = dft(family.members[2])
    for j in range(2, 5):
        assert spectrum.at([2 ** j]) == pytest.approx(2 * math.pi * 2.0 ** (-j * d) / j)
    assert np.sum(np.abs(spectrum.coeffs) > 1e-12) == 3
    assert inner(family.theta, family.pairing_function()) == pytest.approx(1.0)


@pytest.mark.parametrize("d", [0.0, 1.0])
def test_counterexample_run(part128, d):
    report = counterexample_run(d, [1, 2], [1.0, 2.0], part128)
    assert report.passed, report.first_failure
    identity = {row["N"]: row["pairing"] for row in report.tables["identity"]}
    assert identity[2] == pytest.approx(13 / 12, rel=1e-9)
    names = {c.name for c in report.checks}
    assert "flat[t=1,q=1]" in names and "increasing[t=2,q=2]" in names


def test_boundedness_targets():
    assert boundedness_target(NormSpec(kind=TL, s=0.0, p=2.0, q=1.0), 1).kind == NormKind.LEBESGUE
    low_q = NormSpec(kind=TL, s=1.0, p=2.0, q=0.4)
    assert boundedness_target(low_q, 1).q == pytest.approx(0.75)
    assert boundedness_target(low_q, 1, twisted=True).q == pytest.approx(0.4)
    assert boundedness_target(NormSpec(kind=TL, s=1.0, p=2.0, q=1.0), 1).q == 1.0
    besov = NormSpec(kind=NormKind.BESOV, s=1.0, p=1.0, q=2.0)
    assert boundedness_target(besov, 2) == besov


def test_identity_is_bounded(part1d, rng):
    spec = NormSpec(kind=NormKind.BESOV, s=1.0, p=2.0, q=2.0)
    inputs = [random_resolved(part1d.grid, part1d, rng) for _ in range(3)]
    report = boundedness_probe(constant_symbol(part1d.grid), spec, 0.0, inputs, part1d)
    assert report.diagnosis == "bounded"
    assert report.ratios == pytest.approx([1.0, 1.0, 1.0])


def test_ching_grows_on_theta_family(part128):
    family = build_theta_family(0.0, [1, 2], 0, part128)
    spec = NormSpec(kind=TL, s=0.0, p=2.0, q=2.0)
    inputs = [family.members[N] for N in family.N_range]
    report = boundedness_probe(ching_symbol(0.0, part128), spec, 0.0, inputs, part128)
    assert report.diagnosis == "growing"
    assert report.growth_rate > 1.5


def test_images_are_measured_one_level_up(grid1d, rng):
    part = build_partition(grid1d, max_levels(grid1d) - 1)
    finer = build_partition(grid1d, max_levels(grid1d))
    a = build_symbol(SymbolSpec(name="cutoff"), part, seed=4)
    spec = NormSpec(kind=TL, s=1.0, p=2.0, q=2.0)
    inputs = [random_resolved(grid1d, part, rng, spec) for _ in range(2)]
    with pytest.raises(UnresolvedInputError):
        boundedness_probe(a, spec, 0.0, inputs, part)
    report = boundedness_probe(a, spec, 0.0, inputs, part, output_part=finer)
    assert all(0 < r < math.inf for r in report.ratios)
    with pytest.raises(GridMismatchError):
        boundedness_probe(a, spec, 0.0, inputs, finer, output_part=part)


def test_marschall_ratio_is_finite(part1d):
    rng = np.random.default_rng(3)
    a, v = marschall_ensemble(part1d.grid, part1d, 3, rng)
    ratios = marschall_ratios(a, v, 3, 0.5, part1d)
    assert np.all(np.isfinite(ratios))
    assert 0 < float(np.max(ratios)) < math.inf
    report = marschall_probe(a, v, 3, 1.0, part1d)
    assert report.passed
    assert report.summary["sup_ratio"] > 0
    with pytest.raises(ValueError):
        marschall_ratios(a, v, 3, 1.5, part1d)


def test_marschall_sups_vary_across_draws(part1d):
    sups = []
    for seed in range(4):
        a, v = marschall_ensemble(part1d.grid, part1d, 3, np.random.default_rng(seed))
        sups.append(float(np.max(marschall_ratios(a, v, 3, 1.0, part1d))))
    assert all(0 < s < math.inf for s in sups)
    assert np.std(sups) > 1e-3 * np.mean(sups)


def test_marschall_ratio_ignores_input_scale(part1d):
    a, v = marschall_ensemble(part1d.grid, part1d, 3, np.random.default_rng(8))
    scaled = GridFunction(v.grid, 3.0 * v.values)
    np.testing.assert_allclose(marschall_ratios(a, scaled, 3, 0.5, part1d),
                               marschall_ratios(a, v, 3, 0.5, part1d), rtol=1e-9, atol=1e-12)


def test_marschall_ensemble_needs_room(part1d):
    with pytest.raises(IndexRangeError):
        marschall_ensemble(part1d.grid, part1d, 7, np.random.default_rng(0))
    with pytest.raises(GridMismatchError):
        marschall_ensemble(TorusGrid(1, 128), part1d, 3, np.random.default_rng(0))


def test_marschall_on_shipped_symbol(part1d, rng):
    a = build_symbol(SymbolSpec(name="smooth"), part1d, seed=1)
    v = random_resolved(part1d.grid, part1d, rng)
    assert np.all(np.isfinite(marschall_ratios(a, v, 2, 1.0, part1d)))


@pytest.mark.slow
def test_ching_identity_on_large_grid():
    grid = TorusGrid(1, 65536)
    part = build_partition(grid, 12)
    report = counterexample_run(0.0, [2], [1.0, 2.0, math.inf], part)
    assert report.passed, report.first_failure
    assert report.tables["identity"][0]["pairing"] == pytest.approx(13 / 12, rel=1e-9)
