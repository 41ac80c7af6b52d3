"""Support-rule verification and the spectral inclusions of the paradifferential series."""

import itertools
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import settings
from .errors import MissingSpectraError
from .grid import GridFunction, SpectralFunction, TorusGrid, dft, mask_to_frequencies
from .lpdecomp import DyadicPartition
from .models import SupportClaim
from .paradiff import ParaResult, direct_apply
from .parallel import ordered_map, tree_sum
from .symbols import Symbol, partial_ft_x

logger = logging.getLogger(__name__)


def _roll(mask: np.ndarray, shift) -> np.ndarray:
    return np.roll(mask, shift=tuple(int(s) for s in shift), axis=tuple(range(mask.ndim)))


def _cube_offsets(dim: int, radius: int) -> List[Tuple[int, ...]]:
    return list(itertools.product(range(-radius, radius + 1), repeat=dim))


def dilate(mask: np.ndarray, cells: int) -> np.ndarray:
    """Periodic dilation by the cube of half-width ``cells``."""
    if cells <= 0:
        return mask.copy()
    out = np.zeros_like(mask)
    for offset in _cube_offsets(mask.ndim, cells):
        out |= _roll(mask, offset)
    return out


def erode(mask: np.ndarray, cells: int) -> np.ndarray:
    """Periodic erosion by the cube of half-width ``cells``."""
    if cells <= 0:
        return mask.copy()
    out = np.ones_like(mask)
    for offset in _cube_offsets(mask.ndim, cells):
        out &= _roll(mask, offset)
    return out


def _sumset(grid: TorusGrid, rows: np.ndarray, pair_mask: np.ndarray, columns: np.ndarray) -> np.ndarray:
    """Lattice mask of xi + eta (mod N) over the marked (row, column) pairs."""
    lattice = grid.lattice_array()
    out = np.zeros(grid.shape, dtype=bool)
    for r in np.flatnonzero(pair_mask.any(axis=1)):
        eta_mask = np.zeros(grid.size, dtype=bool)
        eta_mask[columns[pair_mask[r]]] = True
        out |= _roll(eta_mask.reshape(grid.shape), lattice[rows[r]])
    return out


def predicted_support(a: Symbol, V: SpectralFunction, cutoff: float) -> np.ndarray:
    """
    Mask of {xi + eta : |a^(xi, eta) v^(eta)| > cutoff}, before dilation.

    Pairs are scanned over the nonzero input coefficients and the rows the
    partial transform can populate.
    """
    grid = V.grid
    transform = partial_ft_x(a, grid)
    rows = transform.row_support()
    columns = np.flatnonzero(V.coeffs.ravel())
    out = np.zeros(grid.shape, dtype=bool)
    if columns.size == 0 or rows.size == 0:
        return out
    step = max(1, settings.direct_chunk_entries // max(rows.size, 1))
    for start in range(0, columns.size, step):
        chunk = columns[start:start + step]
        block = transform.columns(chunk, rows) * V.coeffs.ravel()[chunk][None, :]
        out |= _sumset(grid, rows, np.abs(block) > cutoff, chunk)
    return out


def support_rule_check(a: Symbol, v: GridFunction, threshold: Optional[float] = None,
                       part: Optional[DyadicPartition] = None, shrink: int = 0) -> SupportClaim:
    """
    Compare the observed spectrum of a(x,D)v with the sumset predicted from supp a^ and supp v^.

    A pair (xi, eta) enters the prediction when (2 pi)^-n |a^(xi,eta) v^(eta)| exceeds
    threshold * max|out^| / N^n, so that no collection of skipped pairs can reach the
    observation threshold. The prediction is dilated by one cell and then eroded by
    ``shrink`` cells.

    Args:
        a: Symbol
        v: Input grid function
        threshold: Relative threshold; settings.support_threshold by default
        part: Partition for the resolved-input check
        shrink: Erosion in cells (tightness experiments)
    """
    threshold = threshold if threshold is not None else settings.support_threshold
    grid = v.grid
    V = dft(v)
    out = dft(direct_apply(a, v, part))
    magnitude = np.abs(out.coeffs)
    peak = float(np.max(magnitude))
    if peak == 0.0:
        return SupportClaim(term="support_rule", predicted=frozenset(), observed=frozenset(), passed=True,
                            worst_violation=0.0, scale=0.0, threshold=threshold)

    cutoff = threshold * (2 * math.pi) ** grid.dim * peak / grid.size
    predicted = erode(dilate(predicted_support(a, V, cutoff), 1), shrink)
    observed = magnitude > threshold * peak
    outside = magnitude[~predicted]
    worst = float(np.max(outside)) if outside.size else 0.0
    passed = worst <= threshold * peak
    if not passed:
        logger.debug(f"Support rule for {a.name}: worst outside coefficient {worst:.3e} of peak {peak:.3e}")
    return SupportClaim(
        term="support_rule",
        predicted=mask_to_frequencies(grid, predicted),
        observed=mask_to_frequencies(grid, observed),
        passed=passed,
        worst_violation=worst,
        scale=peak,
        threshold=threshold,
    )


def convolution_oracle(a: Symbol, v: GridFunction) -> SpectralFunction:
    """
    F(a(x,D)v)(zeta) = (2 pi)^-n sum_{xi + eta = zeta mod N} a^(xi, eta) v^(eta).

    Accumulated row by row of the partial transform, each row shifted by its xi.
    """
    grid = v.grid
    V = dft(v)
    transform = partial_ft_x(a, grid)
    rows = transform.row_support()
    lattice = grid.lattice_array()
    columns = np.arange(grid.size)

    if transform.exact:
        eta = lattice.astype(float)
        contributions = []
        for term in a.structure:
            weighted = term.profile(eta).reshape(grid.shape) * V.coeffs
            for r in np.flatnonzero(term.x_coeffs.ravel()):
                contributions.append(term.x_coeffs.ravel()[r] * _roll(weighted, lattice[r]))
    else:
        dense = transform.columns(columns, rows) * V.coeffs.ravel()[None, :]
        contributions = [_roll(dense[i].reshape(grid.shape), lattice[r]) for i, r in enumerate(rows)]
    total = tree_sum(contributions)
    if total is None:
        total = np.zeros(grid.shape)
    return SpectralFunction(grid, total * (2 * math.pi) ** (-grid.dim))


# -- inclusions ------------------------------------------------------------------

def _bounds(series: str, level: int, C_twisted: Optional[float], dim: int) -> Tuple[float, float]:
    slack = math.sqrt(dim)
    scale = 2.0 ** level
    if series == "series2":
        lower = 0.0
        if C_twisted is not None and level > 3 + math.log2(5 * C_twisted):
            lower = max(0.0, scale / (4 * C_twisted) - slack)
        return lower, settings.diagonal_upper * scale + slack
    return max(0.0, settings.inclusion_lower * scale - slack), settings.inclusion_upper * scale + slack


def _inclusion_claim(term: str, F: SpectralFunction, bounds: Tuple[float, float], peak: float,
                     threshold: float) -> SupportClaim:
    lower, upper = bounds
    radius = F.grid.frequency_norm()
    magnitude = np.abs(F.coeffs)
    inside = (radius >= lower) & (radius <= upper)
    outside = magnitude[~inside]
    worst = float(np.max(outside)) if outside.size else 0.0
    observed = mask_to_frequencies(F.grid, magnitude > threshold * peak) if peak > 0 else frozenset()
    return SupportClaim(
        term=term,
        predicted=frozenset(),
        observed=observed,
        passed=worst <= threshold * peak,
        worst_violation=worst,
        scale=peak,
        threshold=threshold,
        lower_bound=lower,
        upper_bound=upper,
    )


def inclusion_check(result: ParaResult, part: DyadicPartition, C_twisted: Optional[float] = None,
                    threshold: Optional[float] = None) -> List[SupportClaim]:
    """
    One claim per series term against its corona or ball.

    series1/series3 terms of level k: inclusion_lower 2^k <= |zeta| <= inclusion_upper 2^k;
    series2: |zeta| <= diagonal_upper 2^k, with the lower bound 2^k / (4C) added for
    k > 3 + log2(5C) when ``C_twisted`` is given. Every bound is relaxed by sqrt(n) cells.
    Coefficients are compared against the largest coefficient over all terms.

    Raises:
        MissingSpectraError: If the result carries no per-term spectra
    """
    if result.term_spectra is None:
        raise MissingSpectraError("ParaResult has no per-term spectra; rerun apply with keep_spectra=True")
    threshold = threshold if threshold is not None else settings.support_threshold
    spectra: Dict[str, Dict[int, SpectralFunction]] = result.term_spectra
    peak = max(
        (float(np.max(np.abs(F.coeffs))) for terms in spectra.values() for F in terms.values()),
        default=0.0,
    )
    jobs = [
        (series, level, F)
        for series in sorted(spectra)
        for level, F in sorted(spectra[series].items())
    ]
    claims = ordered_map(
        lambda job: _inclusion_claim(
            f"{job[0]}[{job[1]}]", job[2], _bounds(job[0], job[1], C_twisted, part.grid.dim), peak, threshold
        ),
        jobs,
    )
    failed = [c.term for c in claims if not c.passed]
    logger.debug(f"Inclusion check: {len(claims)} terms, {len(failed)} outside their bounds {failed}")
    return claims
