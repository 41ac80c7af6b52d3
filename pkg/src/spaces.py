"""Besov and Triebel-Lizorkin (quasi-)norms, maximal functions and their inequalities."""

import logging
import math
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft

from .config import settings
from .errors import InvalidSpecError, UnresolvedInputError
from .grid import GridFunction, TorusGrid, dft, lp_norm, lp_norm_array
from .lpdecomp import (
    CUTOFF_START,
    CutoffProfile,
    DyadicPartition,
    block_arrays,
    check_resolved,
    homogeneous_phi,
)
from .models import NormKind, NormSpec
from .parallel import ordered_map

logger = logging.getLogger(__name__)

_PROFILE = CutoffProfile()
_HOM_LOWER = 0.55


def _lq(values: np.ndarray, q: float, axis: int = 0) -> np.ndarray:
    """l_q (quasi-)norm along ``axis``; max for q = inf."""
    if math.isinf(q):
        return np.max(values, axis=axis)
    return np.sum(values ** q, axis=axis) ** (1.0 / q)


def _weighted_blocks(f: GridFunction, s: float, part: DyadicPartition) -> np.ndarray:
    F = dft(f)
    check_resolved(F, part)
    blocks = block_arrays(F, part)
    weights = 2.0 ** (s * np.arange(part.J_max + 1))
    return np.stack([w * np.abs(b) for w, b in zip(weights, blocks)])


def f_norm(f: GridFunction, spec: NormSpec, part: DyadicPartition) -> float:
    """
    Triebel-Lizorkin (quasi-)norm: L_p of the pointwise l_q norm of 2^(sj) u_j.

    Raises:
        InvalidSpecError: If spec is not a Triebel-Lizorkin descriptor
        UnresolvedInputError: If f is not resolved on the partition
    """
    if spec.kind != NormKind.TRIEBEL_LIZORKIN:
        raise InvalidSpecError(f"f_norm needs a Triebel-Lizorkin spec, got {spec.kind.value}")
    weighted = _weighted_blocks(f, spec.s, part)
    inner = _lq(weighted, spec.q)
    return lp_norm_array(inner, spec.p, f.grid.cell_measure)


def b_norm(f: GridFunction, spec: NormSpec, part: DyadicPartition) -> float:
    """Besov (quasi-)norm: l_q over j of the L_p norms of 2^(sj) u_j."""
    if spec.kind != NormKind.BESOV:
        raise InvalidSpecError(f"b_norm needs a Besov spec, got {spec.kind.value}")
    weighted = _weighted_blocks(f, spec.s, part)
    block_norms = np.array([lp_norm_array(w, spec.p, f.grid.cell_measure) for w in weighted])
    return float(_lq(block_norms, spec.q))


def norm(f: GridFunction, spec: NormSpec, part: DyadicPartition) -> float:
    """Dispatch on ``spec.kind``; Lebesgue specs ignore s and q."""
    if spec.kind == NormKind.TRIEBEL_LIZORKIN:
        return f_norm(f, spec, part)
    if spec.kind == NormKind.BESOV:
        return b_norm(f, spec, part)
    if spec.kind == NormKind.LEBESGUE:
        return lp_norm(f, spec.p)
    raise InvalidSpecError("Homogeneous Besov norms act on symbol rows, use hom_besov_norm_in_xi")


# -- homogeneous Besov norm in the frequency variable -----------------------

def hom_besov_rows(rows: np.ndarray, s: float, p: float, q: float, spacing: float = 1.0) -> np.ndarray:
    """
    Homogeneous Besov (quasi-)norms of a batch of sampled rows.

    Args:
        rows: Array (B, M, ..., M) of samples b(spacing * m), m in FFT order
        s, p, q: Space parameters
        spacing: Sample spacing h; the dual variable is z = 2 pi m / (M h)

    Returns:
        Array (B,) of norms; the z = 0 mode never enters (phi_j(0) = 0)
    """
    rows = np.asarray(rows, dtype=np.complex128)
    n = rows.ndim - 1
    M = rows.shape[1]
    axes = tuple(range(1, n + 1))
    spectrum = sfft.fftn(rows, axes=axes, workers=settings.fft_workers)

    freqs = np.fft.fftfreq(M, d=1.0 / M)
    dz = 2 * math.pi / (M * spacing)
    mesh = np.meshgrid(*([freqs * dz] * n), indexing="ij")
    radius = np.sqrt(sum(axis ** 2 for axis in mesh))
    zmin, zmax = dz, float(np.max(radius))
    j_lo = math.floor(math.log2(zmin / CUTOFF_START)) - 1
    j_hi = math.ceil(math.log2(zmax / _HOM_LOWER)) + 1
    cell = spacing ** n

    def level(j: int):
        phi = homogeneous_phi(_PROFILE, j, radius)
        if not phi.any():
            return None
        values = sfft.ifftn(spectrum * phi, axes=axes, workers=settings.fft_workers)
        flat = np.abs(values.reshape(values.shape[0], -1))
        if math.isinf(p):
            block_norm = np.max(flat, axis=1)
        else:
            block_norm = (np.sum(flat ** p, axis=1) * cell) ** (1.0 / p)
        return 2.0 ** (s * j) * block_norm

    levels = [v for v in ordered_map(level, range(j_lo, j_hi + 1)) if v is not None]
    if not levels:
        return np.zeros(rows.shape[0])
    return _lq(np.stack(levels), q)


def hom_besov_norm_in_xi(b_row: np.ndarray, s: float, p: float, q: float, spacing: float = 1.0) -> float:
    """
    Homogeneous Besov norm of one sampled row b(h m).

    Dyadic scaling is exact: the norm at spacing h / 2^k equals
    2^(k(s - n/p)) times the norm at spacing h for the same samples.
    """
    return float(hom_besov_rows(np.asarray(b_row)[None, ...], s, p, q, spacing)[0])


# -- maximal functions --------------------------------------------------------

def _offset_distances(grid: TorusGrid) -> np.ndarray:
    """Squared integer lengths of the periodic offsets, FFT order."""
    return sum(axis.astype(np.int64) ** 2 for axis in grid.lattice())


@lru_cache(maxsize=16)
def _dyadic_kernels(grid: TorusGrid) -> Tuple[Tuple[float, np.ndarray], ...]:
    """(count, kernel transform) for radii 2 pi 2^-m, m = 0..log2 N."""
    dist2 = _offset_distances(grid)
    levels = int(math.log2(grid.points_per_axis))
    kernels = []
    for m in range(levels + 1):
        cells = (2 * math.pi * 2.0 ** (-m)) / grid.spacing
        ball = (dist2 <= cells * cells + 1e-9).astype(float)
        kernels.append((float(ball.sum()), sfft.fftn(ball, workers=settings.fft_workers)))
    return tuple(kernels)


def _check_t(t: float) -> None:
    if not 0 < t <= 1:
        raise ValueError(f"Maximal exponent t must lie in (0, 1], got {t}")


def maximal(f: GridFunction, t: float) -> GridFunction:
    """
    Dyadic Hardy-Littlewood maximal function M_t f.

    Sup of (ball average of |f|^t)^(1/t) over the radii 2 pi 2^-m, m = 0..log2 N,
    convolved by FFT, and over the point itself (radius half a cell, m = log2 N + 1).

    Raises:
        ValueError: If t is outside (0, 1]
    """
    _check_t(t)
    magnitude = np.abs(f.values)
    powered = magnitude ** t
    spectrum = sfft.fftn(powered, workers=settings.fft_workers)

    def average(kernel):
        count, kernel_hat = kernel
        conv = sfft.ifftn(spectrum * kernel_hat, workers=settings.fft_workers).real / count
        return np.clip(conv, 0.0, None)

    best = powered
    for avg in ordered_map(average, _dyadic_kernels(f.grid)):
        best = np.maximum(best, avg)
    return GridFunction(f.grid, np.maximum(best ** (1.0 / t), magnitude))


def maximal_all_radii(f: GridFunction, t: float) -> GridFunction:
    """Brute-force M_t f over every distinct lattice radius (direct summation)."""
    _check_t(t)
    grid = f.grid
    powered = np.abs(f.values) ** t
    dist2 = _offset_distances(grid).ravel()
    offsets = grid.lattice_array()
    order = np.argsort(dist2, kind="stable")
    running = np.zeros(grid.shape)
    best = np.zeros(grid.shape)
    axes = tuple(range(grid.dim))
    for position, idx in enumerate(order):
        running += np.roll(powered, shift=tuple(-int(c) for c in offsets[idx]), axis=axes)
        last_of_radius = position + 1 == len(order) or dist2[order[position + 1]] != dist2[idx]
        if last_of_radius:
            best = np.maximum(best, running / (position + 1))
    return GridFunction(grid, np.maximum(best ** (1.0 / t), np.abs(f.values)))


def _lq_of_family(arrays: Sequence[np.ndarray], q: float) -> np.ndarray:
    return _lq(np.stack([np.abs(a) for a in arrays]), q)


def vector_maximal_ratio(family: Sequence[GridFunction], p: float, q: float, t: float,
                         maximal_values: Optional[Sequence[np.ndarray]] = None) -> float:
    """
    ||(sum_k |M_t f_k|^q)^(1/q)||_p / ||(sum_k |f_k|^q)^(1/q)||_p.

    ``maximal_values`` may carry M_t f_k already computed for this t.
    """
    cell = family[0].grid.cell_measure
    if maximal_values is None:
        maximal_values = [maximal(f, t).values for f in family]
    numerator = lp_norm_array(_lq_of_family(maximal_values, q), p, cell)
    denominator = lp_norm_array(_lq_of_family([f.values for f in family], q), p, cell)
    return numerator / denominator


def fefferman_stein_constant(families: Sequence[Sequence[GridFunction]], p: float, q: float, t: float) -> float:
    """Largest vector-valued maximal ratio over the families (the empirical constant)."""
    ratios = ordered_map(lambda fam: vector_maximal_ratio(fam, p, q, t), families)
    logger.debug(f"Fefferman-Stein ratios p={p} q={q} t={t}: max {max(ratios):.4f}")
    return float(max(ratios))


def nikolskii_ratio(f: GridFunction, R: float, t: float) -> float:
    """
    ||f||_1 / (R^(n/t - n) ||f||_t) for f with spectrum in B(0, R).

    Raises:
        UnresolvedInputError: If f has spectral energy outside B(0, R)
    """
    _check_t(t)
    F = dft(f)
    energy = np.abs(F.coeffs) ** 2
    outside = float(np.sum(energy[f.grid.frequency_norm() > R]))
    if outside > settings.resolution_tolerance * float(np.sum(energy)):
        raise UnresolvedInputError(f"Spectrum not contained in B(0, {R})")
    n = f.grid.dim
    return lp_norm(f, 1.0) / (R ** (n / t - n) * lp_norm(f, t))


def nikolskii_constant(functions: Sequence[GridFunction], R: float, t: float) -> float:
    return float(max(ordered_map(lambda f: nikolskii_ratio(f, R, t), functions)))


def block_norm_table(f: GridFunction, spec: NormSpec, part: DyadicPartition) -> List[float]:
    """Per-level L_p norms of 2^(sj) u_j, for reports."""
    weighted = _weighted_blocks(f, spec.s, part)
    return [lp_norm_array(w, spec.p, f.grid.cell_measure) for w in weighted]
