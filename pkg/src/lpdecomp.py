"""Littlewood-Paley partition and dyadic block operators on the torus."""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Tuple

import numpy as np

from .errors import IndexRangeError, UnresolvedInputError
from .grid import GridFunction, SpectralFunction, TorusGrid, dft, idft
from .config import settings
from .parallel import ordered_map, tree_sum

logger = logging.getLogger(__name__)

PLATEAU_END = 1.1
CUTOFF_START = 1.3
_BAND = CUTOFF_START - PLATEAU_END
PROFILE_NODES = 64


@lru_cache(maxsize=None)
def _legendre(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(nodes)


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = (s > 0) & (s < 1)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (si * (1.0 - si)))
    return out


def _bump_integral(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gauss-Legendre integral of the bump over [a, b], vectorised over the endpoints."""
    x, w = _legendre(PROFILE_NODES)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    samples = _bump(half[..., None] * x + mid[..., None])
    return half * (samples @ w)


@dataclass(frozen=True)
class CutoffProfile:
    """
    The scalar profile Psi.

    Psi(t) = 1 for t <= 11/10, 0 for t >= 13/10; on the band it is one minus
    the normalised integral of exp(-1/(s(1-s))), s = (t - 11/10)/(2/10).
    """

    _total: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        halves = _bump_integral(np.array([0.0, 0.5]), np.array([0.5, 1.0]))
        object.__setattr__(self, "_total", float(halves[0] + halves[1]))

    def __call__(self, t) -> np.ndarray:
        shape = np.shape(t)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.where(t <= PLATEAU_END, 1.0, 0.0)
        band = (t > PLATEAU_END) & (t < CUTOFF_START)
        if np.any(band):
            s = (t[band] - PLATEAU_END) / _BAND
            lower = s <= 0.5
            values = np.empty_like(s)
            # integrate from the nearer endpoint
            values[lower] = 1.0 - _bump_integral(np.zeros(lower.sum()), s[lower]) / self._total
            values[~lower] = _bump_integral(s[~lower], np.ones((~lower).sum())) / self._total
            out[band] = np.clip(values, 0.0, 1.0)
        return out.reshape(shape)

    def derivative(self, t) -> np.ndarray:
        """d Psi / dt."""
        shape = np.shape(t)
        s = (np.atleast_1d(np.asarray(t, dtype=float)) - PLATEAU_END) / _BAND
        return (-_bump(s) / (_BAND * self._total)).reshape(shape)


class DyadicPartition:
    """
    Sampled Littlewood-Paley partition on a grid.

    Psi_j(xi) = Psi(2^-j |xi|), Phi_j = Psi_j - Psi_{j-1} with Psi_{-1} = 0.
    ``blocks`` holds Phi_0..Phi_{J_max}; ``phi`` also serves the x-frequency
    levels up to ``x_levels``, where Psi_{x_levels} is 1 on the whole lattice.
    """

    def __init__(self, grid: TorusGrid, J_max: int, profile: CutoffProfile):
        self.grid = grid
        self.J_max = J_max
        self.profile = profile
        self.x_levels = x_levels_for(grid)
        self._zeros = np.zeros(grid.shape)
        self._zeros.flags.writeable = False
        norm = grid.frequency_norm()
        self._psi: Dict[int, np.ndarray] = {}
        for j in range(0, self.x_levels + 2):
            psi = profile(norm * 2.0 ** (-j))
            psi.flags.writeable = False
            self._psi[j] = psi
        self._phi: Dict[int, np.ndarray] = {}
        for j in range(0, self.x_levels + 1):
            phi = self.psi(j) - self.psi(j - 1)
            phi.flags.writeable = False
            self._phi[j] = phi
        self.blocks = np.stack([self._phi[j] for j in range(J_max + 1)])
        self.blocks.flags.writeable = False

    def __repr__(self) -> str:
        return f"DyadicPartition(N={self.grid.points_per_axis}, dim={self.grid.dim}, J_max={self.J_max})"

    def psi(self, j: int) -> np.ndarray:
        if j < 0:
            return self._zeros
        if j not in self._psi:
            raise IndexRangeError(f"Psi_{j} beyond level {self.x_levels + 1}")
        return self._psi[j]

    def phi(self, j: int) -> np.ndarray:
        if j not in self._phi:
            raise IndexRangeError(f"Phi_{j} outside 0..{self.x_levels}")
        return self._phi[j]

    def phi_tilde(self, k: int) -> np.ndarray:
        """Phi_{k-1} + Phi_k + Phi_{k+1} = Psi_{k+1} - Psi_{k-2}."""
        return self.psi(k + 1) - self.psi(k - 2)

    def phi_at(self, j: int, points: np.ndarray) -> np.ndarray:
        """Phi_j at arbitrary frequency points of shape (Q, dim)."""
        radius = np.linalg.norm(np.atleast_2d(points), axis=-1)
        upper = self.profile(radius * 2.0 ** (-j))
        if j == 0:
            return upper
        return upper - self.profile(radius * 2.0 ** (-j + 1))

    def phi_gradient(self, j: int, points: np.ndarray) -> np.ndarray:
        """Gradient of Phi_j at points (Q, dim); shape (Q, dim)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        radius = np.linalg.norm(pts, axis=-1)
        radial = 2.0 ** (-j) * self.profile.derivative(radius * 2.0 ** (-j))
        if j > 0:
            radial = radial - 2.0 ** (-j + 1) * self.profile.derivative(radius * 2.0 ** (-j + 1))
        safe = np.where(radius > 0, radius, 1.0)
        return (radial / safe)[:, None] * pts * (radius > 0)[:, None]

    def resolved_mask(self) -> np.ndarray:
        return self.grid.frequency_norm() <= PLATEAU_END * 2.0 ** self.J_max


def homogeneous_phi(profile: CutoffProfile, j: int, radius: np.ndarray) -> np.ndarray:
    """phi_j at |z| = radius: Psi(2^-j |z|) - Psi(2^(-j+1) |z|), any integer j."""
    return profile(radius * 2.0 ** (-j)) - profile(radius * 2.0 ** (-j + 1))


def x_levels_for(grid: TorusGrid) -> int:
    """Smallest J with (11/10) 2^J >= sqrt(n) N / 2."""
    reach = math.sqrt(grid.dim) * grid.points_per_axis / 2
    level = 0
    while PLATEAU_END * 2.0 ** level < reach:
        level += 1
    return level


def max_levels(grid: TorusGrid) -> int:
    """Largest J_max with (13/10) 2^J_max <= N/2."""
    level = 0
    while CUTOFF_START * 2.0 ** (level + 1) <= grid.points_per_axis / 2:
        level += 1
    return level


def build_partition(grid: TorusGrid, J_max: int, profile: CutoffProfile | None = None) -> DyadicPartition:
    """
    Sample Phi_0..Phi_{J_max} on the lattice of ``grid``.

    Raises:
        IndexRangeError: If (13/10) 2^J_max exceeds N/2 or J_max < 0
    """
    if J_max < 0:
        raise IndexRangeError(f"J_max must be non-negative, got {J_max}")
    if CUTOFF_START * 2.0 ** J_max > grid.points_per_axis / 2:
        raise IndexRangeError(
            f"J_max={J_max} not resolved on N={grid.points_per_axis} (needs 1.3*2^J <= N/2)"
        )
    part = DyadicPartition(grid, J_max, profile or CutoffProfile())
    logger.debug(f"Built {part} with x_levels={part.x_levels}")
    return part


@dataclass(frozen=True, eq=False)
class DyadicBlocks:
    """The blocks u_j = Phi_j(D)u of a resolved grid function."""

    source: GridFunction
    blocks: List[Tuple[int, GridFunction]]

    def reconstruct(self) -> GridFunction:
        total = tree_sum([block.values for _, block in self.blocks])
        return GridFunction(self.source.grid, total)

    def reconstruction_error(self) -> float:
        diff = np.linalg.norm((self.reconstruct() - self.source).values)
        scale = np.linalg.norm(self.source.values)
        return float(diff / scale) if scale > 0 else float(diff)

    def nonzero_levels(self, rel_threshold: float = 1e-12) -> List[int]:
        peak = max((float(np.max(np.abs(b.values))) for _, b in self.blocks), default=0.0)
        return [j for j, b in self.blocks if peak > 0 and np.max(np.abs(b.values)) > rel_threshold * peak]


def unresolved_fraction(F: SpectralFunction, part: DyadicPartition) -> float:
    energy = np.abs(F.coeffs) ** 2
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    return float(np.sum(energy[~part.resolved_mask()])) / total


def check_resolved(F: SpectralFunction, part: DyadicPartition) -> None:
    """
    Raises:
        UnresolvedInputError: If the energy above (11/10) 2^J_max exceeds the tolerance
    """
    if F.grid != part.grid:
        raise UnresolvedInputError("Input grid differs from the partition grid")
    fraction = unresolved_fraction(F, part)
    if fraction > settings.resolution_tolerance:
        raise UnresolvedInputError(
            f"Energy fraction {fraction:.3e} above the top corona 1.1*2^{part.J_max}"
        )


def _check_level(j: int, part: DyadicPartition) -> None:
    if not 0 <= j <= part.J_max:
        raise IndexRangeError(f"Block index {j} outside 0..{part.J_max}")


def block(f: GridFunction, j: int, part: DyadicPartition) -> GridFunction:
    """Phi_j(D) f."""
    _check_level(j, part)
    return idft(SpectralFunction(f.grid, part.phi(j) * dft(f).coeffs))


def low_pass(f: GridFunction, j: int, part: DyadicPartition) -> GridFunction:
    """Psi_j(D) f."""
    _check_level(j, part)
    return idft(SpectralFunction(f.grid, part.psi(j) * dft(f).coeffs))


def block_arrays(F: SpectralFunction, part: DyadicPartition) -> List[np.ndarray]:
    """Physical-space arrays of Phi_j(D) for j = 0..J_max from precomputed coefficients."""
    return ordered_map(lambda j: idft(SpectralFunction(F.grid, part.phi(j) * F.coeffs)).values,
                       range(part.J_max + 1))


def decompose(f: GridFunction, part: DyadicPartition) -> DyadicBlocks:
    """
    Split a resolved grid function into its dyadic blocks.

    Raises:
        UnresolvedInputError: If f has energy above the top corona
    """
    F = dft(f)
    check_resolved(F, part)
    arrays = block_arrays(F, part)
    blocks = [(j, GridFunction(f.grid, values)) for j, values in enumerate(arrays)]
    result = DyadicBlocks(source=f, blocks=blocks)
    logger.debug(f"Decomposed into {len(blocks)} blocks, reconstruction error {result.reconstruction_error():.2e}")
    return result


def partition_rows(part: DyadicPartition) -> List[Dict[str, float]]:
    """Rows (xi..., Phi_0..Phi_J) sorted by frequency, for CSV export."""
    lattice = part.grid.lattice_array()
    order = np.lexsort(lattice.T[::-1])
    flat_blocks = part.blocks.reshape(part.J_max + 1, -1)
    axes = ["xi"] if part.grid.dim == 1 else ["xi1", "xi2"]
    rows = []
    for idx in order:
        row: Dict[str, float] = {name: int(lattice[idx, a]) for a, name in enumerate(axes)}
        for j in range(part.J_max + 1):
            row[f"phi_{j}"] = float(flat_blocks[j, idx])
        rows.append(row)
    return rows
