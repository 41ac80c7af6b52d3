"""Paradifferential evaluation: pieces a_{j,k}(x,D), the three series and the direct quadrature oracle.

Index conventions: k is the input level (0..J_max), j the x-frequency level
of the symbol (0..x_levels). Pieces act by exact spectral quadrature on the
lattice; no kernel is materialised.
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import fft as sfft

from .config import settings
from .errors import IndexRangeError
from .grid import GridFunction, SpectralFunction, TorusGrid, dft, idft, lp_norm
from .lpdecomp import DyadicPartition, check_resolved
from .parallel import ordered_map, tree_sum
from .symbols import Symbol, partial_ft_x

logger = logging.getLogger(__name__)

SERIES = ("series1", "series2", "series3")
# (j offset, l offset) of the diagonal series: a_{k-j,k-l}(x,D) u_{k-l}
_DIAGONAL_OFFSETS = ((0, 0), (1, 0), (0, 1))


@dataclass(frozen=True, eq=False)
class SymbolPiece:
    """a_{j,k}(x, eta) = (Phi_j(D_x) a)(x, eta) Phi~_k(eta), realised on the lattice."""

    symbol: Symbol
    j: int
    k: int
    part: DyadicPartition

    def partial_transform(self, eta_index: np.ndarray) -> np.ndarray:
        """Phi_j(xi) a^(xi, eta) Phi~_k(eta) for the given flat eta indices; shape (size, len)."""
        transform = partial_ft_x(self.symbol, self.part.grid)
        columns = transform.columns(np.asarray(eta_index))
        phi_j = self.part.phi(self.j).ravel()[:, None]
        tilde = self.part.phi_tilde(self.k).ravel()[np.asarray(eta_index)][None, :]
        return phi_j * columns * tilde

    def apply(self, u: GridFunction, with_tilde: bool = True) -> GridFunction:
        return piece_apply(self.symbol, self.j, self.k, u, self.part, with_tilde)


@dataclass(frozen=True, eq=False)
class ParaResult:
    """The three partial sums, their total and (optionally) the spectrum of every series term."""

    term1: GridFunction
    term2: GridFunction
    term3: GridFunction
    total: GridFunction
    term_spectra: Optional[Dict[str, Dict[int, SpectralFunction]]] = None

    @property
    def terms(self) -> Tuple[GridFunction, GridFunction, GridFunction]:
        return self.term1, self.term2, self.term3

    def to_document(self) -> Dict[str, Dict]:
        return {
            "term1": self.term1.to_document(),
            "term2": self.term2.to_document(),
            "term3": self.term3.to_document(),
            "total": self.total.to_document(),
        }


def _check_indices(j: int, k: int, part: DyadicPartition) -> None:
    if not 0 <= k <= part.J_max:
        raise IndexRangeError(f"Input level k={k} outside 0..{part.J_max}")
    if not 0 <= j <= part.x_levels:
        raise IndexRangeError(f"Symbol level j={j} outside 0..{part.x_levels}")


def _column_weights(U: SpectralFunction, multiplier: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Flat eta indices with nonzero multiplier * U, and (2 pi)^-n times those products."""
    weighted = (multiplier * U.coeffs).ravel()
    columns = np.flatnonzero(weighted)
    return columns, weighted[columns] * (2 * math.pi) ** (-U.grid.dim)


def _column_chunks(columns: np.ndarray, grid: TorusGrid) -> List[np.ndarray]:
    step = max(1, settings.direct_chunk_entries // grid.size)
    return [columns[start:start + step] for start in range(0, columns.size, step)]


# -- structured path -----------------------------------------------------------

class _StructuredPlan:
    """
    Physical-space factors of a separable symbol for one input.

    c_{i,j} = Phi_j(D) c_i and w_{i,k} = g_i(D) Phi~_k(D) Phi_k(D) u, kept only
    where the spectral product is not identically zero.
    """

    def __init__(self, a: Symbol, U: SpectralFunction, part: DyadicPartition, with_tilde: bool = True):
        self.part = part
        grid = part.grid
        eta = grid.lattice_array().astype(float)
        self.x_factors: Dict[Tuple[int, int], np.ndarray] = {}
        self.eta_factors: Dict[Tuple[int, int], np.ndarray] = {}
        for i, term in enumerate(a.structure):
            for j in range(part.x_levels + 1):
                product = part.phi(j) * term.x_coeffs
                if product.any():
                    self.x_factors[(i, j)] = idft(SpectralFunction(grid, product)).values
            profile = term.profile(eta).reshape(grid.shape)
            for k in range(part.J_max + 1):
                band = part.phi(k) * part.phi_tilde(k) if with_tilde else part.phi(k)
                product = profile * band * U.coeffs
                if product.any():
                    self.eta_factors[(i, k)] = idft(SpectralFunction(grid, product)).values
        self.term_count = len(a.structure)

    def piece(self, j: int, k: int) -> Optional[np.ndarray]:
        products = [
            self.x_factors[(i, j)] * self.eta_factors[(i, k)]
            for i in range(self.term_count)
            if (i, j) in self.x_factors and (i, k) in self.eta_factors
        ]
        return tree_sum(products)


# -- dense path ------------------------------------------------------------------

def _dense_pieces(a: Symbol, k: int, js: Iterable[int], U: SpectralFunction, part: DyadicPartition,
                  with_tilde: bool = True) -> Dict[int, np.ndarray]:
    """
    Pieces a_{j,k}(x,D)u for several j at one k from symbol samples.

    Each eta-column of a(., eta) is transformed in x, filtered by Phi_j(D_x),
    transformed back and summed against (2 pi)^-n Phi~_k Phi_k u^(eta).
    """
    grid = part.grid
    js = list(js)
    band = part.phi(k) * part.phi_tilde(k) if with_tilde else part.phi(k)
    columns, weights = _column_weights(U, band)
    results: Dict[int, List[np.ndarray]] = {j: [] for j in js}
    if columns.size == 0:
        return {}
    points = grid.point_array()
    lattice = grid.lattice_array().astype(float)
    axes = tuple(range(grid.dim))
    offset = 0
    for chunk in _column_chunks(columns, grid):
        eta = lattice[chunk]
        samples = a.evaluate(points, eta).reshape(*grid.shape, chunk.size)
        spectrum = sfft.fftn(samples, axes=axes, workers=settings.fft_workers)
        phases = np.exp(1j * (points @ eta.T))
        chunk_weights = weights[offset:offset + chunk.size]
        offset += chunk.size
        for j in js:
            filtered = sfft.ifftn(spectrum * part.phi(j)[..., None], axes=axes, workers=settings.fft_workers)
            contribution = (filtered.reshape(grid.size, chunk.size) * phases) @ chunk_weights
            results[j].append(contribution.reshape(grid.shape))
    return {j: tree_sum(parts) for j, parts in results.items() if parts}


class _PieceSource:
    """Uniform access to a_{j,k}(x,D)u_k for one (symbol, input) pair."""

    def __init__(self, a: Symbol, U: SpectralFunction, part: DyadicPartition, with_tilde: bool = True):
        self.a = a
        self.U = U
        self.part = part
        self.with_tilde = with_tilde
        self.structured = a.structure is not None and a.grid == part.grid
        self._plan = _StructuredPlan(a, U, part, with_tilde) if self.structured else None
        self._dense: Dict[int, Dict[int, np.ndarray]] = {}
        self._lock = threading.Lock()

    def _dense_level(self, k: int) -> Dict[int, np.ndarray]:
        # every j of one input level shares the same symbol samples
        cached = self._dense.get(k)
        if cached is not None:
            return cached
        computed = _dense_pieces(self.a, k, range(self.part.x_levels + 1), self.U, self.part, self.with_tilde)
        with self._lock:
            return self._dense.setdefault(k, computed)

    def pieces(self, pairs: List[Tuple[int, int]]) -> List[Optional[np.ndarray]]:
        """Piece arrays for (j, k) pairs, in the given order; None where the piece vanishes."""
        if self.structured:
            return [self._plan.piece(j, k) for j, k in pairs]
        return [self._dense_level(k).get(j) for j, k in pairs]


def piece_apply(a: Symbol, j: int, k: int, u: GridFunction, part: DyadicPartition,
                with_tilde: bool = True) -> GridFunction:
    """
    a_{j,k}(x,D) u_k by exact quadrature over supp(Phi~_k Phi_k).

    Args:
        a: Symbol
        j: x-frequency level, 0..x_levels
        k: input level, 0..J_max
        u: Resolved grid function
        part: Partition of u's grid
        with_tilde: Drop the redundant Phi~_k factor when False

    Raises:
        UnresolvedInputError: If u is not resolved
        IndexRangeError: If j or k is out of range
    """
    _check_indices(j, k, part)
    U = dft(u)
    check_resolved(U, part)
    values = _PieceSource(a, U, part, with_tilde).pieces([(j, k)])[0]
    if values is None:
        return GridFunction(u.grid, np.zeros(u.grid.shape))
    return GridFunction(u.grid, values)


# -- series --------------------------------------------------------------------

def series1_pairs(part: DyadicPartition) -> Dict[int, List[Tuple[int, int]]]:
    """k -> [(j, k)] for k = 2..J_max, j = 0..k-2."""
    return {k: [(j, k) for j in range(k - 1)] for k in range(2, part.J_max + 1)}


def series2_pairs(part: DyadicPartition) -> Dict[int, List[Tuple[int, int]]]:
    """k -> [(k-j', k-l')] over the diagonal offsets, k = 0..J_max+1."""
    table = {}
    for k in range(part.J_max + 2):
        pairs = []
        for dj, dl in _DIAGONAL_OFFSETS:
            j, level = k - dj, k - dl
            if j < 0 or level < 0 or level > part.J_max or j > part.x_levels:
                continue
            pairs.append((j, level))
        table[k] = pairs
    return table


def series3_pairs(part: DyadicPartition) -> Dict[int, List[Tuple[int, int]]]:
    """j -> [(j, k)] for j = 2..x_levels, k = 0..min(j-2, J_max)."""
    return {j: [(j, k) for k in range(min(j - 2, part.J_max) + 1)] for j in range(2, part.x_levels + 1)}


_PAIR_TABLES = {"series1": series1_pairs, "series2": series2_pairs, "series3": series3_pairs}


def _series_terms(source: _PieceSource, table: Dict[int, List[Tuple[int, int]]]) -> Dict[int, np.ndarray]:
    """Each outer index summed over its inner pairs in ascending order; vanishing terms omitted."""
    def term(pairs):
        return tree_sum([p for p in source.pieces(pairs) if p is not None])

    keys = sorted(table)
    values = ordered_map(lambda key: term(table[key]), keys)
    return {key: value for key, value in zip(keys, values) if value is not None}


def _series(name: str, a: Symbol, u: GridFunction, part: DyadicPartition) -> GridFunction:
    U = dft(u)
    check_resolved(U, part)
    terms = _series_terms(_PieceSource(a, U, part), _PAIR_TABLES[name](part))
    total = tree_sum([terms[key] for key in sorted(terms)])
    return GridFunction(u.grid, total if total is not None else np.zeros(u.grid.shape))


def series1(a: Symbol, u: GridFunction, part: DyadicPartition) -> GridFunction:
    """a^(1)(x,D)u = sum_{k>=2} sum_{j<=k-2} a_{j,k}(x,D) u_k (low x-frequencies, high input)."""
    return _series("series1", a, u, part)


def series2(a: Symbol, u: GridFunction, part: DyadicPartition) -> GridFunction:
    """a^(2)(x,D)u = sum_k sum_{j+l<=1} a_{k-j,k-l}(x,D) u_{k-l} (near-diagonal interactions)."""
    return _series("series2", a, u, part)


def series3(a: Symbol, u: GridFunction, part: DyadicPartition) -> GridFunction:
    """a^(3)(x,D)u = sum_{j>=2} sum_{k<=j-2} a_{j,k}(x,D) u_k (high x-frequencies, low input)."""
    return _series("series3", a, u, part)


def apply(a: Symbol, u: GridFunction, part: DyadicPartition, keep_spectra: bool = True) -> ParaResult:
    """
    a(x,D)u through the paradifferential splitting.

    Args:
        a: Symbol
        u: Resolved grid function
        part: Partition of u's grid
        keep_spectra: Store dft of every series term for inclusion checks

    Returns:
        ParaResult with term1..term3 and total = tree sum of the three

    Raises:
        UnresolvedInputError: If u is not resolved
    """
    U = dft(u)
    check_resolved(U, part)
    source = _PieceSource(a, U, part)
    path = "structured" if source.structured else "dense"
    logger.debug(f"Paradifferential apply of {a.name} ({path}) on {part}")

    sums = []
    spectra: Dict[str, Dict[int, SpectralFunction]] = {}
    zeros = np.zeros(u.grid.shape, dtype=np.complex128)
    for name in SERIES:
        terms = _series_terms(source, _PAIR_TABLES[name](part))
        total = tree_sum([terms[key] for key in sorted(terms)])
        sums.append(total if total is not None else zeros)
        if keep_spectra:
            spectra[name] = {key: dft(GridFunction(u.grid, value)) for key, value in terms.items()}

    term1, term2, term3 = (GridFunction(u.grid, values) for values in sums)
    total = GridFunction(u.grid, tree_sum(sums))
    return ParaResult(term1, term2, term3, total, spectra if keep_spectra else None)


# -- oracles -------------------------------------------------------------------

def direct_apply(a: Symbol, u: GridFunction, part: Optional[DyadicPartition] = None) -> GridFunction:
    """
    Dense quadrature (2 pi)^-n sum_eta exp(i x.eta) a(x, eta) u^(eta).

    Cost O(N^n * |supp u^|); symbol samples are materialised in chunks.

    Raises:
        UnresolvedInputError: If a partition is given and u is not resolved on it
    """
    grid = u.grid
    U = dft(u)
    if part is not None:
        check_resolved(U, part)
    columns, weights = _column_weights(U, np.ones(grid.shape))
    points = grid.point_array()
    lattice = grid.lattice_array().astype(float)

    def chunk_sum(span: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        chunk, chunk_weights = span
        eta = lattice[chunk]
        samples = a.evaluate(points, eta) * np.exp(1j * (points @ eta.T))
        return samples @ chunk_weights

    spans = []
    offset = 0
    for chunk in _column_chunks(columns, grid):
        spans.append((chunk, weights[offset:offset + chunk.size]))
        offset += chunk.size
    total = tree_sum(ordered_map(chunk_sum, spans))
    if total is None:
        return GridFunction(grid, np.zeros(grid.shape))
    return GridFunction(grid, total.reshape(grid.shape))


def operator_apply(a: Symbol, u: GridFunction) -> GridFunction:
    """a(x,D)u by the cheapest exact route: sum_i c_i(x) g_i(D)u for structured symbols."""
    if a.structure is None or a.grid != u.grid:
        return direct_apply(a, u)
    grid = u.grid
    U = dft(u)
    eta = grid.lattice_array().astype(float)

    def term_values(term) -> Optional[np.ndarray]:
        product = term.profile(eta).reshape(grid.shape) * U.coeffs
        if not product.any() or not term.x_coeffs.any():
            return None
        c = idft(SpectralFunction(grid, term.x_coeffs)).values
        return c * idft(SpectralFunction(grid, product)).values

    values = [v for v in ordered_map(term_values, a.structure) if v is not None]
    total = tree_sum(values)
    return GridFunction(grid, total if total is not None else np.zeros(grid.shape))


def relative_l2_error(result: GridFunction, reference: GridFunction) -> float:
    """L_2 distance relative to the reference norm (absolute when the reference vanishes)."""
    diff = lp_norm(result - reference, 2.0)
    scale = lp_norm(reference, 2.0)
    return diff / scale if scale > 0 else diff
