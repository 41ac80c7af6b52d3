"""Periodic grid geometry, discrete Fourier transforms and quadrature.

Normalisation used throughout the lab (n = dim, h = 2*pi/N):

    dft(f)(xi)  = h**n * sum_x f(x) exp(-i x.xi)
    idft(F)(x)  = (2*pi)**(-n) * sum_xi F(xi) exp(i x.xi)

so dft(f)(xi) is the rectangle-rule value of the integral of
f(x) exp(-i x.xi) over the torus, and idft mirrors
a(x,D)u(x) = (2*pi)**(-n) * integral exp(i x.xi) a(x,xi) u^(xi) dxi with
unit lattice cell measure. Arrays are kept in FFT order along every axis.
"""

import logging
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, FrozenSet, Tuple

import numpy as np
from scipy import fft as sfft

from .config import settings
from .errors import GridMismatchError, SerializationError

logger = logging.getLogger(__name__)

PERIOD = 2 * math.pi
MIN_POINTS = 64
BINARY_MAGIC = b"PDGF"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class TorusGrid:
    """Discretised n-torus of period 2*pi with N points per axis."""

    dim: int
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridMismatchError(f"Grid dimension must be 1 or 2, got {self.dim}")
        n = self.points_per_axis
        if n < MIN_POINTS or n & (n - 1):
            raise GridMismatchError(f"Points per axis must be a power of two >= {MIN_POINTS}, got {n}")

    @property
    def period(self) -> float:
        return PERIOD

    @property
    def spacing(self) -> float:
        return PERIOD / self.points_per_axis

    @property
    def cell_measure(self) -> float:
        return self.spacing ** self.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def nyquist(self) -> int:
        return self.points_per_axis // 2

    def axis_frequencies(self) -> np.ndarray:
        """Integer frequencies of one axis in FFT order: 0..N/2-1, -N/2..-1."""
        n = self.points_per_axis
        return np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(np.int64)

    def lattice(self) -> Tuple[np.ndarray, ...]:
        """Per-axis integer frequency arrays of shape ``self.shape``."""
        freqs = self.axis_frequencies()
        return tuple(np.meshgrid(*([freqs] * self.dim), indexing="ij"))

    def lattice_array(self) -> np.ndarray:
        """Lattice frequencies as a (size, dim) integer array in C order."""
        return np.stack([axis.ravel() for axis in self.lattice()], axis=-1)

    def points(self) -> Tuple[np.ndarray, ...]:
        coords = np.arange(self.points_per_axis) * self.spacing
        return tuple(np.meshgrid(*([coords] * self.dim), indexing="ij"))

    def point_array(self) -> np.ndarray:
        """Grid points as a (size, dim) array in C order."""
        return np.stack([axis.ravel() for axis in self.points()], axis=-1)

    @cached_property
    def _frequency_norm(self) -> np.ndarray:
        squares = sum(axis.astype(float) ** 2 for axis in self.lattice())
        norm = np.sqrt(squares)
        norm.flags.writeable = False
        return norm

    def frequency_norm(self) -> np.ndarray:
        """|xi| on the lattice (read-only, FFT order)."""
        return self._frequency_norm

    def index_of(self, frequency) -> Tuple[int, ...]:
        """Array index of a lattice frequency (wrapped modulo N)."""
        freq = np.atleast_1d(np.asarray(frequency, dtype=np.int64))
        if freq.shape != (self.dim,):
            raise GridMismatchError(f"Frequency {frequency!r} does not have {self.dim} components")
        return tuple(int(c) % self.points_per_axis for c in freq)

    def frequency_of(self, index) -> Tuple[int, ...]:
        """Lattice frequency in [-N/2, N/2) of an array index."""
        n = self.points_per_axis
        return tuple(((int(i) + n // 2) % n) - n // 2 for i in index)


def _as_values(grid: TorusGrid, values, label: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.complex128)
    if array.size != grid.size:
        raise GridMismatchError(f"{label} has {array.size} entries, grid needs {grid.size}")
    array = np.array(array.reshape(grid.shape), copy=True)
    if not np.all(np.isfinite(array)):
        raise GridMismatchError(f"{label} contains NaN or Inf entries")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples on the grid points."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_values(self.grid, self.values, "GridFunction"))

    def _combine(self, other: "GridFunction") -> np.ndarray:
        if not isinstance(other, GridFunction) or other.grid != self.grid:
            raise GridMismatchError("Grid functions live on different grids")
        return other.values

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values + self._combine(other))

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values - self._combine(other))

    def __mul__(self, scalar: complex) -> "GridFunction":
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def is_real(self, tolerance: float = 1e-12) -> bool:
        scale = max(float(np.max(np.abs(self.values))), 1e-300)
        return float(np.max(np.abs(self.values.imag))) <= tolerance * scale

    def to_document(self) -> Dict[str, Any]:
        return _document(self.grid, self.values, "physical")

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "GridFunction":
        grid, values = _parse_document(doc, "physical")
        return cls(grid, values)

    def to_bytes(self) -> bytes:
        return _encode(self.grid, self.values)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "GridFunction":
        grid, values = _decode(payload)
        return cls(grid, values)


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    """Fourier coefficients on the integer lattice, FFT order."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_values(self.grid, self.coeffs, "SpectralFunction"))

    def __add__(self, other: "SpectralFunction") -> "SpectralFunction":
        if other.grid != self.grid:
            raise GridMismatchError("Spectral functions live on different grids")
        return SpectralFunction(self.grid, self.coeffs + other.coeffs)

    def __mul__(self, scalar: complex) -> "SpectralFunction":
        return SpectralFunction(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def at(self, frequency) -> complex:
        return complex(self.coeffs[self.grid.index_of(frequency)])

    def to_document(self) -> Dict[str, Any]:
        return _document(self.grid, self.coeffs, "spectral")

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "SpectralFunction":
        grid, values = _parse_document(doc, "spectral")
        return cls(grid, values)


def dft(f: GridFunction) -> SpectralFunction:
    """Forward transform; the coefficient at xi approximates the integral of f exp(-i x xi)."""
    grid = f.grid
    coeffs = sfft.fftn(f.values, workers=settings.fft_workers) * grid.cell_measure
    return SpectralFunction(grid, coeffs)


def idft(F: SpectralFunction) -> GridFunction:
    """Inverse of :func:`dft`."""
    grid = F.grid
    values = sfft.ifftn(F.coeffs, workers=settings.fft_workers) / grid.cell_measure
    return GridFunction(grid, values)


def lp_norm(f: GridFunction, p: float) -> float:
    """
    Rectangle-rule L_p (quasi-)norm on the torus.

    Args:
        f: Grid function
        p: Exponent in (0, inf]; p < 1 yields the quasi-norm

    Returns:
        (sum |f|^p * h^n)^(1/p), or max |f| for p = inf

    Raises:
        ValueError: If p is not positive
    """
    return lp_norm_array(f.values, p, f.grid.cell_measure)


def lp_norm_array(values: np.ndarray, p: float, cell_measure: float) -> float:
    if not p > 0:
        raise ValueError(f"Exponent p must be positive, got {p}")
    magnitude = np.abs(values)
    if math.isinf(p):
        return float(np.max(magnitude)) if magnitude.size else 0.0
    return float(np.sum(magnitude ** p) * cell_measure) ** (1.0 / p)


def inner(f: GridFunction, g: GridFunction) -> complex:
    """Bilinear pairing <f, g> = integral of f g over the torus (no conjugation)."""
    if f.grid != g.grid:
        raise GridMismatchError("Grid functions live on different grids")
    return complex(np.sum(f.values * g.values) * f.grid.cell_measure)


def support_mask(F: SpectralFunction, rel_threshold: float) -> np.ndarray:
    """Boolean lattice mask of |coeff| > rel_threshold * max |coeff|."""
    if not 0 < rel_threshold < 1:
        raise ValueError(f"Relative threshold must lie in (0, 1), got {rel_threshold}")
    magnitude = np.abs(F.coeffs)
    peak = float(np.max(magnitude))
    if peak == 0.0:
        return np.zeros(F.grid.shape, dtype=bool)
    return magnitude > rel_threshold * peak


def mask_to_frequencies(grid: TorusGrid, mask: np.ndarray) -> FrozenSet[Tuple[int, ...]]:
    return frozenset(grid.frequency_of(index) for index in zip(*np.nonzero(mask)))


def numerical_support(F: SpectralFunction, rel_threshold: float) -> FrozenSet[Tuple[int, ...]]:
    """
    Lattice frequencies carrying more than ``rel_threshold`` of the peak coefficient.

    Frequencies are integer tuples of length ``dim`` in [-N/2, N/2).
    Returns the empty set for F == 0.
    """
    return mask_to_frequencies(F.grid, support_mask(F, rel_threshold))


# -- serialisation ---------------------------------------------------------

def _document(grid: TorusGrid, values: np.ndarray, domain: str) -> Dict[str, Any]:
    interleaved = np.empty(2 * values.size, dtype=np.float64)
    flat = values.ravel()
    interleaved[0::2] = flat.real
    interleaved[1::2] = flat.imag
    return {
        "dim": grid.dim,
        "n_points": grid.points_per_axis,
        "domain": domain,
        "values": interleaved.tolist(),
    }


def _parse_document(doc: Dict[str, Any], domain: str) -> Tuple[TorusGrid, np.ndarray]:
    try:
        grid = TorusGrid(int(doc["dim"]), int(doc["n_points"]))
        raw = np.asarray(doc["values"], dtype=np.float64)
    except (KeyError, TypeError) as e:
        raise SerializationError(f"Malformed grid document: {e}") from e
    found = doc.get("domain", "physical")
    if found != domain:
        raise SerializationError(f"Document holds {found} data, expected {domain}")
    if raw.size != 2 * grid.size:
        raise SerializationError(f"Document has {raw.size} reals, expected {2 * grid.size}")
    return grid, raw[0::2] + 1j * raw[1::2]


def _encode(grid: TorusGrid, values: np.ndarray) -> bytes:
    header = _HEADER.pack(BINARY_MAGIC, BINARY_VERSION, grid.dim, grid.points_per_axis)
    return header + np.ascontiguousarray(values, dtype="<c16").tobytes()


def _decode(payload: bytes) -> Tuple[TorusGrid, np.ndarray]:
    if len(payload) < _HEADER.size:
        raise SerializationError("Binary payload shorter than its header")
    magic, version, dim, n = _HEADER.unpack_from(payload)
    if magic != BINARY_MAGIC:
        raise SerializationError(f"Bad magic {magic!r}")
    if version != BINARY_VERSION:
        raise SerializationError(f"Unsupported binary version {version}")
    grid = TorusGrid(dim, n)
    body = payload[_HEADER.size:]
    if len(body) != 16 * grid.size:
        raise SerializationError(f"Binary body has {len(body)} bytes, expected {16 * grid.size}")
    return grid, np.frombuffer(body, dtype="<c16").reshape(grid.shape)
