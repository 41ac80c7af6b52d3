"""Symbol representations, constructors, seminorms and the twisted-diagonal check.

A symbol is evaluated as ``a.evaluate(x, eta)`` with x of shape (P, dim)
and eta of shape (Q, dim), returning a (P, Q) complex array. Symbols may
carry an exact separable structure a(x, eta) = sum_i c_i(x) g_i(eta),
with each c_i stored through its lattice coefficients dft(c_i).
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft

from .config import settings
from .errors import (
    DerivativeUnavailableError,
    GridMismatchError,
    IndexRangeError,
    InvalidSpecError,
    NonRealInputError,
)
from .grid import GridFunction, SpectralFunction, TorusGrid, dft, idft
from .lpdecomp import PLATEAU_END, DyadicPartition, check_resolved
from .models import SeminormReport, SymbolSpec

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]
Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]
Profile = Callable[[np.ndarray], np.ndarray]

MULTIPLIER_NODES = 16
FD_ETA_STEP = 2.0 ** -7
# 4th-order central difference for a first derivative
_STENCIL = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))

NONLINEARITIES: Dict[str, Tuple[Callable, Callable]] = {
    "square": (lambda v: 0.5 * v * v, lambda v: v),
    "sin": (np.sin, np.cos),
    "tanh": (np.tanh, lambda v: 1.0 / np.cosh(v) ** 2),
}


@lru_cache(maxsize=None)
def _unit_interval_nodes(count: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(count)
    return 0.5 * (x + 1.0), 0.5 * w


def _chunk_rows(total_rows: int, columns: int) -> int:
    return max(1, min(total_rows, settings.direct_chunk_entries // max(columns, 1)))


def trig_eval(grid: TorusGrid, coeffs: np.ndarray, x: np.ndarray, beta: Optional[MultiIndex] = None) -> np.ndarray:
    """
    D^beta of the trigonometric polynomial with lattice coefficients ``coeffs`` at points x.

    Evaluates (2 pi)^-n sum_xi coeffs(xi) xi^beta exp(i x.xi) over the nonzero coefficients.
    """
    flat = np.asarray(coeffs).ravel()
    nz = np.flatnonzero(flat)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if nz.size == 0:
        return np.zeros(x.shape[0], dtype=np.complex128)
    freqs = grid.lattice_array()[nz].astype(float)
    weights = flat[nz] * (2 * math.pi) ** (-grid.dim)
    if beta is not None:
        for axis, order in enumerate(beta):
            if order:
                weights = weights * freqs[:, axis] ** order
    out = np.empty(x.shape[0], dtype=np.complex128)
    step = _chunk_rows(x.shape[0], nz.size)
    for start in range(0, x.shape[0], step):
        phases = np.exp(1j * (x[start:start + step] @ freqs.T))
        out[start:start + step] = phases @ weights
    return out


@dataclass(frozen=True, eq=False)
class SeparableTerm:
    """One term c(x) g(eta) of an exact symbol structure."""

    x_coeffs: np.ndarray
    profile: Profile
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def __post_init__(self):
        coeffs = np.array(self.x_coeffs, dtype=np.complex128, copy=True)
        coeffs.flags.writeable = False
        object.__setattr__(self, "x_coeffs", coeffs)

    def scaled(self, c: complex) -> "SeparableTerm":
        return replace(self, x_coeffs=self.x_coeffs * c)

    def profile_derivative(self, alpha: MultiIndex) -> Optional[Profile]:
        """D^alpha g (D = -i d) for |alpha| <= 1, else None."""
        order = sum(alpha)
        if order == 0:
            return self.profile
        if order > 1 or self.gradient is None:
            return None
        axis = alpha.index(1)
        return lambda eta: -1j * self.gradient(eta)[:, axis]


@dataclass(frozen=True, eq=False)
class Symbol:
    """
    A symbol a(x, eta) of order ``order``.

    ``func`` is the defining formula. ``structure`` (optional) is an exact
    separable form on ``grid``; ``derivatives`` (optional) maps (beta, alpha)
    to a closure for D^beta_x D^alpha_eta a or None.
    """

    name: str
    order: float
    dim: int
    func: Evaluator
    structure: Optional[Tuple[SeparableTerm, ...]] = None
    grid: Optional[TorusGrid] = None
    derivatives: Optional[Callable[[MultiIndex, MultiIndex], Optional[Evaluator]]] = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def _points(self, x, eta) -> Tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        if x.shape[1] != self.dim or eta.shape[1] != self.dim:
            raise GridMismatchError(f"Symbol {self.name} is {self.dim}-dimensional")
        return x, eta

    def evaluate(self, x, eta) -> np.ndarray:
        """a(x_p, eta_q) as a (P, Q) complex array."""
        x, eta = self._points(x, eta)
        out = np.asarray(self.func(x, eta), dtype=np.complex128)
        if out.shape != (x.shape[0], eta.shape[0]):
            out = np.broadcast_to(out, (x.shape[0], eta.shape[0])).copy()
        return out

    def structure_evaluate(self, x, eta, beta: Optional[MultiIndex] = None,
                           alpha: Optional[MultiIndex] = None) -> np.ndarray:
        """Evaluate D^beta_x D^alpha_eta through the separable structure."""
        if self.structure is None:
            raise InvalidSpecError(f"Symbol {self.name} has no exact structure")
        x, eta = self._points(x, eta)
        alpha = alpha or (0,) * self.dim
        out = np.zeros((x.shape[0], eta.shape[0]), dtype=np.complex128)
        for term in self.structure:
            g = term.profile_derivative(alpha)
            if g is None:
                raise DerivativeUnavailableError(f"Term {term.label} lacks D^{alpha} of its profile")
            out += np.outer(trig_eval(self.grid, term.x_coeffs, x, beta), g(eta))
        return out

    def derivative(self, beta: MultiIndex, alpha: MultiIndex) -> Optional[Evaluator]:
        """Closure for D^beta_x D^alpha_eta a, or None when no analytic form exists."""
        beta, alpha = tuple(beta), tuple(alpha)
        if not any(beta) and not any(alpha):
            return self.evaluate
        if self.derivatives is not None:
            closure = self.derivatives(beta, alpha)
            if closure is not None:
                return closure
        if self.structure is not None and all(t.profile_derivative(alpha) is not None for t in self.structure):
            return lambda x, eta: self.structure_evaluate(x, eta, beta, alpha)
        return None

    def without_structure(self) -> "Symbol":
        return replace(self, structure=None)

    def scaled(self, c: complex) -> "Symbol":
        func = self.func
        derivatives = self.derivatives
        structure = tuple(t.scaled(c) for t in self.structure) if self.structure else None
        scaled_derivs = None
        if derivatives is not None:
            def scaled_derivs(beta, alpha):
                closure = derivatives(beta, alpha)
                return None if closure is None else (lambda x, eta: c * closure(x, eta))
        return replace(self, func=lambda x, eta: c * func(x, eta), structure=structure, derivatives=scaled_derivs)

    def with_cutoff(self, cutoff: Profile, label: str) -> "Symbol":
        """a(x, eta) * cutoff(eta); analytic derivative closures are dropped."""
        func = self.func
        structure = None
        if self.structure is not None:
            structure = tuple(
                SeparableTerm(t.x_coeffs, (lambda eta, g=t.profile: g(eta) * cutoff(eta)), None, t.label)
                for t in self.structure
            )
        return replace(
            self,
            name=f"{self.name}*{label}",
            func=lambda x, eta: func(x, eta) * cutoff(eta)[None, :],
            structure=structure,
            derivatives=None,
        )

    def max_structure_residual(self, x, eta) -> float:
        """max |eval - structure| relative to max |eval| on the given samples."""
        direct = self.evaluate(x, eta)
        via_structure = self.structure_evaluate(x, eta)
        scale = max(float(np.max(np.abs(direct))), 1e-300)
        return float(np.max(np.abs(direct - via_structure))) / scale


# -- constructors ------------------------------------------------------------

def _delta(grid: TorusGrid, frequency, weight: complex = 1.0) -> np.ndarray:
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    coeffs[grid.index_of(frequency)] = weight * (2 * math.pi) ** grid.dim
    return coeffs


def _radius_sq(eta: np.ndarray) -> np.ndarray:
    return np.sum(eta ** 2, axis=-1)


def constant_symbol(grid: TorusGrid, value: complex = 1.0) -> Symbol:
    """The x- and eta-independent symbol; value 1 gives the identity operator."""
    zero = (0,) * grid.dim

    def derivatives(beta, alpha):
        return lambda x, eta: np.zeros((np.atleast_2d(x).shape[0], np.atleast_2d(eta).shape[0]), dtype=np.complex128)

    term = SeparableTerm(
        _delta(grid, zero, value),
        lambda eta: np.full(eta.shape[0], value, dtype=np.complex128),
        lambda eta: np.zeros(eta.shape),
        "constant",
    )
    name = "identity" if value == 1 else "constant"
    return Symbol(
        name=name,
        order=0.0,
        dim=grid.dim,
        func=lambda x, eta: np.full((x.shape[0], eta.shape[0]), value, dtype=np.complex128),
        structure=(term,),
        grid=grid,
        derivatives=derivatives,
        params={"value": value},
    )


def multiplier_symbol(grid: TorusGrid, profile: Profile, order: float, name: str = "multiplier",
                      gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> Symbol:
    """x-independent symbol a(x, eta) = profile(eta)."""
    term = SeparableTerm(_delta(grid, (0,) * grid.dim), profile, gradient, name)
    return Symbol(
        name=name,
        order=order,
        dim=grid.dim,
        func=lambda x, eta: np.ones((x.shape[0], 1)) * profile(eta)[None, :],
        structure=(term,),
        grid=grid,
        params={},
    )


def bessel_symbol(grid: TorusGrid, d: float) -> Symbol:
    """(1 + |eta|^2)^(d/2), an x-independent S^d_{1,0} symbol with analytic derivatives up to order 2."""

    def profile(eta):
        return (1.0 + _radius_sq(eta)) ** (d / 2)

    def gradient(eta):
        return d * eta * ((1.0 + _radius_sq(eta)) ** (d / 2 - 1))[:, None]

    def derivatives(beta, alpha):
        if any(beta):
            return lambda x, eta: np.zeros((np.atleast_2d(x).shape[0], np.atleast_2d(eta).shape[0]), dtype=np.complex128)
        if sum(alpha) != 2:
            return None
        axes = [a for a, o in enumerate(alpha) for _ in range(o)]

        def second(x, eta):
            x, eta = np.atleast_2d(x), np.atleast_2d(eta)
            w = 1.0 + _radius_sq(eta)
            delta = 1.0 if axes[0] == axes[1] else 0.0
            hess = d * w ** (d / 2 - 2) * (w * delta + (d - 2) * eta[:, axes[0]] * eta[:, axes[1]])
            return -np.ones((x.shape[0], 1)) * hess[None, :]

        return second

    sym = multiplier_symbol(grid, profile, d, "bessel", gradient)
    return replace(sym, derivatives=derivatives, params={"d": d})


def ching_symbol(d: float, part: DyadicPartition) -> Symbol:
    """
    a(x, eta) = sum_{j=1}^{J_max} 2^(jd) Phi_j(eta) exp(-i x_n 2^j).

    Terms beyond J_max vanish on every resolved input.
    """
    grid = part.grid
    dim = grid.dim
    levels = range(1, part.J_max + 1)
    terms = []
    for j in levels:
        freq = [0] * dim
        freq[-1] = -(2 ** j)
        weight = 2.0 ** (j * d)
        terms.append(SeparableTerm(
            _delta(grid, freq),
            lambda eta, j=j, w=weight: w * part.phi_at(j, eta),
            lambda eta, j=j, w=weight: w * part.phi_gradient(j, eta),
            f"ching_{j}",
        ))

    def func(x, eta):
        out = np.zeros((x.shape[0], eta.shape[0]), dtype=np.complex128)
        for j in levels:
            out += np.outer(np.exp(-1j * x[:, -1] * 2.0 ** j), 2.0 ** (j * d) * part.phi_at(j, eta))
        return out

    return Symbol(name="ching", order=d, dim=dim, func=func, structure=tuple(terms), grid=grid,
                  params={"d": d, "J_max": part.J_max})


def reduced_symbol(multipliers: Sequence[GridFunction], part: DyadicPartition, name: str = "reduced",
                   order: float = 0.0) -> Symbol:
    """
    b(x, eta) = sum_j m_j(x) Phi_j(eta).

    Raises:
        IndexRangeError: If more than J_max + 1 multipliers are given
    """
    if len(multipliers) > part.J_max + 1:
        raise IndexRangeError(f"{len(multipliers)} multipliers exceed J_max + 1 = {part.J_max + 1}")
    grid = part.grid
    terms = tuple(
        SeparableTerm(
            dft(m).coeffs,
            lambda eta, j=j: part.phi_at(j, eta),
            lambda eta, j=j: part.phi_gradient(j, eta),
            f"{name}_{j}",
        )
        for j, m in enumerate(multipliers)
    )

    def func(x, eta):
        out = np.zeros((x.shape[0], eta.shape[0]), dtype=np.complex128)
        for j, term in enumerate(terms):
            out += np.outer(trig_eval(grid, term.x_coeffs, x), part.phi_at(j, eta))
        return out

    return Symbol(name=name, order=order, dim=grid.dim, func=func, structure=terms, grid=grid,
                  params={"levels": len(multipliers)})


def multiplier_functions(F_prime: Callable, u: GridFunction, part: DyadicPartition) -> List[GridFunction]:
    """m_j(x) = integral_0^1 F'(u^{j-1}(x) + t u_j(x)) dt by 16-point Gauss-Legendre."""
    if not u.is_real():
        raise NonRealInputError("Nonlinear symbols need a real-valued u")
    U = dft(u)
    check_resolved(U, part)
    nodes, weights = _unit_interval_nodes(MULTIPLIER_NODES)
    out = []
    for j in range(part.J_max + 1):
        low = idft(SpectralFunction(u.grid, part.psi(j - 1) * U.coeffs)).values.real
        high = idft(SpectralFunction(u.grid, part.phi(j) * U.coeffs)).values.real
        m = np.zeros(u.grid.shape)
        for t, w in zip(nodes, weights):
            m += w * np.asarray(F_prime(low + t * high), dtype=float)
        out.append(GridFunction(u.grid, m))
    return out


def nonlinear_symbol(F_prime: Callable, u: GridFunction, part: DyadicPartition) -> Symbol:
    """
    a_u(x, eta) = sum_j m_j(x) Phi_j(eta), the linearisation of F at u.

    For resolved real u, a_u(x, D)u = F(u) - F(0).

    Raises:
        NonRealInputError: If u is not real-valued
    """
    sym = reduced_symbol(multiplier_functions(F_prime, u, part), part, name="nonlinear")
    return sym


def smooth_symbol(grid: TorusGrid, seed: int, max_frequency: int = 3) -> Symbol:
    """
    Random S^0_{1,0} test symbol with low x-frequencies.

    Three terms c_i(x) h_i(eta) with h_0 = 1, h_1 = <eta>^-1, h_2 = eta_n <eta>^-1.
    """
    rng = np.random.default_rng(seed)
    lattice = grid.lattice()
    low = np.ones(grid.shape, dtype=bool)
    for axis in lattice:
        low &= np.abs(axis) <= max_frequency
    radius = grid.frequency_norm()

    def random_coeffs():
        coeffs = np.zeros(grid.shape, dtype=np.complex128)
        draws = rng.standard_normal(int(low.sum())) + 1j * rng.standard_normal(int(low.sum()))
        coeffs[low] = draws / (1.0 + radius[low] ** 2)
        peak = float(np.max(np.abs(idft(SpectralFunction(grid, coeffs)).values)))
        return coeffs / peak

    def bracket(eta):
        return np.sqrt(1.0 + _radius_sq(eta))

    profiles = [
        (lambda eta: np.ones(eta.shape[0]), lambda eta: np.zeros(eta.shape)),
        (lambda eta: 1.0 / bracket(eta), lambda eta: -eta / bracket(eta)[:, None] ** 3),
        (lambda eta: eta[:, -1] / bracket(eta),
         lambda eta: (np.eye(eta.shape[1])[-1][None, :] / bracket(eta)[:, None]
                      - eta[:, -1:] * eta / bracket(eta)[:, None] ** 3)),
    ]
    terms = tuple(SeparableTerm(random_coeffs(), g, dg, f"smooth_{i}") for i, (g, dg) in enumerate(profiles))

    def func(x, eta):
        out = np.zeros((x.shape[0], eta.shape[0]), dtype=np.complex128)
        for term in terms:
            out += np.outer(trig_eval(grid, term.x_coeffs, x), term.profile(eta))
        return out

    return Symbol(name="smooth", order=0.0, dim=grid.dim, func=func, structure=terms, grid=grid,
                  params={"seed": seed})


def twisted_cutoff_symbol(C: float, part: DyadicPartition, seed: int, per_level: int = 2) -> Symbol:
    """
    Random type 1,1 symbol whose partial transform vanishes where C(|xi + eta| + 1) <= |eta|.

    Level k carries x-frequencies xi with |xi| in [0.65, 1.1] 2^k (the first one is
    -2^k e_n) and eta-profiles Phi_k(eta) chi(C(|xi + eta| + 1)/|eta|), chi(r) = 1 - Psi(1.1 r).
    """
    if C < 1:
        raise ValueError(f"Cone constant must be >= 1, got {C}")
    grid = part.grid
    rng = np.random.default_rng(seed)
    lattice = grid.lattice_array()
    radius = grid.frequency_norm().ravel()
    profile_fn = part.profile
    terms = []
    for k in range(1, part.J_max + 1):
        core = np.flatnonzero((radius >= 0.65 * 2 ** k) & (radius <= PLATEAU_END * 2 ** k))
        first = [0] * grid.dim
        first[-1] = -(2 ** k)
        chosen = [tuple(first)]
        extra = rng.choice(core, size=min(per_level - 1, core.size), replace=False) if per_level > 1 else []
        chosen += [tuple(int(c) for c in lattice[i]) for i in extra]
        for xi in chosen:
            weight = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2 * per_level)
            xi_vec = np.array(xi, dtype=float)

            def g(eta, k=k, xi_vec=xi_vec):
                eta_norm = np.sqrt(_radius_sq(eta))
                safe = np.where(eta_norm > 0, eta_norm, 1.0)
                ratio = np.where(eta_norm > 0, C * (np.sqrt(_radius_sq(eta + xi_vec)) + 1.0) / safe, np.inf)
                return part.phi_at(k, eta) * (1.0 - profile_fn(PLATEAU_END * ratio))

            terms.append(SeparableTerm(_delta(grid, xi, weight), g, None, f"cutoff_{k}_{xi}"))
    terms = tuple(terms)

    def func(x, eta):
        out = np.zeros((x.shape[0], eta.shape[0]), dtype=np.complex128)
        for term in terms:
            out += np.outer(trig_eval(grid, term.x_coeffs, x), term.profile(eta))
        return out

    return Symbol(name="cutoff", order=0.0, dim=grid.dim, func=func, structure=terms, grid=grid,
                  params={"C": C, "seed": seed, "per_level": per_level})


def sampled_symbol(grid: TorusGrid, values: np.ndarray, order: float = 0.0, name: str = "sampled") -> Symbol:
    """
    Symbol known only on grid points x lattice, x-major: values[p, q] = a(x_p, eta_q).

    Raises:
        GridMismatchError: On wrong sample count, or when evaluated off the grid
    """
    table = np.asarray(values, dtype=np.complex128)
    if table.size != grid.size ** 2:
        raise GridMismatchError(f"Sampled symbol needs {grid.size ** 2} values, got {table.size}")
    table = table.reshape(grid.size, grid.size)
    n = grid.points_per_axis
    strides = np.array([n ** (grid.dim - 1 - a) for a in range(grid.dim)])

    def to_index(points: np.ndarray, scale: float) -> np.ndarray:
        cells = points / scale
        nearest = np.rint(cells)
        if np.max(np.abs(cells - nearest), initial=0.0) > 1e-6:
            raise GridMismatchError("Sampled symbols are only defined on grid points and lattice frequencies")
        return (nearest.astype(np.int64) % n) @ strides

    def func(x, eta):
        return table[np.ix_(to_index(x, grid.spacing), to_index(eta, 1.0))]

    return Symbol(name=name, order=order, dim=grid.dim, func=func, grid=grid, params={})


# -- partial Fourier transform in x ----------------------------------------

class PartialTransform:
    """
    a^(xi, eta) = F_{x -> xi} a(x, eta) on lattice x lattice.

    Columns are indexed by flat lattice indices of eta (FFT order); rows by
    flat lattice indices of xi. Structured symbols are transformed analytically.
    """

    def __init__(self, grid: TorusGrid, symbol: Symbol):
        self.grid = grid
        self.symbol = symbol
        self.exact = symbol.structure is not None and symbol.grid == grid
        self._lattice = grid.lattice_array()

    def row_support(self) -> np.ndarray:
        """Flat xi indices that can be nonzero."""
        if not self.exact:
            return np.arange(self.grid.size)
        mask = np.zeros(self.grid.size, dtype=bool)
        for term in self.symbol.structure:
            mask |= term.x_coeffs.ravel() != 0
        return np.flatnonzero(mask)

    def columns(self, eta_index: np.ndarray, rows: Optional[np.ndarray] = None) -> np.ndarray:
        """a^(xi_rows, eta) for the given eta indices; shape (len(rows), len(eta_index))."""
        eta_index = np.asarray(eta_index, dtype=np.int64)
        eta = self._lattice[eta_index].astype(float)
        rows = np.arange(self.grid.size) if rows is None else rows
        if self.exact:
            out = np.zeros((rows.size, eta_index.size), dtype=np.complex128)
            for term in self.symbol.structure:
                coeffs = term.x_coeffs.ravel()[rows]
                if np.any(coeffs):
                    out += np.outer(coeffs, term.profile(eta))
            return out
        out = np.empty((rows.size, eta_index.size), dtype=np.complex128)
        step = _chunk_rows(eta_index.size, self.grid.size)
        points = self.grid.point_array()
        axes = tuple(range(self.grid.dim))
        for start in range(0, eta_index.size, step):
            block = self.symbol.evaluate(points, eta[start:start + step])
            block = block.reshape(*self.grid.shape, -1)
            spectrum = sfft.fftn(block, axes=axes, workers=settings.fft_workers) * self.grid.cell_measure
            out[:, start:start + step] = spectrum.reshape(self.grid.size, -1)[rows]
        return out

    def column(self, eta) -> SpectralFunction:
        index = np.ravel_multi_index(self.grid.index_of(eta), self.grid.shape)
        return SpectralFunction(self.grid, self.columns(np.array([index]))[:, 0].reshape(self.grid.shape))

    def __getitem__(self, eta) -> SpectralFunction:
        return self.column(eta)

    def dense(self) -> np.ndarray:
        return self.columns(np.arange(self.grid.size))


def partial_ft_x(a: Symbol, grid: TorusGrid) -> PartialTransform:
    """Partial Fourier transform in x; analytic when ``a`` carries exact structure on ``grid``."""
    return PartialTransform(grid, a)


# -- seminorms ---------------------------------------------------------------

def _multi_indices(dim: int, max_order: int) -> List[MultiIndex]:
    return [idx for idx in itertools.product(range(max_order + 1), repeat=dim) if sum(idx) <= max_order]


def _x_difference(fn: Evaluator, axis: int, step: float) -> Evaluator:
    def diff(x, eta):
        total = 0.0
        for shift, weight in _STENCIL:
            moved = np.array(x, dtype=float, copy=True)
            moved[:, axis] += shift * step
            total = total + weight * fn(moved, eta)
        return total / step
    return diff


def _eta_difference(fn: Evaluator, axis: int) -> Evaluator:
    def diff(x, eta):
        steps = FD_ETA_STEP * (1.0 + np.sqrt(_radius_sq(eta)))
        total = 0.0
        for shift, weight in _STENCIL:
            moved = np.array(eta, dtype=float, copy=True)
            moved[:, axis] += shift * steps
            total = total + weight * fn(x, moved)
        return total / steps[None, :]
    return diff


def finite_difference(a: Symbol, beta: MultiIndex, alpha: MultiIndex, grid: TorusGrid) -> Evaluator:
    """
    D^beta_x D^alpha_eta a by nested 4th-order central differences.

    x-step is one grid cell, eta-step 2^-7 (1 + |eta|).
    """
    fn: Evaluator = a.evaluate
    for axis, order in enumerate(beta):
        for _ in range(order):
            fn = _x_difference(fn, axis, grid.spacing)
    for axis, order in enumerate(alpha):
        for _ in range(order):
            fn = _eta_difference(fn, axis)
    factor = (-1j) ** (sum(alpha) + sum(beta))
    return lambda x, eta: factor * fn(np.atleast_2d(x), np.atleast_2d(eta))


def seminorm(a: Symbol, l: int, m: int, grid: TorusGrid, allow_fd: bool = False, x_stride: int = 1) -> SeminormReport:
    """
    Sampled estimate of mu_{l,m}(a).

    sup over |alpha| <= l, |beta| <= m, grid points x and lattice eta with
    |eta| <= N/2 of (1 + |eta|)^-(d - |alpha| + |beta|) |D^beta_x D^alpha_eta a|.

    Raises:
        DerivativeUnavailableError: If a closure is missing and ``allow_fd`` is False
    """
    x = grid.point_array()[::x_stride]
    lattice = grid.lattice_array().astype(float)
    eta = lattice[np.sqrt(_radius_sq(lattice)) <= grid.nyquist]
    bracket = 1.0 + np.sqrt(_radius_sq(eta))
    used_fd = False
    value = 0.0
    for alpha in _multi_indices(grid.dim, l):
        for beta in _multi_indices(grid.dim, m):
            closure = a.derivative(beta, alpha)
            if closure is None:
                if not allow_fd:
                    raise DerivativeUnavailableError(
                        f"No closure for D^{beta}_x D^{alpha}_eta of {a.name}; enable finite differences"
                    )
                closure = finite_difference(a, beta, alpha, grid)
                used_fd = True
            weight = bracket ** (-(a.order - sum(alpha) + sum(beta)))
            step = _chunk_rows(x.shape[0], eta.shape[0])
            for start in range(0, x.shape[0], step):
                block = np.abs(closure(x[start:start + step], eta)) * weight[None, :]
                value = max(value, float(np.max(block)))
    logger.debug(f"mu_{l},{m}({a.name}) ~ {value:.6g} (fd={used_fd})")
    return SeminormReport(l=l, m=m, value=value, x_samples=int(x.shape[0]), eta_samples=int(eta.shape[0]),
                          used_finite_differences=used_fd)


# -- twisted diagonal ----------------------------------------------------------

@dataclass(frozen=True)
class TwistedDiagonalResult:
    passed: bool
    witnesses: Tuple[Tuple[Tuple[int, ...], Tuple[int, ...]], ...]
    violations: int
    worst_ratio: float


def twisted_diagonal_check(a: Symbol, C: float, grid: TorusGrid, rel_threshold: float,
                           max_witnesses: int = 32) -> TwistedDiagonalResult:
    """
    Check that a^(xi, eta) is negligible where C(|xi + eta| + 1) <= |eta|.

    Negligible means at most ``rel_threshold`` times the global max of |a^|.
    Witnesses are (xi, eta) pairs of the largest violations.
    """
    if C < 1:
        raise ValueError(f"Cone constant must be >= 1, got {C}")
    transform = partial_ft_x(a, grid)
    rows = transform.row_support()
    lattice = grid.lattice_array()
    xi = lattice[rows].astype(float)
    step = _chunk_rows(grid.size, max(rows.size, 1))
    chunks = [np.arange(s, min(s + step, grid.size)) for s in range(0, grid.size, step)]

    peak = 0.0
    for cols in chunks:
        peak = max(peak, float(np.max(np.abs(transform.columns(cols, rows)), initial=0.0)))
    if peak == 0.0:
        return TwistedDiagonalResult(True, (), 0, 0.0)

    found: List[Tuple[float, Tuple[int, ...], Tuple[int, ...]]] = []
    count = 0
    worst = 0.0
    for cols in chunks:
        eta = lattice[cols].astype(float)
        magnitude = np.abs(transform.columns(cols, rows))
        sums = np.sqrt(np.sum((xi[:, None, :] + eta[None, :, :]) ** 2, axis=-1))
        region = C * (sums + 1.0) <= np.sqrt(_radius_sq(eta))[None, :]
        bad = region & (magnitude > rel_threshold * peak)
        if bad.any():
            count += int(bad.sum())
            worst = max(worst, float(np.max(magnitude[bad])) / peak)
            r_idx, c_idx = np.nonzero(bad)
            for r, c in zip(r_idx, c_idx):
                found.append((float(magnitude[r, c]), tuple(int(v) for v in lattice[rows[r]]),
                              tuple(int(v) for v in lattice[cols[c]])))
            found.sort(key=lambda item: -item[0])
            del found[max_witnesses:]
    witnesses = tuple((f[1], f[2]) for f in found)
    logger.debug(f"Twisted-diagonal check C={C} on {a.name}: {count} violations")
    return TwistedDiagonalResult(count == 0, witnesses, count, worst)


# -- factory -----------------------------------------------------------------

def random_real_input(grid: TorusGrid, part: DyadicPartition, seed: int, amplitude: float = 1.0) -> GridFunction:
    """Real resolved grid function with Gaussian coefficients decaying like (1 + |xi|)^-2."""
    rng = np.random.default_rng(seed)
    radius = grid.frequency_norm()
    inside = part.resolved_mask()
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    count = int(inside.sum())
    coeffs[inside] = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / (1.0 + radius[inside]) ** 2
    values = idft(SpectralFunction(grid, coeffs)).values.real
    values = amplitude * values / float(np.max(np.abs(values)))
    return GridFunction(grid, values)


def build_symbol(spec: SymbolSpec, part: DyadicPartition, seed: Optional[int] = None) -> Symbol:
    """
    Construct a symbol from its named spec.

    Raises:
        InvalidSpecError: For unknown names, unknown nonlinearities or sampled symbols
    """
    grid = part.grid
    seed = spec.seed if spec.seed is not None else (seed if seed is not None else settings.default_seed)
    rng = np.random.default_rng(seed)
    if spec.name == "identity":
        return constant_symbol(grid, 1.0)
    if spec.name == "constant":
        return constant_symbol(grid, spec.value)
    if spec.name == "bessel":
        return bessel_symbol(grid, spec.d)
    if spec.name == "ching":
        return ching_symbol(spec.d, part)
    if spec.name == "smooth":
        return smooth_symbol(grid, seed)
    if spec.name == "reduced":
        multipliers = []
        for j in range(min(spec.count, part.J_max + 1)):
            multipliers.append(random_real_input(grid, part, int(rng.integers(2**31)), amplitude=1.0))
        return reduced_symbol(multipliers, part)
    if spec.name == "nonlinear":
        if spec.function not in NONLINEARITIES:
            raise InvalidSpecError(f"Unknown nonlinearity {spec.function!r}; choose from {sorted(NONLINEARITIES)}")
        _, F_prime = NONLINEARITIES[spec.function]
        return nonlinear_symbol(F_prime, random_real_input(grid, part, seed), part)
    if spec.name == "cutoff":
        return twisted_cutoff_symbol(spec.C, part, seed)
    raise InvalidSpecError(f"Symbol {spec.name!r} must be loaded from a sample file")
