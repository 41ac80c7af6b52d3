"""Experiment probes: the theta_N counterexample family, boundedness ratios and Marschall ratios."""

import logging
import math
import uuid
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import settings
from .errors import GridMismatchError, InadmissibleFamilyError, IndexRangeError
from .grid import GridFunction, SpectralFunction, TorusGrid, dft, idft, inner, lp_norm
from .lpdecomp import CUTOFF_START, PLATEAU_END, DyadicPartition
from .models import (
    BoundednessReport,
    CheckResult,
    Command,
    NormKind,
    NormSpec,
    Report,
    RunStatus,
)
from .paradiff import apply, operator_apply, relative_l2_error
from .spaces import hom_besov_rows, maximal, norm
from .symbols import SeparableTerm, Symbol, ching_symbol, trig_eval

logger = logging.getLogger(__name__)

Number = Union[Fraction, float]

BOUNDED_SPREAD = 1.1
IDENTITY_TOLERANCE = 1e-10
PAIRING_TOLERANCE = 1e-9
NORM_TOLERANCE = 1e-6


# -- exact references ------------------------------------------------------------

def harmonic_sum(N: int) -> Fraction:
    """sum_{j=N}^{N^2} 1/j exactly."""
    return sum((Fraction(1, j) for j in range(N, N * N + 1)), Fraction(0))


def power_sum(N: int, q: float) -> Number:
    """
    sum_{j=N}^{N^2} j^-q.

    Exact for integer q; for q = inf the l_inf value 1/N is returned in place of
    the sum so that closed_form_norm stays a single formula.
    """
    if math.isinf(q):
        return Fraction(1, N)
    if float(q).is_integer():
        return sum((Fraction(1, j ** int(q)) for j in range(N, N * N + 1)), Fraction(0))
    return math.fsum(j ** -q for j in range(N, N * N + 1))


def _lq_of_weights(N: int, q: float) -> float:
    """(sum_{j=N}^{N^2} j^-q)^(1/q), or 1/N for q = inf."""
    total = power_sum(N, q)
    if math.isinf(q):
        return float(total)
    return float(total) ** (1.0 / q)


def closed_form_norm(theta_norm: float, N: int, q: float) -> float:
    """||theta||_t (sum_j j^-q)^(1/q): the F^d_{t,q} and B^d_{t,q} norms of theta_N."""
    return theta_norm * _lq_of_weights(N, q)


def growth_reference(N: int, q: float) -> float:
    """(sum 1/j) / (sum j^-q)^(1/q): pairing growth over the norm of theta_N."""
    return float(harmonic_sum(N)) / _lq_of_weights(N, q)


def exact_growth_table(N_values: Sequence[int], q_list: Sequence[float]) -> List[Dict[str, float]]:
    """Growth references for arbitrary N (not limited by any grid)."""
    rows = []
    for N in N_values:
        row: Dict[str, float] = {"N": N, "harmonic_sum": float(harmonic_sum(N))}
        for q in q_list:
            row[f"ratio_q={q:g}"] = growth_reference(N, q)
        rows.append(row)
    return rows


# -- theta family ----------------------------------------------------------------

def base_theta_coeffs(grid: TorusGrid, r_theta: int) -> np.ndarray:
    """theta^(xi) = (2 pi)^n (1 - |xi|^2/(r+1)^2)^2 on |xi| <= r; r = 0 gives theta = 1."""
    radius = grid.frequency_norm()
    bump = (1.0 - radius ** 2 / (r_theta + 1) ** 2) ** 2
    return np.where(radius <= r_theta, bump, 0.0) * (2 * math.pi) ** grid.dim


def check_family(N_range: Sequence[int], r_theta: int, part: DyadicPartition) -> None:
    """
    Raises:
        InadmissibleFamilyError: Unless 1 <= N, N^2 <= J_max and r_theta = 0 or r_theta <= 2^N / 20
    """
    if not N_range:
        raise InadmissibleFamilyError("Empty family index range")
    for N in N_range:
        if N < 1:
            raise InadmissibleFamilyError(f"Family index N={N} must be >= 1")
        if N * N > part.J_max:
            raise InadmissibleFamilyError(f"N={N} needs N^2={N * N} <= J_max={part.J_max}")
        if r_theta > 0 and r_theta > 2 ** N / 20:
            raise InadmissibleFamilyError(f"theta radius {r_theta} exceeds 2^N/20 for N={N}")


@dataclass(frozen=True, eq=False)
class ThetaFamily:
    """theta_N with theta_N^ = sum_{j=N}^{N^2} 2^(-jd)/j theta^(xi - 2^j e_n)."""

    d: float
    N_range: Tuple[int, ...]
    r_theta: int
    theta: GridFunction
    members: Dict[int, GridFunction]

    @property
    def grid(self) -> TorusGrid:
        return self.theta.grid

    def pairing_function(self) -> GridFunction:
        """phi = conj(theta) / ||theta||_2^2, so that <theta, phi> = 1."""
        return GridFunction(self.grid, np.conj(self.theta.values) / lp_norm(self.theta, 2.0) ** 2)

    def closed_form_output(self, N: int) -> GridFunction:
        """(sum_{j=N}^{N^2} 1/j) theta, the Ching output on theta_N."""
        return float(harmonic_sum(N)) * self.theta


def build_theta_family(d: float, N_range: Sequence[int], r_theta: int, part: DyadicPartition) -> ThetaFamily:
    """
    Assemble theta_N spectrally for each N.

    Raises:
        InadmissibleFamilyError: For N < 1, N^2 > J_max or a theta radius that is too wide
    """
    check_family(N_range, r_theta, part)
    grid = part.grid
    base = base_theta_coeffs(grid, r_theta)
    axes = tuple(range(grid.dim))
    members = {}
    for N in N_range:
        coeffs = np.zeros(grid.shape, dtype=np.complex128)
        for j in range(N, N * N + 1):
            shift = [0] * grid.dim
            shift[-1] = 2 ** j
            coeffs += (2.0 ** (-j * d) / j) * np.roll(base, shift=shift, axis=axes)
        members[N] = idft(SpectralFunction(grid, coeffs))
    theta = idft(SpectralFunction(grid, base))
    logger.debug(f"Built theta family d={d} N={list(N_range)} r={r_theta} on {part}")
    return ThetaFamily(d=d, N_range=tuple(N_range), r_theta=r_theta, theta=theta, members=members)


def _family_spec(t: float, q: float, s: float) -> NormSpec:
    if math.isinf(t):
        return NormSpec(kind=NormKind.BESOV, s=s, p=t, q=q)
    return NormSpec(kind=NormKind.TRIEBEL_LIZORKIN, s=s, p=t, q=q)


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / abs(reference) if reference else abs(value)


def counterexample_run(d: float, N_range: Sequence[int], q_list: Sequence[float], part: DyadicPartition,
                       t_list: Sequence[float] = (1.0, 2.0, math.inf), r_theta: int = 0) -> Report:
    """
    Reproduce the Ching divergence on theta_N.

    For each N: the operator identity a(x,D) theta_N = (sum 1/j) theta, the pairing
    with phi, the F/B norms of theta_N against their closed forms, and the ratio
    pairing over normalised norm against the exact growth reference.
    """
    family = build_theta_family(d, N_range, r_theta, part)
    symbol = ching_symbol(d, part)
    phi = family.pairing_function()
    checks: List[CheckResult] = []
    identity_rows, norm_rows, growth_rows = [], [], []
    ratios: Dict[Tuple[float, float], List[float]] = {}

    for N in family.N_range:
        member = family.members[N]
        output = apply(symbol, member, part, keep_spectra=False).total
        expected = family.closed_form_output(N)
        error = relative_l2_error(output, expected)
        pairing = inner(output, phi)
        harmonic = float(harmonic_sum(N))
        pairing_error = _relative(pairing.real, harmonic) + abs(pairing.imag) / harmonic
        checks.append(CheckResult(name=f"ching_identity[N={N}]", passed=error <= IDENTITY_TOLERANCE,
                                  value=error, tolerance=IDENTITY_TOLERANCE))
        checks.append(CheckResult(name=f"pairing[N={N}]", passed=pairing_error <= PAIRING_TOLERANCE,
                                  value=pairing_error, tolerance=PAIRING_TOLERANCE,
                                  detail=f"pairing={pairing.real:.12g}, harmonic={harmonic:.12g}"))
        identity_rows.append({"N": N, "harmonic_sum": harmonic, "pairing": pairing.real, "relative_error": error})

        for t in t_list:
            theta_norm = lp_norm(family.theta, t)
            for q in q_list:
                spec = _family_spec(t, q, d)
                measured = norm(member, spec, part)
                reference = closed_form_norm(theta_norm, N, q)
                norm_error = _relative(measured, reference)
                checks.append(CheckResult(name=f"norm[{spec.label()},N={N}]", passed=norm_error <= NORM_TOLERANCE,
                                          value=norm_error, tolerance=NORM_TOLERANCE))
                ratio = pairing.real * theta_norm / measured
                ratio_error = _relative(ratio, growth_reference(N, q))
                checks.append(CheckResult(name=f"growth[{spec.label()},N={N}]", passed=ratio_error <= NORM_TOLERANCE,
                                          value=ratio_error, tolerance=NORM_TOLERANCE))
                ratios.setdefault((t, q), []).append(ratio)
                norm_rows.append({"N": N, "t": t, "q": q, "space": spec.label(), "norm": measured,
                                  "closed_form": reference, "relative_error": norm_error})
                growth_rows.append({"N": N, "t": t, "q": q, "pairing_over_norm": ratio,
                                    "reference": growth_reference(N, q)})

    if len(family.N_range) > 1:
        for (t, q), series in ratios.items():
            if q == 1:
                spread = max(series) / min(series) - 1.0
                checks.append(CheckResult(name=f"flat[t={t:g},q=1]", passed=spread <= NORM_TOLERANCE,
                                          value=spread, tolerance=NORM_TOLERANCE))
            elif q == 2:
                steps = [b - a for a, b in zip(series, series[1:])]
                checks.append(CheckResult(name=f"increasing[t={t:g},q=2]", passed=min(steps) > 0,
                                          value=min(steps), tolerance=0.0))

    passed = all(c.passed for c in checks)
    logger.info(f"Counterexample d={d} N={list(family.N_range)}: {sum(c.passed for c in checks)}/{len(checks)} checks passed")
    return Report(
        run_id=uuid.uuid4().hex[:12],
        command=Command.COUNTEREXAMPLE,
        status=RunStatus.COMPLETED,
        checks=checks,
        tables={
            "identity": identity_rows,
            "norms": norm_rows,
            "growth": growth_rows,
            "growth_exact": exact_growth_table(list(family.N_range), list(q_list)),
        },
        summary={"d": d, "N_range": list(family.N_range), "passed": passed},
    )


# -- boundedness -----------------------------------------------------------------

def boundedness_target(spec: NormSpec, dim: int, twisted: bool = False) -> NormSpec:
    """
    Target space for an input space spec shifted by d.

    s = 0 -> L_p; Triebel-Lizorkin s > 0 -> F^s_{p,r} with r = q when q > n/(n+s)
    (or the symbol satisfies the twisted-diagonal condition), else r = (n/(n+s) + 1)/2;
    Besov -> B^s_{p,q}.
    """
    if spec.s == 0:
        return NormSpec(kind=NormKind.LEBESGUE, s=0.0, p=spec.p)
    if spec.kind == NormKind.TRIEBEL_LIZORKIN:
        floor = dim / (dim + spec.s)
        r = spec.q if (twisted or spec.q > floor) else (floor + 1.0) / 2.0
        return NormSpec(kind=NormKind.TRIEBEL_LIZORKIN, s=spec.s, p=spec.p, q=r)
    return spec.model_copy()


def _diagnose(ratios: Sequence[float]) -> Tuple[str, float]:
    low, high = min(ratios), max(ratios)
    rate = ratios[-1] / ratios[0] if ratios[0] > 0 else math.inf
    if low > 0 and high / low <= BOUNDED_SPREAD:
        return "bounded", rate
    return "growing", rate


def boundedness_probe(a: Symbol, spec: NormSpec, d: float, inputs: Sequence[GridFunction],
                      part: DyadicPartition, twisted: bool = False,
                      output_part: Optional[DyadicPartition] = None) -> BoundednessReport:
    """
    Ratios ||a(x,D)u||_target / ||u||_source with source = spec shifted by d.

    Inputs are measured on ``part``, images on ``output_part`` (``part`` when
    omitted). A symbol with x-frequencies up to 1.1 2^J moves inputs resolved
    on level J up to 1.1 2^(J+1), so images need one extra level.

    Raises:
        InvalidSpecError: For homogeneous specs
        UnresolvedInputError: If an input is not resolved on ``part`` or its image on ``output_part``
    """
    output_part = output_part or part
    if output_part.grid != part.grid or output_part.J_max < part.J_max:
        raise GridMismatchError("Output partition must share the grid and reach at least J_max")
    source = spec.shifted(d)
    target = boundedness_target(spec, part.grid.dim, twisted)
    ratios = []
    for u in inputs:
        output = operator_apply(a, u)
        ratios.append(norm(output, target, output_part) / norm(u, source, part))
    diagnosis, rate = _diagnose(ratios)
    logger.debug(f"Boundedness {a.name} {source.label()} -> {target.label()}: {diagnosis}, rate {rate:.4f}")
    return BoundednessReport(symbol=a.name, source=source, target=target, d=d, ratios=ratios,
                             sup_ratio=max(ratios), diagnosis=diagnosis, growth_rate=rate)


# -- random inputs ---------------------------------------------------------------

def random_resolved(grid: TorusGrid, part: DyadicPartition, rng: np.random.Generator,
                    spec: Optional[NormSpec] = None, max_level: Optional[int] = None) -> GridFunction:
    """
    Complex Gaussian coefficients on the resolved lattice, corona j weighted by 2^(-sj).

    Normalised to norm 1 in ``spec`` (L_2 when omitted). ``max_level`` limits the
    spectrum to |xi| <= (11/10) 2^max_level.
    """
    level = part.J_max if max_level is None else min(max_level, part.J_max)
    inside = grid.frequency_norm() <= PLATEAU_END * 2.0 ** level
    count = int(inside.sum())
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    coeffs[inside] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    if spec is not None and spec.s:
        weight = sum(2.0 ** (-spec.s * j) * part.phi(j) for j in range(part.J_max + 1))
        coeffs *= weight
    u = idft(SpectralFunction(grid, coeffs))
    scale = norm(u, spec, part) if spec is not None else lp_norm(u, 2.0)
    return (1.0 / scale) * u


def random_band_limited(grid: TorusGrid, R: float, rng: np.random.Generator, real: bool = False) -> GridFunction:
    """Gaussian coefficients on |xi| <= R, L_2-normalised."""
    inside = grid.frequency_norm() <= R
    count = int(inside.sum())
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    coeffs[inside] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    values = idft(SpectralFunction(grid, coeffs)).values
    if real:
        values = values.real
    return GridFunction(grid, values / lp_norm(GridFunction(grid, values), 2.0))


# -- Marschall ratio -------------------------------------------------------------

def _row_geometry(dim: int) -> Tuple[int, float]:
    if dim == 1:
        return settings.marschall_row_points, settings.marschall_row_spacing
    return 128, 1.0 / 16


def _row_points(dim: int) -> Tuple[np.ndarray, float, Tuple[int, ...]]:
    """zeta = spacing * m, m in FFT order on an M^n box; returns (points, spacing, box shape)."""
    M, spacing = _row_geometry(dim)
    freqs = np.fft.fftfreq(M, d=1.0 / M) * spacing
    mesh = np.meshgrid(*([freqs] * dim), indexing="ij")
    return np.stack([axis.ravel() for axis in mesh], axis=-1), spacing, (M,) * dim


def _check_exponent(t: float) -> None:
    if not 0 < t <= 1:
        raise ValueError(f"Maximal exponent t must lie in (0, 1], got {t}")


def marschall_ratios(a: Symbol, v: GridFunction, k: int, t: float, part: DyadicPartition) -> np.ndarray:
    """
    Pointwise |b(x,D)v_k(x)| / (||b(x, 2^k .)||_{Bhom^{n/t}_{1,t}} M_t v_k(x)).

    b = a Psi_k(eta) and v_k = Psi_k(D)v; points where the right side vanishes
    (relative to its maximum) get ratio 0.

    Raises:
        ValueError: If t is outside (0, 1]
    """
    _check_exponent(t)
    grid = v.grid
    n = grid.dim
    profile = part.profile
    scale = 2.0 ** k
    b = a.with_cutoff(lambda eta: profile(np.linalg.norm(eta, axis=-1) / scale), f"Psi_{k}")
    v_k = idft(SpectralFunction(grid, profile(grid.frequency_norm() / scale) * dft(v).coeffs))

    lhs = np.abs(operator_apply(b, v_k).values).ravel()
    zeta, spacing, box = _row_points(n)
    points = grid.point_array()
    row_norms = np.empty(grid.size)
    batch = max(1, settings.direct_chunk_entries // zeta.shape[0])
    for start in range(0, grid.size, batch):
        rows = b.evaluate(points[start:start + batch], scale * zeta)
        rows = rows.reshape(rows.shape[0], *box)
        row_norms[start:start + batch] = hom_besov_rows(rows, n / t, 1.0, t, spacing)
    rhs = row_norms * maximal(v_k, t).values.ravel()
    floor = 1e-14 * float(np.max(rhs)) if rhs.size else 0.0
    ratios = np.zeros(grid.size)
    live = rhs > floor
    ratios[live] = lhs[live] / rhs[live]
    return ratios.reshape(grid.shape)


def marschall_probe(a: Symbol, v: GridFunction, k: int, t: float, part: DyadicPartition) -> Report:
    """Sup of the pointwise Marschall ratio for one (a, v, k, t)."""
    ratios = marschall_ratios(a, v, k, t, part)
    sup = float(np.max(ratios))
    finite = math.isfinite(sup)
    return Report(
        run_id=uuid.uuid4().hex[:12],
        command=Command.PROBE,
        status=RunStatus.COMPLETED,
        checks=[CheckResult(name=f"marschall_finite[k={k},t={t:g}]", passed=finite, value=sup, tolerance=math.inf)],
        tables={"marschall": [{"k": k, "t": t, "sup_ratio": sup, "median_ratio": float(np.median(ratios))}]},
        summary={"symbol": a.name, "k": k, "t": t, "sup_ratio": sup},
    )


def marschall_ensemble(grid: TorusGrid, part: DyadicPartition, k: int, rng: np.random.Generator,
                       terms: int = 4) -> Tuple[Symbol, GridFunction]:
    """
    Random (a, v) coupling x and eta at frequency scale 2^k.

    a = c_0 + sum_i c_i exp(i xi_i . x) cos(omega_i . eta / 2^k + phi_i) with
    |xi_i| <= 2^(k-2) on the lattice, Gaussian weights c_i, omega_i uniform in
    [-2 pi, 2 pi]^n; v^ carries Gaussian coefficients on the whole support of
    Psi(2^-k |eta|).

    Raises:
        GridMismatchError: If ``part`` lives on another grid
        IndexRangeError: If the support of Psi(2^-k |eta|) does not fit on the grid
    """
    if part.grid != grid:
        raise GridMismatchError("Partition and grid differ")
    dim = grid.dim
    scale = 2.0 ** k
    if CUTOFF_START * scale > grid.points_per_axis / 2:
        raise IndexRangeError(f"Level k={k} needs more than N={grid.points_per_axis} points")
    lattice = grid.lattice_array()
    near = np.flatnonzero(np.linalg.norm(lattice, axis=-1) <= scale / 4)
    parts: List[SeparableTerm] = []
    for i in range(terms):
        weight = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2 * terms)
        coeffs = np.zeros(grid.shape, dtype=np.complex128)
        if i == 0:
            coeffs[grid.index_of([0] * dim)] = (2 * math.pi) ** dim
            parts.append(SeparableTerm(coeffs, lambda eta: np.ones(eta.shape[0]), None, f"marschall_{k}_0"))
            continue
        xi = lattice[rng.choice(near)]
        coeffs[grid.index_of(xi)] = weight * (2 * math.pi) ** dim
        omega = rng.uniform(-2 * math.pi, 2 * math.pi, size=dim)
        phase = rng.uniform(0.0, 2 * math.pi)
        profile = (lambda eta, omega=omega, phase=phase: np.cos(eta @ omega / scale + phase))
        parts.append(SeparableTerm(coeffs, profile, None, f"marschall_{k}_{i}"))
    structure = tuple(parts)

    def func(x, eta):
        out = np.zeros((x.shape[0], eta.shape[0]), dtype=np.complex128)
        for term in structure:
            out += np.outer(trig_eval(grid, term.x_coeffs, x), term.profile(eta))
        return out

    symbol = Symbol(name="marschall", order=0.0, dim=dim, func=func, structure=structure, grid=grid,
                    params={"k": k, "terms": terms})
    v = random_band_limited(grid, CUTOFF_START * scale, rng)
    return symbol, v
