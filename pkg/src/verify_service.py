"""Verification suites: each one turns a family of numerical claims into CheckResults."""

import logging
import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .config import settings
from .grid import GridFunction, SpectralFunction, TorusGrid, idft
from .lpdecomp import CutoffProfile, DyadicPartition, build_partition, decompose, max_levels
from .models import CheckResult, RunConfig, SymbolSpec
from .paradiff import apply, direct_apply, piece_apply, relative_l2_error
from .parallel import ordered_map
from .probes import (
    counterexample_run,
    marschall_ensemble,
    marschall_ratios,
    random_band_limited,
    random_resolved,
)
from .spaces import hom_besov_norm_in_xi, maximal, nikolskii_ratio, vector_maximal_ratio
from .spectral import inclusion_check, support_rule_check
from .symbols import (
    NONLINEARITIES,
    Symbol,
    bessel_symbol,
    build_symbol,
    nonlinear_symbol,
    random_real_input,
    seminorm,
    twisted_diagonal_check,
)

logger = logging.getLogger(__name__)

SUITES = (
    "partition",
    "identity",
    "oracle",
    "ching",
    "norms",
    "dichotomy",
    "support-rule",
    "inclusions",
    "scaling",
    "marschall",
    "fefferman-stein",
    "nikolskii",
)

MARSCHALL_DRAWS = 10
LEMMA_SAMPLES = 100
LEMMA_RADIUS = 8.0
FS_MEMBERS = 4
FS_P = (1.5, 2.0, 4.0)
FS_Q = (1.0, 2.0, math.inf)
FS_T = (0.5, 1.0)
NIKOLSKII_R = (4.0, 8.0)
NIKOLSKII_T = (0.5, 0.75, 1.0)

SymbolLoader = Callable[[SymbolSpec, DyadicPartition], Symbol]


@dataclass
class SuiteOutcome:
    """Checks, CSV-ready tables and the seeds a suite consumed."""

    checks: List[CheckResult] = field(default_factory=list)
    tables: Dict[str, List[Dict]] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)

    def extend(self, other: "SuiteOutcome") -> None:
        self.checks.extend(other.checks)
        for name, rows in other.tables.items():
            self.tables.setdefault(name, []).extend(rows)
        self.seeds.extend(s for s in other.seeds if s not in self.seeds)


def shipped_symbol_specs(twisted_c: Optional[float] = None) -> List[SymbolSpec]:
    """Every constructible symbol family with the parameters the suites use."""
    return [
        SymbolSpec(name="identity"),
        SymbolSpec(name="bessel", d=1.0),
        SymbolSpec(name="bessel", d=-1.0),
        SymbolSpec(name="smooth"),
        SymbolSpec(name="reduced", count=5),
        SymbolSpec(name="ching", d=0.0),
        SymbolSpec(name="ching", d=1.0),
        SymbolSpec(name="ching", d=-1.0),
        SymbolSpec(name="nonlinear", function="sin"),
        SymbolSpec(name="cutoff", C=twisted_c or 2.0),
    ]


def _label(spec: SymbolSpec) -> str:
    if spec.name in ("bessel", "ching"):
        return f"{spec.name}(d={spec.d:g})"
    if spec.name == "cutoff":
        return f"cutoff(C={spec.C:g})"
    if spec.name == "nonlinear":
        return f"nonlinear({spec.function})"
    return spec.name


class VerifyService:
    """Runs named verification suites against grids derived from a RunConfig."""

    def __init__(self, symbol_loader: Optional[SymbolLoader] = None):
        self.symbol_loader = symbol_loader or (lambda spec, part: build_symbol(spec, part))
        self._suites: Dict[str, Callable[[RunConfig], SuiteOutcome]] = {
            "partition": self._partition,
            "identity": self._identity,
            "oracle": self._oracle,
            "ching": lambda config: self._counterexample(config, ("ching_identity", "pairing")),
            "norms": lambda config: self._counterexample(config, ("norm",)),
            "dichotomy": lambda config: self._counterexample(config, ("growth", "flat", "increasing")),
            "support-rule": self._support_rule,
            "inclusions": self._inclusions,
            "scaling": self._scaling,
            "marschall": self._marschall,
            "fefferman-stein": self._fefferman_stein,
            "nikolskii": self._nikolskii,
        }

    def run(self, suite: str, config: RunConfig) -> SuiteOutcome:
        """
        Run one suite, or every suite for ``all``.

        Raises:
            ValueError: For an unknown suite name
        """
        names = SUITES if suite == "all" else (suite,)
        outcome = SuiteOutcome()
        for i, name in enumerate(names, start=1):
            if name not in self._suites:
                raise ValueError(f"Unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
            logger.info(f"Suite {i}/{len(names)}: {name}")
            result = self._suites[name](config)
            failed = [c.name for c in result.checks if not c.passed]
            logger.info(f"Suite {name}: {len(result.checks) - len(failed)}/{len(result.checks)} checks passed")
            if failed:
                logger.debug(f"Suite {name} failures: {failed}")
            outcome.extend(result)
        return outcome

    # -- helpers -------------------------------------------------------------

    @staticmethod
    def _seed(config: RunConfig) -> int:
        return config.seed if config.seed is not None else settings.default_seed

    @staticmethod
    def _grid(config: RunConfig, default_points: int, dim: Optional[int] = None) -> Tuple[TorusGrid, DyadicPartition]:
        grid = TorusGrid(dim or config.dim, config.n_points or default_points)
        J = config.j_max if config.j_max is not None else max_levels(grid)
        return grid, build_partition(grid, J)

    def _specs(self, config: RunConfig) -> List[SymbolSpec]:
        if config.symbol is not None:
            return [config.symbol]
        return shipped_symbol_specs(config.twisted_c)

    # -- suites --------------------------------------------------------------

    def _partition(self, config: RunConfig) -> SuiteOutcome:
        grid, part = self._grid(config, 4096 if config.dim == 1 else 256)
        radius = grid.frequency_norm()
        total = part.blocks.sum(axis=0)
        inner = radius <= 2.0 ** part.J_max
        unity = float(np.max(np.abs(total[inner] - 1.0)))
        checks = [CheckResult(name="partition_of_unity", passed=unity <= 1e-12, value=unity, tolerance=1e-12)]

        leaks = 0.0
        for j in range(part.J_max + 1):
            lower = 0.0 if j == 0 else 0.55 * 2.0 ** j
            outside = (radius < lower) | (radius > 1.3 * 2.0 ** j)
            leaks = max(leaks, float(np.max(np.abs(part.phi(j)[outside]), initial=0.0)))
        checks.append(CheckResult(name="block_supports", passed=leaks == 0.0, value=leaks, tolerance=0.0,
                                  detail="Phi_j vanishes exactly outside 11/20 2^j <= |xi| <= 13/10 2^j"))

        seed = self._seed(config)
        u = random_resolved(grid, part, np.random.default_rng(seed))
        error = decompose(u, part).reconstruction_error()
        checks.append(CheckResult(name="reconstruction", passed=error <= 1e-10, value=error, tolerance=1e-10))
        return SuiteOutcome(checks=checks, seeds=[seed])

    def _identity(self, config: RunConfig) -> SuiteOutcome:
        grid, part = self._grid(config, 256)
        identity = build_symbol(SymbolSpec(name="identity"), part)
        seed = self._seed(config)
        rng = np.random.default_rng(seed)
        rows = []
        worst = 0.0
        for sample in range(20):
            u = random_resolved(grid, part, rng)
            error = relative_l2_error(apply(identity, u, part, keep_spectra=False).total, u)
            worst = max(worst, error)
            rows.append({"sample": sample, "relative_error": error})
        check = CheckResult(name="identity_apply", passed=worst <= 1e-10, value=worst, tolerance=1e-10)
        return SuiteOutcome(checks=[check], tables={"identity": rows}, seeds=[seed])

    def _oracle(self, config: RunConfig) -> SuiteOutcome:
        grid, part = self._grid(config, 2048)
        seed = self._seed(config)
        rng = np.random.default_rng(seed)
        checks, rows = [], []
        for spec in self._specs(config):
            symbol = self.symbol_loader(spec, part)
            u = random_resolved(grid, part, rng)
            result = apply(symbol, u, part, keep_spectra=False)
            reference = direct_apply(symbol, u, part)
            error = relative_l2_error(result.total, reference)
            parts_error = relative_l2_error(result.term1 + result.term2 + result.term3, result.total)
            name = _label(spec)
            checks.append(CheckResult(name=f"oracle[{name}]", passed=error <= 1e-8, value=error, tolerance=1e-8))
            checks.append(CheckResult(name=f"term_sum[{name}]", passed=parts_error <= 1e-13,
                                      value=parts_error, tolerance=1e-13))
            rows.append({"symbol": name, "relative_error": error})

        # linearity and the redundant Phi~_k factor, on the first family
        symbol = self.symbol_loader(self._specs(config)[0], part)
        u, v = random_resolved(grid, part, rng), random_resolved(grid, part, rng)
        alpha, beta = 0.75 - 0.5j, -1.25
        combined = apply(symbol, alpha * u + beta * v, part, keep_spectra=False).total
        separate = alpha * apply(symbol, u, part, keep_spectra=False).total + \
            beta * apply(symbol, v, part, keep_spectra=False).total
        linearity = relative_l2_error(combined, separate)
        checks.append(CheckResult(name="linearity", passed=linearity <= 1e-12, value=linearity, tolerance=1e-12))
        k = min(2, part.J_max)
        with_tilde = piece_apply(symbol, 0, k, u, part)
        without = piece_apply(symbol, 0, k, u, part, with_tilde=False)
        redundancy = relative_l2_error(without, with_tilde)
        checks.append(CheckResult(name="tilde_redundancy", passed=redundancy <= 1e-12, value=redundancy,
                                  tolerance=1e-12))

        # linearisation identity a_u(x,D)u = F(u) - F(0)
        for name, (F, F_prime) in NONLINEARITIES.items():
            real_u = random_real_input(grid, part, int(rng.integers(2**31)))
            a_u = nonlinear_symbol(F_prime, real_u, part)
            output = apply(a_u, real_u, part, keep_spectra=False).total
            expected = GridFunction(grid, F(real_u.values.real) - F(np.zeros(grid.shape)))
            error = relative_l2_error(output, expected)
            checks.append(CheckResult(name=f"linearisation[{name}]", passed=error <= 1e-10, value=error,
                                      tolerance=1e-10))

        identity = build_symbol(SymbolSpec(name="identity"), part)
        mu = seminorm(identity, 2, 2, grid).value
        checks.append(CheckResult(name="seminorm[identity]", passed=abs(mu - 1.0) <= 1e-12, value=mu, tolerance=1e-12))
        coarse = TorusGrid(grid.dim, 64)
        bessel = bessel_symbol(coarse, 1.0)
        analytic = seminorm(bessel, 1, 0, coarse).value
        formula_only = replace(bessel, structure=None, derivatives=None)
        numeric = seminorm(formula_only, 1, 0, coarse, allow_fd=True).value
        fd_error = abs(numeric - analytic) / analytic
        checks.append(CheckResult(name="seminorm_fd[bessel]", passed=fd_error <= 1e-5, value=fd_error,
                                  tolerance=1e-5))
        return SuiteOutcome(checks=checks, tables={"oracle": rows}, seeds=[seed])

    def _counterexample(self, config: RunConfig, prefixes: Tuple[str, ...]) -> SuiteOutcome:
        grid, part = self._grid(config, 2048)
        N_range = [N for N in config.n_range if N * N <= part.J_max] or [1]
        outcome = SuiteOutcome()
        for d in sorted({0.0, config.d}):
            report = counterexample_run(d, N_range, config.q_list, part, config.t_list, config.r_theta)
            checks = [c for c in report.checks if c.name.startswith(prefixes)]
            for c in checks:
                c.name = f"{c.name}[d={d:g}]"
            outcome.extend(SuiteOutcome(checks=checks, tables=report.tables))
        return outcome

    def _support_rule(self, config: RunConfig) -> SuiteOutcome:
        grid, part = self._grid(config, 256)
        seed = self._seed(config)
        rng = np.random.default_rng(seed)
        claims, rows = [], []
        for spec in self._specs(config):
            symbol = self.symbol_loader(spec, part)
            inputs = [
                ("random", random_resolved(grid, part, rng)),
                ("low", random_resolved(grid, part, rng, max_level=max(part.J_max - 2, 0))),
            ]
            if spec.name == "ching":
                k = max(part.J_max - 1, 1)
                coeffs = np.zeros(grid.shape, dtype=np.complex128)
                coeffs[grid.index_of([0] * (grid.dim - 1) + [2 ** k])] = (2 * math.pi) ** grid.dim
                inputs.append((f"mode_{2 ** k}", idft(SpectralFunction(grid, coeffs))))
            for input_name, v in inputs:
                claim = support_rule_check(symbol, v, part=part)
                tight = support_rule_check(symbol, v, part=part, shrink=2)
                claims.append((f"{_label(spec)}/{input_name}", claim, tight))

        if config.symbol is None and config.dim == 1:
            grid2 = TorusGrid(2, 64)
            part2 = build_partition(grid2, max_levels(grid2))
            for spec in (SymbolSpec(name="identity"), SymbolSpec(name="smooth")):
                symbol = self.symbol_loader(spec, part2)
                v = random_resolved(grid2, part2, rng)
                claims.append((f"{_label(spec)}/random_2d", support_rule_check(symbol, v, part=part2),
                               support_rule_check(symbol, v, part=part2, shrink=2)))

        checks = []
        for name, claim, tight in claims:
            checks.append(CheckResult(name=f"support_rule[{name}]", passed=claim.passed,
                                      value=claim.worst_violation, tolerance=claim.threshold * claim.scale))
            row = claim.csv_row()
            row["term"] = name
            row["eroded_pass"] = tight.passed
            rows.append(row)
        eroded_failures = sum(not tight.passed for _, _, tight in claims)
        checks.append(CheckResult(name="support_rule_tightness", passed=eroded_failures > 0,
                                  value=float(eroded_failures), tolerance=1.0,
                                  detail="eroding the prediction by 2 cells must break at least one pair"))
        return SuiteOutcome(checks=checks, tables={"support_rule": rows}, seeds=[seed])

    def _inclusions(self, config: RunConfig) -> SuiteOutcome:
        grid, part = self._grid(config, 512, dim=1)
        seed = self._seed(config)
        rng = np.random.default_rng(seed)
        checks, rows = [], []
        for spec in self._specs(config):
            symbol = self.symbol_loader(spec, part)
            C = spec.C if spec.name == "cutoff" else config.twisted_c
            u = random_resolved(grid, part, rng)
            result = apply(symbol, u, part)
            for claim in inclusion_check(result, part, C_twisted=C):
                name = f"{_label(spec)}/{claim.term}"
                checks.append(CheckResult(name=f"inclusion[{name}]", passed=claim.passed,
                                          value=claim.worst_violation, tolerance=claim.threshold * claim.scale))
                row = claim.csv_row()
                row["term"] = name
                rows.append(row)

        C = config.twisted_c or 2.0
        expectations = [("cutoff", SymbolSpec(name="cutoff", C=C), True), ("bessel", SymbolSpec(name="bessel", d=1.0), True),
                        ("ching", SymbolSpec(name="ching", d=0.0), False)]
        for name, spec, expected in expectations:
            check = twisted_diagonal_check(self.symbol_loader(spec, part), C, grid, settings.support_threshold)
            checks.append(CheckResult(name=f"twisted_diagonal[{name},C={C:g}]", passed=check.passed == expected,
                                      value=float(check.violations), tolerance=0.0,
                                      detail=f"witnesses {list(check.witnesses[:4])}"))
        return SuiteOutcome(checks=checks, tables={"inclusions": rows}, seeds=[seed])

    def _scaling(self, config: RunConfig) -> SuiteOutcome:
        n = config.dim
        M = settings.marschall_row_points if n == 1 else 128
        h = settings.marschall_row_spacing if n == 1 else 1.0 / 16
        profile = CutoffProfile()
        freqs = np.fft.fftfreq(M, d=1.0 / M) * h
        mesh = np.meshgrid(*([freqs] * n), indexing="ij")
        row = profile(np.sqrt(sum(axis ** 2 for axis in mesh))) ** 2
        checks, rows = [], []
        for t in (0.5, 0.75, 1.0):
            s, p, q = n / t, 1.0, t
            base = hom_besov_norm_in_xi(row, s, p, q, h)
            for k in (1, 2, 3):
                scaled = hom_besov_norm_in_xi(row, s, p, q, h / 2 ** k)
                expected = 2.0 ** (k * (s - n / p)) * base
                error = abs(scaled - expected) / expected
                checks.append(CheckResult(name=f"dyadic_scaling[t={t:g},k={k}]", passed=error <= 1e-9,
                                          value=error, tolerance=1e-9))
                rows.append({"t": t, "k": k, "norm": scaled, "expected": expected, "relative_error": error})
        return SuiteOutcome(checks=checks, tables={"scaling": rows})

    def _marschall(self, config: RunConfig) -> SuiteOutcome:
        """
        Sup ratios of 50 random (a, v, k), ten per k = 3..7.

        Level k runs on N = base 2^(k-3) points so every level sees the same number
        of oscillations; the per-level median sup must stay within 30% of the median
        over levels, and the draws must not collapse to one value.
        """
        seed = self._seed(config)
        rng = np.random.default_rng(seed)
        base = config.n_points or 512
        levels = list(range(3, 8))
        parts = {}
        for k in levels:
            grid = TorusGrid(1, base * 2 ** (k - 3))
            parts[k] = build_partition(grid, max_levels(grid))
        draws = {k: [marschall_ensemble(parts[k].grid, parts[k], k, rng) for _ in range(MARSCHALL_DRAWS)]
                 for k in levels}
        checks, rows, level_rows = [], [], []
        for t in (0.5, 1.0):
            typical, everything = {}, []
            for k in levels:
                sups = [float(np.max(marschall_ratios(a, v, k, t, parts[k]))) for a, v in draws[k]]
                rows.extend({"t": t, "k": k, "sample": i, "sup_ratio": s} for i, s in enumerate(sups))
                typical[k] = statistics.median(sups)
                level_rows.append({"t": t, "k": k, "N": parts[k].grid.points_per_axis,
                                   "median_sup": typical[k], "max_sup": max(sups)})
                everything.extend(sups)
            finite = all(math.isfinite(s) for s in everything)
            center = statistics.median(typical.values())
            spread = max(abs(c / center - 1.0) for c in typical.values()) if center > 0 else math.inf
            variation = statistics.pstdev(everything) / statistics.fmean(everything) if finite else math.inf
            checks.append(CheckResult(name=f"marschall_finite[t={t:g}]", passed=finite, value=max(everything),
                                      tolerance=math.inf))
            checks.append(CheckResult(name=f"marschall_spread[t={t:g}]", passed=spread <= 0.3, value=spread,
                                      tolerance=0.3, detail=f"median sup ratio {center:.6g}"))
            checks.append(CheckResult(name=f"marschall_varies[t={t:g}]", passed=variation > 1e-3, value=variation,
                                      tolerance=1e-3, detail="relative spread of the sup ratios over all draws"))
        return SuiteOutcome(checks=checks, tables={"marschall": rows, "marschall_levels": level_rows}, seeds=[seed])

    def _lemma_suite(self, config: RunConfig, name: str,
                     measure: Callable[[TorusGrid, np.random.Generator], Dict[str, List[float]]]) -> SuiteOutcome:
        """
        Empirical constants (largest ratio) per parameter label on N and 2N from one seed.

        The N and 2N batches draw the same trigonometric polynomials; their constants
        must agree within 20%. A fresh batch on N, drawn from the next seed, must stay
        below twice the constant.
        """
        seed = self._seed(config)
        N = config.n_points or (128 if config.dim == 1 else 64)
        coarse = measure(TorusGrid(config.dim, N), np.random.default_rng(seed))
        fine = measure(TorusGrid(config.dim, 2 * N), np.random.default_rng(seed))
        fresh = measure(TorusGrid(config.dim, N), np.random.default_rng(seed + 1))
        checks, rows = [], []
        for label in coarse:
            batches = (coarse[label], fine[label], fresh[label])
            finite = all(math.isfinite(r) for batch in batches for r in batch)
            constant, refined, held_out = (max(batch) for batch in batches)
            drift = abs(refined / constant - 1.0) if constant > 0 else math.inf
            checks.append(CheckResult(name=f"{name}_finite[{label}]", passed=finite and constant > 0,
                                      value=constant, tolerance=math.inf))
            checks.append(CheckResult(name=f"{name}_refinement[{label}]", passed=drift <= 0.2, value=drift,
                                      tolerance=0.2))
            checks.append(CheckResult(name=f"{name}_held_out[{label}]", passed=held_out <= 2.0 * constant,
                                      value=held_out / constant if constant > 0 else math.inf, tolerance=2.0,
                                      detail=f"fresh batch of {len(fresh[label])}"))
            rows.append({"label": label, "samples": len(coarse[label]), f"C_N={N}": constant,
                         f"C_N={2 * N}": refined, "drift": drift, "held_out_max": held_out,
                         "bound": 2.0 * constant})
        return SuiteOutcome(checks=checks, tables={name: rows}, seeds=[seed, seed + 1])

    def _fefferman_stein(self, config: RunConfig) -> SuiteOutcome:
        def measure(grid: TorusGrid, rng: np.random.Generator) -> Dict[str, List[float]]:
            families = [[random_band_limited(grid, LEMMA_RADIUS, rng) for _ in range(FS_MEMBERS)]
                        for _ in range(LEMMA_SAMPLES)]
            ratios: Dict[str, List[float]] = {}
            for t in FS_T:
                maxima = ordered_map(lambda fam: [maximal(f, t).values for f in fam], families)
                for p in FS_P:
                    for q in FS_Q:
                        ratios[f"p={p:g},q={q:g},t={t:g}"] = [
                            vector_maximal_ratio(fam, p, q, t, values) for fam, values in zip(families, maxima)
                        ]
            return ratios

        return self._lemma_suite(config, "fefferman_stein", measure)

    def _nikolskii(self, config: RunConfig) -> SuiteOutcome:
        def measure(grid: TorusGrid, rng: np.random.Generator) -> Dict[str, List[float]]:
            ratios: Dict[str, List[float]] = {}
            for R in NIKOLSKII_R:
                functions = [random_band_limited(grid, R, rng) for _ in range(LEMMA_SAMPLES)]
                for t in NIKOLSKII_T:
                    ratios[f"R={R:g},t={t:g}"] = [nikolskii_ratio(f, R, t) for f in functions]
            return ratios

        return self._lemma_suite(config, "nikolskii", measure)
