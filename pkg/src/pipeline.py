"""Main pipeline orchestration for lab runs."""

import logging
import math
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .config import settings
from .errors import GridMismatchError, InvalidSpecError
from .grid import GridFunction, TorusGrid, inner, lp_norm
from .lpdecomp import PLATEAU_END, DyadicPartition, build_partition, decompose, max_levels
from .models import CheckResult, Command, NormKind, NormSpec, Report, RunConfig, RunStatus, SymbolSpec
from .paradiff import apply, direct_apply, relative_l2_error
from .parallel import worker_limit
from .probes import (
    ThetaFamily,
    boundedness_probe,
    build_theta_family,
    counterexample_run,
    harmonic_sum,
    marschall_probe,
    random_band_limited,
    random_resolved,
)
from .spaces import block_norm_table, norm
from .storage_service import StorageService
from .symbols import Symbol, build_symbol, twisted_diagonal_check
from .verify_service import VerifyService

logger = logging.getLogger(__name__)

DEFAULT_POINTS = {1: 1024, 2: 128}
ORACLE_TOLERANCE = 1e-8
RECONSTRUCTION_TOLERANCE = 1e-10
TERM_SUM_TOLERANCE = 1e-13


@dataclass
class CommandOutcome:
    """What a command hands back to the pipeline before it becomes a Report."""

    checks: List[CheckResult] = field(default_factory=list)
    tables: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)
    artifacts: Dict[str, Any] = field(default_factory=dict)


def parse_theta_input(text: str) -> List[int]:
    """
    Family indices of a ``theta:N=2`` or ``theta:N=2,3`` input.

    Raises:
        InvalidSpecError: If the text is malformed
    """
    _, _, rest = text.partition(":")
    key, _, values = rest.partition("=")
    try:
        indices = [int(v) for v in values.split(",") if v.strip()]
    except ValueError as e:
        raise InvalidSpecError(f"Malformed theta input {text!r}: {e}") from e
    if key.strip() != "N" or not indices:
        raise InvalidSpecError(f"Malformed theta input {text!r}; expected theta:N=2 or theta:N=2,3")
    return indices


def smallest_admitting_points(dim: int, N_range: List[int]) -> int:
    """Smallest power of two whose largest resolved J_max admits N^2 for every N."""
    needed = max(N_range) ** 2
    points = 64
    while max_levels(TorusGrid(dim, points)) < needed:
        points *= 2
    return points


class LabPipeline:
    """
    Main pipeline for lab runs.

    Orchestrates every command:
    1. Build the grid, partition, symbol and input
    2. Run the numerical core
    3. Collect checks and CSV tables into a Report
    4. Store the report
    """

    def __init__(self, storage_service: Optional[StorageService] = None):
        """Initialize all services."""
        self.storage_service = storage_service or StorageService()
        self._commands = {
            Command.DECOMPOSE: self._decompose,
            Command.APPLY: self._apply,
            Command.NORM: self._norm,
            Command.VERIFY: self._verify,
            Command.COUNTEREXAMPLE: self._counterexample,
            Command.PROBE: self._probe,
        }
        logger.info("Lab pipeline initialized")

    def run(self, config: RunConfig, store_result: bool = True) -> Report:
        """
        Run one command end to end.

        Args:
            config: Validated run parameters
            store_result: Whether to write report.json, CSV tables and artifacts

        Returns:
            Report with every check; ``report.passed`` tells whether all of them hold
        """
        logger.info(f"Starting {config.command.value} run")
        start_time = datetime.utcnow()
        run_id = uuid.uuid4().hex[:12]
        config_document = config.model_dump(mode="json")

        try:
            with worker_limit(config.threads):
                outcome = self._commands[config.command](config)
            report = Report(
                run_id=run_id,
                command=config.command,
                status=RunStatus.COMPLETED,
                config=config_document,
                seeds=outcome.seeds,
                checks=outcome.checks,
                tables=outcome.tables,
                summary=outcome.summary,
                created_at=start_time,
                completed_at=datetime.utcnow(),
            )

            if store_result:
                storage_path = self.storage_service.store_report(report, config.out_dir, outcome.artifacts)
                logger.info(f"Result stored at: {storage_path}")

            passed = sum(c.passed for c in report.checks)
            logger.info(f"Run {run_id} completed in {(report.completed_at - start_time).total_seconds():.1f}s; "
                        f"{passed}/{len(report.checks)} checks passed")
            return report

        except Exception as e:
            logger.error(f"Pipeline failed: {e}", exc_info=True)

            report = Report(
                run_id=run_id,
                command=config.command,
                status=RunStatus.FAILED,
                config=config_document,
                created_at=start_time,
                completed_at=datetime.utcnow(),
                error=str(e),
            )

            if store_result:
                try:
                    self.storage_service.store_report(report, config.out_dir)
                except Exception as store_error:
                    logger.warning(f"Could not store failed report: {store_error}")

            raise

    # -- shared setup --------------------------------------------------------

    @staticmethod
    def _seed(config: RunConfig) -> int:
        return config.seed if config.seed is not None else settings.default_seed

    def load_symbol(self, spec: SymbolSpec, part: DyadicPartition, seed: Optional[int] = None) -> Symbol:
        """
        Named constructor, or a sample file for ``sampled``.

        Raises:
            InvalidSpecError: If a sampled symbol has no path
        """
        if spec.name == "sampled":
            if not spec.path:
                raise InvalidSpecError("Sampled symbols need a path")
            return self.storage_service.load_sampled_symbol(spec.path, part.grid)
        return build_symbol(spec, part, seed)

    def _setup(self, config: RunConfig, default_points: Optional[int] = None
               ) -> Tuple[DyadicPartition, Optional[GridFunction], Optional[ThetaFamily]]:
        """
        Grid, partition and input of a run.

        A file input fixes the grid; ``n_points`` and ``dim`` must then agree with it.

        Raises:
            GridMismatchError: If the input file lives on another grid than requested
        """
        loaded = None
        if config.input not in ("random", "constant") and not config.input.startswith("theta:"):
            loaded = self.storage_service.load_grid_function(config.input)
            if loaded.grid.dim != config.dim or config.n_points not in (None, loaded.grid.points_per_axis):
                raise GridMismatchError(
                    f"Input {config.input} lives on N={loaded.grid.points_per_axis}, dim={loaded.grid.dim}"
                )
            grid = loaded.grid
        else:
            grid = TorusGrid(config.dim, config.n_points or default_points or DEFAULT_POINTS[config.dim])

        J = config.j_max if config.j_max is not None else max_levels(grid)
        part = build_partition(grid, J)
        logger.debug(f"Grid N={grid.points_per_axis}, dim={grid.dim}, {part}")

        if loaded is not None:
            return part, loaded, None
        if config.input == "constant":
            return part, GridFunction(grid, np.ones(grid.shape)), None
        if config.input.startswith("theta:"):
            family = build_theta_family(config.d, parse_theta_input(config.input), config.r_theta, part)
            return part, family.members[family.N_range[0]], family
        return part, random_resolved(grid, part, np.random.default_rng(self._seed(config))), None

    # -- commands ------------------------------------------------------------

    def _decompose(self, config: RunConfig) -> CommandOutcome:
        logger.info("Step 1/2: Building grid, partition and input...")
        part, u, _ = self._setup(config)

        logger.info("Step 2/2: Splitting into dyadic blocks...")
        blocks = decompose(u, part)
        error = blocks.reconstruction_error()
        levels = blocks.nonzero_levels()
        logger.info(f"Nonzero blocks {levels}, reconstruction error {error:.3e}")

        rows = [{"j": j, "l2_norm": lp_norm(b, 2.0), "sup_norm": lp_norm(b, math.inf)} for j, b in blocks.blocks]
        artifacts = {f"block_{j}": b.to_document() for j, b in blocks.blocks if j in levels}
        return CommandOutcome(
            checks=[CheckResult(name="reconstruction", passed=error <= RECONSTRUCTION_TOLERANCE, value=error,
                                tolerance=RECONSTRUCTION_TOLERANCE)],
            tables={"blocks": rows},
            summary={"nonzero_levels": levels, "reconstruction_error": error, "J_max": part.J_max},
            seeds=[self._seed(config)],
            artifacts=artifacts,
        )

    def _apply(self, config: RunConfig) -> CommandOutcome:
        logger.info("Step 1/3: Building grid, partition, symbol and input...")
        part, u, family = self._setup(config)
        spec = config.symbol or SymbolSpec()
        a = self.load_symbol(spec, part, config.seed)

        logger.info(f"Step 2/3: Applying {a.name} through the three series...")
        result = apply(a, u, part)
        term_error = relative_l2_error(result.term1 + result.term2 + result.term3, result.total)
        checks = [CheckResult(name="term_sum", passed=term_error <= TERM_SUM_TOLERANCE, value=term_error,
                              tolerance=TERM_SUM_TOLERANCE)]
        summary: Dict[str, Any] = {"symbol": a.name, "output_l2": lp_norm(result.total, 2.0)}

        logger.info("Step 3/3: Cross-checking the output...")
        if config.oracle:
            error = relative_l2_error(result.total, direct_apply(a, u, part))
            logger.info(f"Paradifferential vs direct quadrature: relative L2 error {error:.3e}")
            checks.append(CheckResult(name="oracle", passed=error <= ORACLE_TOLERANCE, value=error,
                                      tolerance=ORACLE_TOLERANCE))
            summary["oracle_error"] = error

        if family is not None:
            N = family.N_range[0]
            pairing = inner(result.total, family.pairing_function())
            summary["pairing"] = pairing.real
            logger.info(f"Pairing <a(x,D) theta_{N}, phi> = {pairing.real:.15g}")
            if spec.name == "ching" and spec.d == family.d:
                harmonic = harmonic_sum(N)
                error = abs(pairing.real - float(harmonic)) / float(harmonic)
                summary["harmonic_sum"] = f"{harmonic.numerator}/{harmonic.denominator}"
                checks.append(CheckResult(name=f"pairing[N={N}]", passed=error <= 1e-9, value=error,
                                          tolerance=1e-9, detail=f"expected {harmonic}"))

        rows = [
            {"series": series, "level": level, "l2_norm": float(np.linalg.norm(F.coeffs))}
            for series, terms in sorted(result.term_spectra.items())
            for level, F in sorted(terms.items())
        ]
        return CommandOutcome(checks=checks, tables={"terms": rows}, summary=summary,
                              seeds=[self._seed(config)], artifacts={"output": result.to_document()})

    def _norm(self, config: RunConfig) -> CommandOutcome:
        logger.info("Step 1/2: Building grid, partition and input...")
        part, u, _ = self._setup(config)
        space = config.space or NormSpec(kind=NormKind.TRIEBEL_LIZORKIN, s=0.0, p=2.0, q=2.0)

        logger.info(f"Step 2/2: Measuring the {space.label()} norm...")
        value = norm(u, space, part)
        tables = {}
        if space.kind in (NormKind.BESOV, NormKind.TRIEBEL_LIZORKIN):
            tables["blocks"] = [{"j": j, "weighted_lp_norm": v} for j, v in enumerate(block_norm_table(u, space, part))]
        logger.info(f"{space.label()} norm = {value:.12g}")
        return CommandOutcome(tables=tables, summary={"space": space.label(), "norm": value},
                              seeds=[self._seed(config)])

    def _verify(self, config: RunConfig) -> CommandOutcome:
        logger.info(f"Step 1/1: Running verification suite {config.suite}...")
        service = VerifyService(lambda spec, part: self.load_symbol(spec, part, config.seed))
        outcome = service.run(config.suite, config)
        failed = next((c.name for c in outcome.checks if not c.passed), None)
        return CommandOutcome(
            checks=outcome.checks,
            tables=outcome.tables,
            summary={"suite": config.suite, "checks": len(outcome.checks), "first_failure": failed},
            seeds=outcome.seeds,
        )

    def _counterexample(self, config: RunConfig) -> CommandOutcome:
        logger.info("Step 1/2: Building the grid that admits the family...")
        points = config.n_points or smallest_admitting_points(config.dim, config.n_range)
        grid = TorusGrid(config.dim, points)
        part = build_partition(grid, config.j_max if config.j_max is not None else max_levels(grid))

        logger.info(f"Step 2/2: Running the theta family d={config.d} N={config.n_range} on N={points}...")
        report = counterexample_run(config.d, config.n_range, config.q_list, part, config.t_list, config.r_theta)
        growth = [{"N": row["N"], "ratio": row["pairing_over_norm"]}
                  for row in report.tables["growth"] if row["t"] == config.t_list[0] and row["q"] == config.q_list[0]]
        tables = dict(report.tables)
        tables["growth_pairs"] = growth
        summary = dict(report.summary)
        summary["n_points"] = points
        return CommandOutcome(checks=report.checks, tables=tables, summary=summary)

    def _probe(self, config: RunConfig) -> CommandOutcome:
        if config.probe == "marschall":
            return self._marschall(config)

        logger.info("Step 1/3: Building grid, partition and symbol...")
        part, _, family = self._setup(config)
        grid = part.grid
        part, output_part = self._probe_partitions(part, keep_levels=family is not None)
        logger.debug(f"Inputs on J_max={part.J_max}, images on J_max={output_part.J_max}")
        a = self.load_symbol(config.symbol or SymbolSpec(), part, config.seed)
        space = config.space or NormSpec(kind=NormKind.TRIEBEL_LIZORKIN, s=0.0, p=2.0, q=1.0)

        logger.info("Step 2/3: Drawing inputs...")
        if family is not None:
            labels = [f"theta_{N}" for N in family.N_range]
            inputs = [family.members[N] for N in family.N_range]
        else:
            rng = np.random.default_rng(self._seed(config))
            levels = np.linspace(0, part.J_max, config.samples).round().astype(int)
            labels = [f"random_j{j}" for j in levels]
            inputs = [random_resolved(grid, part, rng, space.shifted(config.d), max_level=int(j)) for j in levels]
        twisted = False
        if config.twisted_c is not None:
            twisted = twisted_diagonal_check(a, config.twisted_c, grid, settings.support_threshold).passed

        logger.info(f"Step 3/3: Measuring {len(inputs)} boundedness ratios...")
        result = boundedness_probe(a, space, config.d, inputs, part, twisted, output_part)
        logger.info(f"{result.source.label()} -> {result.target.label()}: {result.diagnosis}, "
                    f"growth rate {result.growth_rate:.4f}")
        rows = [{"input": label, "ratio": r} for label, r in zip(labels, result.ratios)]
        check = CheckResult(name=f"bounded[{result.source.label()}->{result.target.label()}]",
                            passed=result.diagnosis == "bounded", value=result.growth_rate,
                            tolerance=1.1, detail=result.diagnosis)
        return CommandOutcome(checks=[check], tables={"boundedness": rows}, summary=result.model_dump(mode="json"),
                              seeds=[self._seed(config)])

    @staticmethod
    def _probe_partitions(part: DyadicPartition, keep_levels: bool) -> Tuple[DyadicPartition, DyadicPartition]:
        """
        Partition for the symbol and inputs, and the one-level-finer partition for images.

        Images of inputs resolved on level J reach 1.1 2^(J+1). When the grid has no
        room above J_max the inputs drop one level, unless ``keep_levels`` pins them
        (theta_N members need N^2 <= J_max).
        """
        grid = part.grid
        if part.J_max < max_levels(grid):
            return part, build_partition(grid, part.J_max + 1)
        if keep_levels or part.J_max == 0:
            return part, part
        return build_partition(grid, part.J_max - 1), part

    def _marschall(self, config: RunConfig) -> CommandOutcome:
        logger.info("Step 1/2: Building grid, partition, symbol and input...")
        config = config if config.n_points or config.input != "random" else config.model_copy(update={"n_points": 512})
        part, u, _ = self._setup(config)
        a = self.load_symbol(config.symbol or SymbolSpec(), part, config.seed)
        if config.input == "random":
            rng = np.random.default_rng(self._seed(config))
            u = random_band_limited(part.grid, PLATEAU_END * 2.0 ** config.k, rng)

        logger.info(f"Step 2/2: Pointwise Marschall ratio at k={config.k}, t={config.t}...")
        report = marschall_probe(a, u, config.k, config.t, part)
        return CommandOutcome(checks=report.checks, tables=report.tables, summary=report.summary,
                              seeds=[self._seed(config)])
