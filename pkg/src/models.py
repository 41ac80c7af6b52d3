"""Data models for the paradifferential lab."""

import math
from datetime import datetime
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class LabModel(BaseModel):
    """Base model; infinite exponents serialise as the strings "Infinity" and "-Infinity"."""

    model_config = ConfigDict(ser_json_inf_nan="strings")


class NormKind(str, Enum):
    """Function space families."""
    BESOV = "besov"
    TRIEBEL_LIZORKIN = "triebel_lizorkin"
    HOMOGENEOUS_BESOV = "homogeneous_besov"
    LEBESGUE = "lebesgue"


class NormSpec(LabModel):
    """Space descriptor (kind, s, p, q)."""
    kind: NormKind = Field(..., description="Space family")
    s: float = Field(default=0.0, description="Smoothness index")
    p: float = Field(..., description="Integrability exponent in (0, inf]")
    q: float = Field(default=1.0, description="Summability exponent in (0, inf]")

    @model_validator(mode="after")
    def _check_exponents(self) -> "NormSpec":
        if not (self.p > 0 and self.q > 0):
            raise ValueError(f"Exponents must be positive, got p={self.p}, q={self.q}")
        if self.kind == NormKind.TRIEBEL_LIZORKIN and math.isinf(self.p):
            raise ValueError("Triebel-Lizorkin spaces require p < inf")
        return self

    @property
    def is_quasi(self) -> bool:
        return self.p < 1 or self.q < 1

    def shifted(self, ds: float) -> "NormSpec":
        return self.model_copy(update={"s": self.s + ds})

    def label(self) -> str:
        symbol = {
            NormKind.BESOV: "B",
            NormKind.TRIEBEL_LIZORKIN: "F",
            NormKind.HOMOGENEOUS_BESOV: "Bhom",
            NormKind.LEBESGUE: "L",
        }[self.kind]
        if self.kind == NormKind.LEBESGUE:
            return f"L_{self.p:g}"
        return f"{symbol}^{self.s:g}_{self.p:g},{self.q:g}"


SymbolName = Literal["identity", "constant", "bessel", "ching", "smooth", "reduced", "nonlinear", "cutoff", "sampled"]


class SymbolSpec(LabModel):
    """Named symbol constructor plus its parameters."""
    name: SymbolName = Field(default="identity", description="Constructor name")
    d: float = Field(default=0.0, description="Order for bessel and ching")
    value: float = Field(default=1.0, description="Value of the constant symbol")
    seed: Optional[int] = Field(default=None, description="Seed for randomised symbols")
    count: int = Field(default=5, ge=1, description="Number of random multipliers (reduced)")
    C: float = Field(default=2.0, ge=1.0, description="Cone constant of the twisted-diagonal cutoff")
    function: str = Field(default="sin", description="Nonlinearity name (nonlinear)")
    path: Optional[str] = Field(default=None, description="Sample file (sampled)")


class Command(str, Enum):
    """CLI and API commands."""
    DECOMPOSE = "decompose"
    APPLY = "apply"
    NORM = "norm"
    VERIFY = "verify"
    COUNTEREXAMPLE = "counterexample"
    PROBE = "probe"


class RunConfig(LabModel):
    """Validated parameters of one lab run; stored verbatim in its report."""
    command: Command = Field(default=Command.VERIFY, description="Command to run")
    dim: int = Field(default=1, description="Torus dimension (1 or 2)")
    n_points: Optional[int] = Field(default=None, description="Grid points per axis (power of two); per-command default if omitted")
    j_max: Optional[int] = Field(default=None, description="Top dyadic level; largest resolved if omitted")
    symbol: Optional[SymbolSpec] = Field(default=None, description="Symbol; identity for apply/norm, every shipped family for verify")
    space: Optional[NormSpec] = Field(default=None, description="Space for norm and probe commands")
    input: str = Field(default="random", description="Input generator or grid-function file")
    d: float = Field(default=0.0, description="Order d of the counterexample family")
    t: float = Field(default=1.0, gt=0, le=1, description="Maximal-function exponent")
    k: int = Field(default=3, ge=0, description="Frequency level of the Marschall probe")
    n_range: List[int] = Field(default_factory=lambda: [2, 3], description="Counterexample family indices N")
    q_list: List[float] = Field(default_factory=lambda: [1.0, 2.0, math.inf])
    t_list: List[float] = Field(default_factory=lambda: [1.0, 2.0, math.inf])
    r_theta: int = Field(default=0, ge=0, le=2, description="Radius of the base profile spectrum")
    samples: int = Field(default=8, ge=1, description="Random inputs per probe")
    suite: str = Field(default="all", description="Verification suite name")
    twisted_c: Optional[float] = Field(default=None, ge=1.0, description="Cone constant of the twisted-diagonal checks")
    probe: Literal["boundedness", "marschall"] = Field(default="boundedness")
    oracle: bool = Field(default=False, description="Compare against direct quadrature")
    seed: Optional[int] = Field(default=None, description="Master seed")
    out_dir: Optional[str] = Field(default=None, description="Output directory")
    threads: Optional[int] = Field(default=None, ge=1, description="Worker cap")


class RunStatus(str, Enum):
    """Run outcome."""
    COMPLETED = "completed"
    FAILED = "failed"


class CheckResult(LabModel):
    """One verified claim."""
    name: str
    passed: bool
    value: float = Field(..., description="Measured quantity")
    tolerance: float = Field(..., description="Bound the value is compared against")
    detail: str = ""


class SeminormReport(LabModel):
    """Sampled estimate of mu_{l,m}(a)."""
    l: int = Field(..., ge=0, description="Max order of xi-derivatives")
    m: int = Field(..., ge=0, description="Max order of x-derivatives")
    value: float = Field(..., ge=0)
    x_samples: int
    eta_samples: int
    used_finite_differences: bool = False


class SupportClaim(LabModel):
    """Predicted versus observed spectrum of an operator output or series term."""
    term: str = Field(..., description="Which output or series term")
    predicted: FrozenSet[Tuple[int, ...]]
    observed: FrozenSet[Tuple[int, ...]]
    passed: bool
    worst_violation: float = Field(..., description="Largest coefficient outside the predicted set")
    scale: float = Field(..., description="Reference (largest) coefficient")
    threshold: float
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None

    def csv_row(self) -> Dict[str, Any]:
        def radii(points):
            r = [math.sqrt(sum(c * c for c in p)) for p in points]
            return (min(r), max(r)) if r else (math.nan, math.nan)

        pred_lo, pred_hi = radii(self.predicted)
        obs_lo, obs_hi = radii(self.observed)
        return {
            "term": self.term,
            "predicted_min": self.lower_bound if self.lower_bound is not None else pred_lo,
            "predicted_max": self.upper_bound if self.upper_bound is not None else pred_hi,
            "observed_min": obs_lo,
            "observed_max": obs_hi,
            "pass": self.passed,
            "worst_violation": self.worst_violation,
        }


class BoundednessReport(LabModel):
    """Ratios ||a(x,D)u||_target / ||u||_source over a list of inputs."""
    symbol: str
    source: NormSpec
    target: NormSpec
    d: float
    ratios: List[float]
    sup_ratio: float
    diagnosis: Literal["bounded", "growing"]
    growth_rate: float = Field(..., description="Last ratio over first ratio")


class Report(LabModel):
    """Structured output of a lab run."""
    run_id: str
    command: Command
    status: RunStatus
    config: Dict[str, Any] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=list)
    checks: List[CheckResult] = Field(default_factory=list)
    tables: Dict[str, List[Dict[str, Any]]] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)
    created_at: datetime = Field(default_factory=datetime.utcnow)
    completed_at: Optional[datetime] = None
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status == RunStatus.COMPLETED and all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> Optional[CheckResult]:
        return next((c for c in self.checks if not c.passed), None)
