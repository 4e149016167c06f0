from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from typing import Any, Dict, List, Optional, Tuple
from datetime import datetime
from enum import Enum

from app.config import settings


class ProtocolParams(BaseModel):
    """Full parameter record of one protocol configuration."""
    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=1, description="Private key length in bits")
    epsilon: float = Field(ge=0, lt=0.25, description="Error-rate threshold")
    tau: float = Field(gt=0, description="Security constant")
    tau_s: float = Field(gt=0, description="Sifting margin constant")
    r: int = Field(ge=1, description="Reconciled-set size (security parameter)")
    s: int = Field(ge=1, description="Sifted-set size")
    n: int = Field(ge=1, description="Number of photon pairs")
    d_k: int = Field(ge=0, description="Minimum combination weight of the PA matrix")
    q_min: int = Field(ge=0, description="Planning budget of pre-shared pad bits")
    feasible_m_max: int = Field(description="Largest m allowed by the PA-matrix existence bound")
    feasible: bool = Field(description="Whether m satisfies the PA-matrix existence bound")

    @model_validator(mode="after")
    def check_invariants(self) -> "ProtocolParams":
        if 2 * self.epsilon / (1 - self.epsilon) + self.tau >= 1:
            raise ValueError("2*epsilon/(1-epsilon) + tau must be < 1")
        if (1 - self.epsilon) / 2 - self.tau_s <= 0:
            raise ValueError("(1-epsilon)/2 - tau_s must be > 0")
        if self.d_k > self.r:
            raise ValueError("d_k cannot exceed r")
        return self


class BoundReport(BaseModel):
    """Security bounds for one (m, epsilon, tau, r) point."""
    theta: float = Field(description="Entropy-deficit parameter theta(r)")
    entropy_lower_bound_raw: float = Field(description="Unclamped lower bound on H(key | view)")
    entropy_lower_bound: float = Field(description="Lower bound clamped to [0, m]")
    feasible_m_max: int = Field(description="Largest m allowed by the PA-matrix existence bound")
    net_gain_margin: float = Field(description="Asymptotic net-gain margin at epsilon")


class SourceVariant(str, Enum):
    """Generative model of the photon-pair source."""
    IDEAL = "ideal"
    IID_BELL_DIAGONAL = "iid_bell_diagonal"
    SCRIPTED = "scripted"
    INTERCEPT_RESEND = "intercept_resend"


class SourceModel(BaseModel):
    """Source and eavesdropper configuration."""
    model_config = ConfigDict(frozen=True)

    variant: SourceVariant = SourceVariant.IDEAL
    probabilities: Optional[Tuple[float, float, float, float]] = Field(
        default=None, description="Bell-state probabilities p0..p3 (iid_bell_diagonal)"
    )
    script: Optional[Tuple[int, ...]] = Field(
        default=None, description="Explicit Bell index per pair (scripted)"
    )
    interception_probability: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_variant(self) -> "SourceModel":
        if self.variant == SourceVariant.IID_BELL_DIAGONAL:
            if self.probabilities is None:
                raise ValueError("iid_bell_diagonal source needs probabilities p0..p3")
            if any(p < 0 for p in self.probabilities):
                raise ValueError("Bell-state probabilities must be nonnegative")
            if abs(sum(self.probabilities) - 1.0) > 1e-12:
                raise ValueError("Bell-state probabilities must sum to 1")
        if self.variant == SourceVariant.SCRIPTED:
            if not self.script:
                raise ValueError("scripted source needs a non-empty script")
            if any(c not in (0, 1, 2, 3) for c in self.script):
                raise ValueError("script entries must be Bell indices 0..3")
        return self

    @classmethod
    def bell_diagonal_delta(cls, delta: float) -> "SourceModel":
        """Source emitting |Phi+> with probability 1-delta and the singlet otherwise."""
        return cls(
            variant=SourceVariant.IID_BELL_DIAGONAL,
            probabilities=(1.0 - delta, 0.0, 0.0, delta),
        )


class ReconcileConfig(BaseModel):
    """Cascade settings."""
    model_config = ConfigDict(frozen=True)

    pass_count: int = Field(default_factory=lambda: settings.CASCADE_PASS_COUNT, ge=1)
    block_sizes: Optional[List[int]] = Field(
        default=None, description="Explicit block size per pass; derived from the error estimate when absent"
    )
    estimation_fraction: float = Field(
        default_factory=lambda: settings.ESTIMATION_FRACTION, gt=0.0, le=1.0
    )
    shuffle_seed: Optional[int] = Field(default=None, ge=0)
    final_confirmation: bool = False

    @field_validator("block_sizes")
    @classmethod
    def check_block_sizes(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is None:
            return value
        if not value or any(size < 1 for size in value):
            raise ValueError("block sizes must be positive")
        if any(b < a for a, b in zip(value, value[1:])):
            raise ValueError("block sizes must be non-decreasing across passes")
        return value


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        parts = [part.strip() for part in value.replace(";", ",").split(",")]
        return [part for part in parts if part]
    return value


class RunConfig(BaseModel):
    """Run configuration read from a flat key = value file."""
    model_config = ConfigDict(extra="forbid")

    # Protocol parameters
    m: int = Field(ge=1)
    epsilon: float
    tau: float
    tau_s: float = 0.05
    r: int = Field(ge=1)

    # Source model
    source: SourceVariant = SourceVariant.IDEAL
    p0: Optional[float] = None
    p1: Optional[float] = None
    p2: Optional[float] = None
    p3: Optional[float] = None
    delta: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    interception_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    script: Optional[List[int]] = None

    # Reconciliation
    pass_count: int = Field(default_factory=lambda: settings.CASCADE_PASS_COUNT, ge=1)
    block_sizes: Optional[List[int]] = None
    estimation_fraction: float = Field(
        default_factory=lambda: settings.ESTIMATION_FRACTION, gt=0.0, le=1.0
    )
    shuffle_seed: Optional[int] = Field(default=None, ge=0)
    final_confirmation: bool = False
    pad_bits: Optional[int] = Field(default=None, ge=0)
    pad_seed: Optional[int] = Field(default=None, ge=0)

    # Execution and output
    seed: int = Field(default=0, ge=0, lt=2**64)
    sessions: int = Field(default=1, ge=1)
    matrix_path: Optional[str] = None
    matrix_seed: Optional[int] = Field(default=None, ge=0)
    out: Optional[str] = None
    transcript_dir: Optional[str] = None
    workers: int = Field(default_factory=lambda: settings.SWEEP_WORKERS, ge=1)

    @field_validator("block_sizes", mode="before")
    @classmethod
    def parse_block_sizes(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("script", mode="before")
    @classmethod
    def parse_script(cls, value: Any) -> Any:
        if isinstance(value, str) and "," not in value:
            return [int(ch) for ch in value.strip() if not ch.isspace()]
        return _split_list(value)

    @model_validator(mode="after")
    def check_source(self) -> "RunConfig":
        try:
            self.source_model()
        except ValidationError as e:
            raise ValueError(f"invalid source model: {e.errors()[0]['msg']}")
        return self

    def probabilities(self) -> Optional[Tuple[float, float, float, float]]:
        if self.delta is not None:
            return (1.0 - self.delta, 0.0, 0.0, self.delta)
        given = (self.p0, self.p1, self.p2, self.p3)
        if all(p is None for p in given):
            return None
        return tuple(p or 0.0 for p in given)  # type: ignore[return-value]

    def source_model(self) -> SourceModel:
        return SourceModel(
            variant=self.source,
            probabilities=self.probabilities(),
            script=tuple(self.script) if self.script else None,
            interception_probability=self.interception_probability,
        )

    def reconcile_config(self) -> ReconcileConfig:
        return ReconcileConfig(
            pass_count=self.pass_count,
            block_sizes=self.block_sizes,
            estimation_fraction=self.estimation_fraction,
            shuffle_seed=self.shuffle_seed,
            final_confirmation=self.final_confirmation,
        )


class SessionRecord(BaseModel):
    """One CSV row per session."""
    seed: int
    n: int
    s: int
    r: int
    m: int
    qber: Optional[float] = None
    validated: bool
    fault: bool = False
    pad_consumed: int
    net_gain: int
    keys_equal: bool


class SweepRow(BaseModel):
    """Aggregate over the sessions of one sweep grid point."""
    parameter: str
    value: float
    sessions: int
    mean_qber: Optional[float] = None
    validation_rate: float
    mean_net_gain: float
    fault_count: int
    theta: float


# API models
class ErrorResponse(BaseModel):
    """Model for error responses."""
    detail: str = Field(description="Error description")


class BoundsResponse(BaseModel):
    """Setup parameters and security bounds for one configuration."""
    params: ProtocolParams
    report: BoundReport
    epsilon_star: float = Field(description="Largest error threshold with asymptotic net key gain")


class GenerateMatrixRequest(BaseModel):
    """Request model for privacy-amplification matrix generation."""
    m: int = Field(ge=1)
    r: int = Field(ge=1)
    d_k: int = Field(ge=0)
    seed: int = Field(default=0, ge=0)


class MatrixResponse(BaseModel):
    """A generated matrix, one string of 0/1 characters per row."""
    m: int
    r: int
    d_k: int
    rows: List[str]
    min_weight: int
    full_rank: bool


class VerifyMatrixRequest(BaseModel):
    """Request model for matrix verification."""
    rows: List[str] = Field(min_length=1)
    d_k: Optional[int] = Field(default=None, ge=0)


class VerifyMatrixResponse(BaseModel):
    """Exhaustive minimum-weight verification result."""
    min_weight: int
    full_rank: bool
    witness: str = Field(description="Coefficient vector achieving the minimum weight")
    passes: Optional[bool] = Field(default=None, description="Whether min_weight >= d_k and rows are independent")


class RunSummary(BaseModel):
    """Stored run without its session rows."""
    id: str
    kind: str
    master_seed: int
    session_count: int
    validation_rate: float
    created_at: datetime

    model_config = ConfigDict(from_attributes=True)


class RunResponse(RunSummary):
    """Stored run with its configuration and session rows."""
    config: Dict[str, Any]
    records: List[SessionRecord]


class RunListResponse(BaseModel):
    """Response model for listing stored runs."""
    runs: List[RunSummary]
    total: int
    skip: int
    limit: int


class SweepRequest(BaseModel):
    """Request model for a stored parameter sweep."""
    config: RunConfig
    parameter: str = Field(description="One of epsilon, tau, r, interception_probability, delta")
    grid: List[float] = Field(min_length=1, description="Values the parameter takes, in output order")


class SweepResponse(RunResponse):
    """Stored sweep with its session rows and one aggregate row per grid point."""
    rows: List[SweepRow]
