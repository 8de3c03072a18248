"""
Pydantic models for run configuration, reports and field snapshots
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.config import settings
from app.services.lri_scheme import Scheme

DEFAULT_GAMMAS = [0.2, 0.4, 0.6, 0.8]
DEFAULT_TAUS = [2.0 ** -n for n in range(6, 13)]


class Command(str, Enum):
    """CLI commands"""
    EVOLVE = "evolve"
    CONVERGENCE = "convergence"
    VERIFY = "verify"
    ORACLE = "oracle"


class ReportFormat(str, Enum):
    """Convergence report file formats"""
    CSV = "csv"
    JSON = "json"


class RowStatus(str, Enum):
    """Outcome of one convergence cell"""
    OK = "ok"
    DIVERGED = "diverged"


class RunConfig(BaseModel):
    """Resolved configuration of one CLI invocation"""

    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)

    command: Command = Field(..., description="Command to run")

    # evolve
    gamma: Optional[float] = Field(None, gt=0.0, le=1.0, description="Regularity of the rough initial data")
    input: Optional[str] = Field(None, description="Initial field JSON file instead of rough data")
    tau: Optional[float] = Field(None, gt=0.0, le=0.5, description="Time step")
    snapshot_every: Optional[int] = Field(None, ge=1, description="Write a snapshot every n steps")
    snapshot_dir: Optional[str] = Field(None, description="Snapshot directory")

    # shared numerical parameters
    modes: Optional[int] = Field(None, ge=1, description="Retained bandwidth K, default from the input field or settings")
    tmax: float = Field(1.0, ge=0.0, description="Final time T")
    scheme: Scheme = Field(Scheme.LRI2, description="Scheme variant")

    # convergence
    gammas: List[float] = Field(default_factory=lambda: list(DEFAULT_GAMMAS), min_length=1)
    taus: List[float] = Field(default_factory=lambda: list(DEFAULT_TAUS), min_length=1)
    reference_tau: Optional[float] = Field(None, gt=0.0, description="Reference step, default min(taus)/16")
    baseline: Optional[Scheme] = Field(None, description="Second scheme to compare against")
    series_dir: Optional[str] = Field(None, description="Directory for log-log series CSV files")

    # verify
    bound: int = Field(40, ge=1, description="Frequency bound of the exhaustive scans")
    c_small: float = Field(settings.DEFAULT_C_SMALL, gt=0.0, lt=1.0)
    samples: int = Field(1_000_000, ge=1, description="Average lemma samples")
    seed: int = Field(settings.DEFAULT_SEED)

    # oracle
    oracle_modes: List[int] = Field(default_factory=lambda: [4, 8, 16], min_length=1)
    oracle_taus: List[float] = Field(default_factory=lambda: [0.5, 0.1, 0.01], min_length=1)
    fields: int = Field(20, ge=1, description="Random fields per oracle configuration")

    # output and execution
    output: Optional[str] = Field(None, description="Report or field output path")
    format: ReportFormat = Field(ReportFormat.CSV)
    jobs: int = Field(1, ge=1, description="Worker processes")
    log_level: str = Field(settings.LOG_LEVEL)

    @property
    def bandwidth(self) -> int:
        return self.modes if self.modes is not None else settings.DEFAULT_MODES


class FieldSnapshot(BaseModel):
    """On-disk field: {"K", "real", "coeffs": [[re, im], ...]} for k = -K..K"""

    K: int = Field(..., ge=1)
    real: bool = True
    coeffs: List[List[float]] = Field(..., description="[re, im] pairs ordered by k")
    time: Optional[float] = None
    step: Optional[int] = None


class ConvergenceRow(BaseModel):
    """Error of one (gamma, tau) cell against the reference"""

    gamma: float
    tau: float
    error_l2: Optional[float] = Field(None, ge=0.0)
    modes: int
    T: float
    scheme: Scheme
    reference_tau: float
    status: RowStatus = RowStatus.OK
    diverged_step: Optional[int] = None


class FittedOrder(BaseModel):
    """Least-squares slope of log2 error against log2 tau for one gamma"""

    gamma: float
    order: Optional[float] = None
    intercept: Optional[float] = None
    used_taus: List[float] = Field(default_factory=list)
    saturation_floor: float = 0.0
    reference_gap: Optional[float] = None
    local_orders: List[Optional[float]] = Field(default_factory=list)
    note: Optional[str] = None


class BaselineComparison(BaseModel):
    """Primary scheme against a baseline on pre-saturation rows"""

    gamma: float
    primary_scheme: Scheme
    baseline_scheme: Scheme
    primary_order: Optional[float] = None
    baseline_order: Optional[float] = None
    order_gap: Optional[float] = None
    compared_taus: List[float] = Field(default_factory=list)
    primary_dominates: bool = False


class ConvergenceReport(BaseModel):
    """Rows sorted by (gamma, tau descending) plus one fit per gamma"""

    scheme: Scheme
    modes: int
    T: float
    reference_tau: float
    rows: List[ConvergenceRow] = Field(default_factory=list)
    fitted_orders: List[FittedOrder] = Field(default_factory=list)
    baseline_rows: List[ConvergenceRow] = Field(default_factory=list)
    baseline: List[BaselineComparison] = Field(default_factory=list)
    performance: Optional[Dict[str, Any]] = None

    def fit_for(self, gamma: float) -> Optional[FittedOrder]:
        return next((fit for fit in self.fitted_orders if fit.gamma == gamma), None)


class VerificationRecord(BaseModel):
    """One oracle or theory check result"""

    model_config = ConfigDict(populate_by_name=True)

    test: str
    K: Optional[int] = None
    tau: Optional[float] = None
    residual: float
    passed: bool = Field(..., alias="pass")
    fields: Optional[int] = None
