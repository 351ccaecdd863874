"""
Result records produced by the resonance diagnostics and written by the CLI.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class Classification(str, Enum):
    """Behaviour of the dissipated power as the loss parameter goes to zero."""
    BLOW_UP = "BlowUp"
    BOUNDED = "Bounded"


SWEEP_COLUMNS = (
    "delta",
    "power_shell",
    "power_Br3",
    "norm_exterior",
    "norm_diff_tilde",
    "n_max",
    "tail_estimate",
)


class SweepRecord(BaseModel):
    """One loss level of a δ-sweep."""
    model_config = ConfigDict(ser_json_inf_nan="strings")

    delta: float = Field(..., gt=0, description="Loss parameter")
    power_shell: Optional[float] = Field(None, description="δ·‖(E,H)‖² over the lossy shell")
    power_Br3: Optional[float] = Field(None, description="δ·‖(E,H)‖² over B_{r3}")
    norm_exterior: Optional[float] = Field(None, description="‖(E,H)‖ over the exterior annulus")
    norm_diff_tilde: Optional[float] = Field(None, description="‖(E,H) − (Ẽ,H̃)‖ over the exterior annulus")
    n_max: Optional[int] = Field(None, description="Mode truncation used")
    tail_estimate: Optional[float] = Field(None, description="Relative weight of the last truncation window")
    peak_order: Optional[int] = Field(None, description="Order with the largest shell contribution")
    trace_surrogate: Optional[float] = Field(None, description="Mode-weighted trace norm on |x| = r2")
    status: str = "ok"
    error: Optional[Dict[str, Any]] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def csv_row(self) -> Tuple[Any, ...]:
        return tuple(getattr(self, column) for column in SWEEP_COLUMNS)


class SweepResult(BaseModel):
    """Ordered δ-sweep, largest δ first."""
    model_config = ConfigDict(ser_json_inf_nan="strings")

    records: List[SweepRecord] = Field(default_factory=list)
    source_radius: Optional[float] = Field(None, description="Radius of a single-sphere source")
    medium_label: str = ""
    r2: Optional[float] = None
    r3: Optional[float] = None
    cauchy_log_coefficients: Optional[List[float]] = Field(
        None, description="ln|c_n| of the source's regular part, n = 1.."
    )
    source_is_finite: bool = False

    def successful(self) -> List[SweepRecord]:
        return [record for record in self.records if record.ok]


class CriticalityReport(BaseModel):
    """Blow-up classification of one sweep."""
    model_config = ConfigDict(ser_json_inf_nan="strings")

    classification: Classification
    fitted_exponent: float = Field(..., description="s in P_δ ~ δ^s from windowed maxima")
    fit_residual: float = 0.0
    n_points: int = 0
    source_radius: Optional[float] = None
    predicted_exponent: Optional[float] = Field(
        None, description="1 − 2 ln(r3/r_s)/ln(r3/r2)"
    )
    prediction_label: Optional[str] = None
    cauchy_radius: Optional[float] = Field(None, description="Estimated Cauchy radius r̂₀")
    theoretical_r_star: Optional[float] = Field(None, description="√(r2 r3)")


class RadiusScanReport(BaseModel):
    """Critical-radius scan over source radii."""
    model_config = ConfigDict(ser_json_inf_nan="strings")

    radii: List[float]
    reports: List[CriticalityReport]
    bracket: Optional[Tuple[float, float]] = None
    r_star_estimate: Optional[float] = None
    r_star_theory: float
    endpoint_classifications: Tuple[Classification, Classification]


class ComplementarityReport(BaseModel):
    """Residuals of a complementarity / doubly-complementary check."""
    eps_residual: float = 0.0
    mu_residual: float = 0.0
    boundary_residual: float = 0.0
    n_used: int = 0
    n_skipped: int = 0

    @property
    def max_residual(self) -> float:
        return max(self.eps_residual, self.mu_residual, self.boundary_residual)


class ThreeSphereReport(BaseModel):
    """Worst three-sphere constant over a random ensemble of free fields."""
    radii: Tuple[float, float, float]
    alpha: float
    worst_constant: float
    n_fields: int
    seed: int


class DampingBoundReport(BaseModel):
    """Frozen constants of the two scalar damping inequalities."""
    alpha: float
    r0: float
    lower_constant: float
    upper_constant: float


class CauchyEstimate(BaseModel):
    """Estimated radius of convergence of a coefficient sequence."""
    model_config = ConfigDict(ser_json_inf_nan="strings")

    radius: float
    method: str
    n_used: int = 0
