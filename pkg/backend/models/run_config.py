"""
Experiment run configuration read from the ``--config`` YAML file.

Numbers are kept as exact decimals while the file is validated and written
back; the float accessors are the only place they are converted.
"""

from decimal import Decimal
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from config.settings import dump_exact_yaml, load_exact_yaml
from core.exceptions import ConfigurationError, ValidationError
from models.modes import ModeIndex, Polarization
from models.source import CurrentFlavor, SphericalSource

DEFAULT_LADDER = [Decimal(f"1e-{k}") for k in range(2, 9)]


class GeometryConfig(BaseModel):
    """Radii and coefficients of the doubly complementary construction."""
    model_config = ConfigDict(extra="forbid")

    r2: Decimal = Field(Decimal(1), gt=0, description="Outer radius of the negative shell")
    r3: Decimal = Field(Decimal(2), gt=0, description="Outer radius of the complementary band")
    R0: Optional[Decimal] = Field(None, description="Radius beyond which the medium is vacuum")
    lam: Decimal = Field(Decimal(1), gt=0, description="Band coefficient λ")
    omega: Decimal = Field(Decimal(1), gt=0, description="Angular frequency")
    core_coefficient: Decimal = Field(Decimal(1), gt=0)
    exterior_coefficient: Decimal = Field(Decimal(1), gt=0)
    trivial: bool = Field(False, description="Replace every layer by vacuum")

    @model_validator(mode="after")
    def check_order(self) -> "GeometryConfig":
        if not self.r2 < self.r3:
            raise ValueError(f"r2 must be smaller than r3 (got r2={self.r2}, r3={self.r3})")
        if self.R0 is not None and self.R0 < self.r3:
            raise ValueError("R0 must be at least r3")
        return self

    def floats(self) -> dict:
        return {
            "r2": float(self.r2),
            "r3": float(self.r3),
            "lam": float(self.lam),
            "omega": float(self.omega),
            "R0": float(self.R0) if self.R0 is not None else None,
            "core_coefficient": float(self.core_coefficient),
            "exterior_coefficient": float(self.exterior_coefficient),
        }


class ModeAmplitude(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(..., ge=1)
    m: int = 0
    pol: Literal["TE", "TM"] = "TE"
    re: Decimal = Decimal(1)
    im: Decimal = Decimal(0)


class SourceConfig(BaseModel):
    """A single source sphere: an on-axis point dipole or explicit surface-current modes."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["point_dipole", "surface_current"] = "point_dipole"
    radius: Decimal = Field(Decimal("1.2"), gt=0)
    moment: List[Decimal] = Field(default_factory=lambda: [Decimal(0), Decimal(0), Decimal(1)])
    direction: List[Decimal] = Field(default_factory=lambda: [Decimal(0), Decimal(0), Decimal(1)])
    flavor: Literal["electric", "magnetic"] = "electric"
    modes: List[ModeAmplitude] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_kind(self) -> "SourceConfig":
        if len(self.moment) != 3 or len(self.direction) != 3:
            raise ValueError("moment and direction need three components")
        if self.kind == "surface_current" and not self.modes:
            raise ValueError("surface_current sources need at least one mode")
        for mode in self.modes:
            if abs(mode.m) > mode.n:
                raise ValueError(f"|m| must not exceed n for mode ({mode.n}, {mode.m})")
        return self

    def build(self, radius: Optional[float] = None) -> SphericalSource:
        r_s = float(self.radius) if radius is None else radius
        if self.kind == "point_dipole":
            return SphericalSource.point_dipole(
                r_s, tuple(float(v) for v in self.moment), tuple(float(v) for v in self.direction)
            )
        amplitudes = {
            ModeIndex(mode.n, mode.m, Polarization(mode.pol)): complex(float(mode.re), float(mode.im))
            for mode in self.modes
        }
        return SphericalSource.surface_current(r_s, amplitudes, CurrentFlavor(self.flavor))


class TruncationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_floor: Optional[int] = Field(None, ge=1)
    safety_factor: Optional[Decimal] = Field(None, gt=0)
    n_max: Optional[int] = Field(None, ge=1, description="Fixed truncation, disables the tail loop")


class RegionsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    exterior_outer: Optional[Decimal] = Field(None, gt=0, description="R of the exterior annulus B_R∖B_r3")


class ScanConfig(BaseModel):
    """Source radii of a critical-radius scan."""
    model_config = ConfigDict(extra="forbid")

    radii: List[Decimal] = Field(default_factory=list)
    start: Optional[Decimal] = None
    stop: Optional[Decimal] = None
    step: Decimal = Decimal("0.05")

    def grid(self, r2: float, r3: float) -> List[float]:
        if self.radii:
            return [float(r) for r in self.radii]
        start = self.start if self.start is not None else Decimal(str(r2)) + self.step
        stop = self.stop if self.stop is not None else Decimal(str(r3)) - self.step
        values = []
        current = start
        while current <= stop:
            values.append(float(current))
            current += self.step
        return values


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "results"
    plot: bool = False


class RunConfig(BaseModel):
    """Everything one command-line run needs."""
    model_config = ConfigDict(extra="forbid")

    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    source: SourceConfig = Field(default_factory=SourceConfig)
    ladder: List[Decimal] = Field(default_factory=lambda: list(DEFAULT_LADDER))
    delta: Decimal = Field(Decimal("1e-4"), ge=0, description="Loss level of a single solve")
    points: List[List[Decimal]] = Field(default_factory=list, description="Evaluation points of `solve`")
    truncation: TruncationConfig = Field(default_factory=TruncationConfig)
    regions: RegionsConfig = Field(default_factory=RegionsConfig)
    scan: ScanConfig = Field(default_factory=ScanConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    workers: int = Field(1, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def check_ladder(self) -> "RunConfig":
        if any(d <= 0 for d in self.ladder):
            raise ValueError("ladder values must be positive")
        if any(b >= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("ladder must be strictly decreasing")
        for point in self.points:
            if len(point) != 3:
                raise ValueError("evaluation points need three coordinates")
        return self

    @property
    def ladder_values(self) -> List[float]:
        return [float(d) for d in self.ladder]

    @property
    def point_values(self) -> List[Tuple[float, float, float]]:
        return [tuple(float(c) for c in point) for point in self.points]

    @classmethod
    def from_mapping(cls, data) -> "RunConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError("Run configuration root must be a mapping", error_code="config_root")
        try:
            return cls.model_validate(data)
        except PydanticValidationError as e:
            raise ValidationError(
                "Invalid run configuration",
                error_code="config_invalid",
                details={"errors": [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]},
            )

    @classmethod
    def load(cls, source: Union[str, Path]) -> "RunConfig":
        path = Path(source)
        if isinstance(source, Path) or "\n" not in str(source):
            if not path.exists():
                raise ConfigurationError(f"Run configuration not found: {source}", error_code="config_missing")
        return cls.from_mapping(load_exact_yaml(source))

    def to_yaml(self) -> str:
        return dump_exact_yaml(self.model_dump(mode="python"))
