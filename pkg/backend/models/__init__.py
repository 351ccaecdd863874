"""
Domain models: modes, media, sources, run configuration and result records.
"""

from .medium import ConformalRadialTensor, LayeredMedium, RadialLayer
from .modes import ModeCoefficients, ModeIndex, Polarization
from .source import CurrentFlavor, SourceKind, SphericalSource
from .results import (
    CauchyEstimate,
    Classification,
    ComplementarityReport,
    CriticalityReport,
    DampingBoundReport,
    RadiusScanReport,
    SweepRecord,
    SweepResult,
    ThreeSphereReport,
)

__all__ = [
    "ConformalRadialTensor",
    "LayeredMedium",
    "RadialLayer",
    "ModeCoefficients",
    "ModeIndex",
    "Polarization",
    "CurrentFlavor",
    "SourceKind",
    "SphericalSource",
    "CauchyEstimate",
    "Classification",
    "ComplementarityReport",
    "CriticalityReport",
    "DampingBoundReport",
    "RadiusScanReport",
    "SweepRecord",
    "SweepResult",
    "ThreeSphereReport",
]
