"""
Numerical services: special functions, transforms, media, solver and resonance diagnostics.
"""

from .resonance import ResonanceAnalyzer
from .solver import SpectralSolver

__all__ = [
    "ResonanceAnalyzer",
    "SpectralSolver",
]
