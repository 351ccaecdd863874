"""
Service container wiring settings to the numerical services.
"""

import logging
from typing import Optional

from config.settings import Settings, get_settings

logger = logging.getLogger(__name__)


class Container:
    """Lazily constructed, shared service instances."""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()
        self._solver = None
        self._analyzer = None

    @property
    def solver(self):
        if self._solver is None:
            from services.solver import SpectralSolver

            self._solver = SpectralSolver(self.settings)
            logger.debug("Spectral solver created")
        return self._solver

    @property
    def analyzer(self):
        if self._analyzer is None:
            from services.resonance import ResonanceAnalyzer

            self._analyzer = ResonanceAnalyzer(self.solver, self.settings)
        return self._analyzer

    def writer(self, directory):
        from utils.result_writer import ResultWriter

        return ResultWriter.from_settings(directory, self.settings)


_container: Optional[Container] = None


def get_container() -> Container:
    """Process-wide container built from the default settings."""
    global _container
    if _container is None:
        _container = Container()
    return _container
