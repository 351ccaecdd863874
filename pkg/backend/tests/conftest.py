#!/usr/bin/env python3
"""
Test configuration and fixtures for backend tests.
"""

import sys
from pathlib import Path

import pytest

# Add backend to path
backend_dir = Path(__file__).parent.parent
sys.path.insert(0, str(backend_dir))


@pytest.fixture
def settings():
    """Get test settings configuration."""
    from config import get_settings
    return get_settings()


@pytest.fixture
def container(settings):
    """Fresh service container for each test."""
    from core.container import Container
    return Container(settings)


@pytest.fixture
def solver(container):
    return container.solver


@pytest.fixture
def analyzer(container):
    return container.analyzer


@pytest.fixture(scope="session")
def dc_medium():
    """Doubly complementary construction with r2 = 1, r3 = 2, λ = ω = 1."""
    from services.transform import build_dc_medium
    return build_dc_medium(1.0, 2.0)


@pytest.fixture
def vacuum():
    """Single vacuum layer."""
    from models.medium import ConformalRadialTensor, LayeredMedium, RadialLayer
    one = ConformalRadialTensor.constant(1.0)
    return LayeredMedium(layers=(RadialLayer(0.0, float("inf"), one, one, name="vacuum"),), omega=1.0)
