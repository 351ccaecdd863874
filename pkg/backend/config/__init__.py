"""
Configuration management for the resonance toolkit.

This module provides:
- YAML application settings with dot access
- exact-decimal YAML loading and dumping for run configuration files
"""

from .settings import Settings, get_settings, load_exact_yaml, dump_exact_yaml

__all__ = ["Settings", "get_settings", "load_exact_yaml", "dump_exact_yaml"]
