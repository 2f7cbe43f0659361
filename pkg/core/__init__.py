# core/__init__.py
"""
Core Super-Resolution Engine for ThermalSR
------------------------------------------
Autodiff operators, the recurrent cell, degradation, training, metrics
and complexity accounting. Import submodules directly, e.g.
``from core.network import init_network``.
"""

from .errors import ThermalSRError

__all__ = ["ThermalSRError"]
