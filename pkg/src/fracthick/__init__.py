"""Exponentially thick sets, fractional heat observability and coherent-state probes.

Modules
-------
intervals, svc, thickness
    Exact interval unions, Smith-Volterra-Cantor sets and thickness profiles.
spectral
    Periodic spectral grid, spectral-inequality and observability constants.
probe
    The coherent-state probe ``g_h`` and the necessity experiment.
cli
    The ``fracthick`` command.
"""

from __future__ import annotations

from .intervals import IntervalError, IntervalUnion
from .kernels import BACKEND
from .svc import ResourceBudgetError, SvcParams, SvcSet, svc_construct

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "IntervalError",
    "IntervalUnion",
    "ResourceBudgetError",
    "SvcParams",
    "SvcSet",
    "svc_construct",
    "__version__",
]
