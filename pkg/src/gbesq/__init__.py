"""Squared Bessel processes under volatility uncertainty.

Simulation of band-controlled Brownian paths and their squared modulus,
worst-case Monte Carlo over control families, closed-form exit capacities
and Laplace-transform bounds, and fully nonlinear PDE cross-checks.
"""

from .model import InvalidParameter, ModelParams, RngSpec, TimeGrid, validate

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "InvalidParameter",
    "ModelParams",
    "RngSpec",
    "TimeGrid",
    "validate",
]
