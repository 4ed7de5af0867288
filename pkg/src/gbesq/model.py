"""Parameter objects, time grids and seed handling shared by all modules.

Everything here is an immutable value object; simulation and PDE code takes
these as inputs and never mutates them, so they are safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "InvalidParameter",
    "ModelParams",
    "TimeGrid",
    "RngSpec",
    "validate",
]

_U64_MASK = (1 << 64) - 1


class InvalidParameter(ValueError):
    """Raised when a parameter violates an invariant; names the field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ModelParams:
    """Process dimension, start value and the volatility band.

    ``d`` may be any positive real for SDE, PDE and closed-form work; the
    coordinate (modulus) construction additionally requires it to be a
    positive integer.  ``sigma_lo_sq``/``sigma_hi_sq`` are the squared
    volatility bounds: every admissible instantaneous variance lies in
    ``[sigma_lo_sq, sigma_hi_sq]``.
    """

    d: float
    z: float
    sigma_lo_sq: float
    sigma_hi_sq: float

    @property
    def band(self) -> tuple[float, float]:
        return (self.sigma_lo_sq, self.sigma_hi_sq)

    @property
    def int_d(self) -> int:
        """Dimension as an integer, for the coordinate construction."""
        d = int(round(self.d))
        if abs(self.d - d) > 0.0 or d < 1:
            raise InvalidParameter("d", "must be a positive integer for the modulus construction")
        return d

    def with_band(self, lo: float, hi: float) -> "ModelParams":
        return replace(self, sigma_lo_sq=lo, sigma_hi_sq=hi)


def validate(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged if all invariants hold.

    Violations raise :class:`InvalidParameter` naming the offending field.
    """
    if not np.isfinite(params.d) or params.d <= 0:
        raise InvalidParameter("d", "must be positive")
    if not np.isfinite(params.z) or params.z < 0:
        raise InvalidParameter("z", "must be nonnegative")
    if not np.isfinite(params.sigma_lo_sq) or params.sigma_lo_sq <= 0:
        raise InvalidParameter("sigma_lo_sq", "must be positive")
    if not np.isfinite(params.sigma_hi_sq) or params.sigma_hi_sq <= 0:
        raise InvalidParameter("sigma_hi_sq", "must be positive")
    if params.sigma_lo_sq > params.sigma_hi_sq:
        raise InvalidParameter("sigma_lo_sq", "must not exceed sigma_hi_sq")
    return params


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * horizon / n_steps on [0, horizon]."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise InvalidParameter("horizon", "must be positive")
        if self.n_steps < 1:
            raise InvalidParameter("n_steps", "must be a positive integer")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def times(self) -> np.ndarray:
        """All n_steps + 1 node times, t_0 = 0 through t_n = horizon."""
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def step_sizes(self) -> np.ndarray:
        return np.full(self.n_steps, self.dt)

    def node_of(self, t: float) -> int:
        """Index of the node at time ``t``; errors if t is off-grid."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(self.dt, 1.0):
            raise InvalidParameter("t", f"{t} does not lie on the grid (dt={self.dt})")
        return k


@dataclass(frozen=True)
class RngSpec:
    """Master seed for counter-derived per-path random streams.

    Stream index equals the path ordinal, and each draw is addressed by
    (master_seed, path index, step index, slot), so results are identical
    for any batch split or degree of parallelism.
    """

    master_seed: int

    def __post_init__(self):
        if not isinstance(self.master_seed, (int, np.integer)):
            raise InvalidParameter("master_seed", "must be an integer")
        object.__setattr__(self, "master_seed", int(self.master_seed) & _U64_MASK)
