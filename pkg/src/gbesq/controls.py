"""Volatility controls: one control = one candidate measure for the band.

A control assigns each grid cell an instantaneous variance sigma^2 in
[sigma_lo_sq, sigma_hi_sq]; the same value multiplies all coordinates.
Controls are evaluated left-continuously (the value at the cell start rules
the whole cell), and feedback rules read only the current state, never the
future.

Worst-case expectations are estimated by maximising Monte Carlo means over
finite families of these controls; see gbesq.mc.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import InvalidParameter, ModelParams

__all__ = [
    "Constant",
    "PiecewiseConstant",
    "FeedbackBangBang",
    "ControlSpec",
    "CompiledControl",
    "compile_control",
    "constant_grid_family",
    "bang_bang_family",
    "feedback_family",
]

_BAND_TOL = 1e-12


@dataclass(frozen=True)
class Constant:
    """sigma^2 fixed at ``value`` for all times."""

    value: float

    @property
    def name(self) -> str:
        return f"const[{self.value:g}]"


@dataclass(frozen=True)
class PiecewiseConstant:
    """sigma^2 = values[i] on [breakpoints[i-1], breakpoints[i]).

    ``len(values) == len(breakpoints) + 1``; breakpoints are strictly
    increasing and interior to the horizon.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(t) for t in self.breakpoints))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != len(self.breakpoints) + 1:
            raise InvalidParameter("values", "need exactly one more value than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise InvalidParameter("breakpoints", "must be strictly increasing")

    @property
    def name(self) -> str:
        vals = ",".join(f"{v:g}" for v in self.values)
        return f"piecewise[{vals}]"


@dataclass(frozen=True)
class FeedbackBangBang:
    """Threshold rule on the current squared modulus.

    policy "high_when_above": sigma^2 = sigma_hi_sq when Z_t >= level,
    else sigma_lo_sq.  policy "low_when_above" flips the two.
    """

    policy: str
    level: float

    def __post_init__(self):
        if self.policy not in ("high_when_above", "low_when_above"):
            raise InvalidParameter("policy", f"unknown feedback policy {self.policy!r}")

    @property
    def name(self) -> str:
        return f"{self.policy}[{self.level:g}]"


ControlSpec = Constant | PiecewiseConstant | FeedbackBangBang


@dataclass(frozen=True)
class CompiledControl:
    """Kernel encoding of a control on a concrete step grid.

    mode 0: per-step table of sigma^2 values.  mode 1: threshold feedback
    (lo, hi, level, above_high).
    """

    mode: int
    table: np.ndarray = field(repr=False)
    lo: float
    hi: float
    level: float
    above_high: int
    name: str


def _check_in_band(values: np.ndarray, params: ModelParams, name: str) -> None:
    lo, hi = params.band
    if np.any(values < lo - _BAND_TOL) or np.any(values > hi + _BAND_TOL):
        raise InvalidParameter(
            "control", f"{name} takes values outside the band [{lo}, {hi}]"
        )


def compile_control(control: ControlSpec, params: ModelParams,
                    step_starts: np.ndarray, horizon: float) -> CompiledControl:
    """Resolve a control to its kernel encoding on the given cell starts."""
    lo, hi = params.band
    empty = np.empty(0)
    if isinstance(control, Constant):
        vals = np.full(step_starts.shape[0], float(control.value))
        _check_in_band(vals, params, control.name)
        return CompiledControl(0, vals, lo, hi, 0.0, 1, control.name)
    if isinstance(control, PiecewiseConstant):
        bps = np.asarray(control.breakpoints)
        if bps.size and (bps[0] <= 0.0 or bps[-1] >= horizon):
            raise InvalidParameter("breakpoints", "must lie strictly inside (0, horizon)")
        vals = np.asarray(control.values)[np.searchsorted(bps, step_starts, side="right")]
        _check_in_band(vals, params, control.name)
        return CompiledControl(0, vals, lo, hi, 0.0, 1, control.name)
    if isinstance(control, FeedbackBangBang):
        return CompiledControl(
            1, empty, lo, hi, float(control.level),
            1 if control.policy == "high_when_above" else 0, control.name,
        )
    raise InvalidParameter("control", f"unknown control type {type(control).__name__}")


def constant_grid_family(params: ModelParams, m: int) -> list[Constant]:
    """m constant controls spanning the band (endpoints included)."""
    if m < 1:
        raise InvalidParameter("m", "family size must be positive")
    if m == 1:
        return [Constant(params.sigma_hi_sq)]
    return [Constant(v) for v in np.linspace(params.sigma_lo_sq, params.sigma_hi_sq, m)]


def bang_bang_family(params: ModelParams, switch_times: tuple[float, ...]) -> list[PiecewiseConstant]:
    """Extreme-valued piecewise controls switching at the given times, both phase orders."""
    lo, hi = params.band
    k = len(switch_times) + 1
    lo_first = tuple(lo if i % 2 == 0 else hi for i in range(k))
    hi_first = tuple(hi if i % 2 == 0 else lo for i in range(k))
    return [
        PiecewiseConstant(tuple(switch_times), lo_first),
        PiecewiseConstant(tuple(switch_times), hi_first),
    ]


def feedback_family(levels: tuple[float, ...]) -> list[FeedbackBangBang]:
    """Both threshold feedback policies at each level."""
    out: list[FeedbackBangBang] = []
    for lv in levels:
        out.append(FeedbackBangBang("high_when_above", lv))
        out.append(FeedbackBangBang("low_when_above", lv))
    return out
