"""Monotone explicit finite-difference oracles for worst-case expectations.

Two parabolic solvers, both explicit in time and monotone (each update is a
pointwise max of positively-weighted linear stencils, so the discrete
comparison principle holds by construction and the schemes converge to the
viscosity solution):

  * solve_heat_hjb: d/ds v = max over s2 in band of (s2/2) v_xx, the
    one-dimensional fully nonlinear heat equation driven by the band; v(s, x)
    is the worst-case expectation of payoff(x + radial increment over s).

  * solve_besq_hjb: d/ds v = max over s2 of s2 (d v_z + 2 z v_zz) on
    [0, z_max], the radial generator of the squared-modulus process.  The
    second derivative uses central differences; the drift term is central
    wherever that keeps all stencil weights nonnegative (z >= d dx / 4) and
    one-sided otherwise; at z = 0 the diffusion degenerates and the operator
    reduces to the one-sided drift d v_z.  Far boundary is Dirichlet at the
    payoff value, with the domain sized so the cut is statistically invisible.

Both step counts are inflated automatically to meet the stability bound;
passing an explicit n_t below the bound raises StabilityError carrying the
required count.  A linear two-point boundary-value solver reproduces the
exit-split capacities as a stationary cross-check.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, lcm
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .backend import kernels
from .model import InvalidParameter, ModelParams, validate

__all__ = [
    "StabilityError",
    "PdeSolution",
    "solve_heat_hjb",
    "solve_besq_hjb",
    "solve_exit_bvp",
    "suggested_zmax",
    "export_solution_csv",
]


class StabilityError(ValueError):
    """Explicit-scheme stability violated; carries the required step count."""

    def __init__(self, message: str, required_n_t: int):
        super().__init__(f"{message}; need n_t >= {required_n_t}")
        self.required_n_t = required_n_t


@dataclass
class PdeSolution:
    """Nodal values after the full solve plus scheme metadata.

    ``values`` is v at the final evolved time (the time-0 value of the
    backward problem); ``snapshots`` maps intermediate evolved times to their
    nodal arrays.
    """

    x: np.ndarray
    values: np.ndarray
    metadata: dict
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)

    def value_at(self, x0: float, evolved_time: float | None = None) -> float:
        u = self.values if evolved_time is None else self.snapshots[evolved_time]
        if x0 < self.x[0] - 1e-12 or x0 > self.x[-1] + 1e-12:
            raise InvalidParameter("x0", f"{x0} outside the solved domain")
        return float(np.interp(x0, self.x, u))


def _n_t_for_snapshots(n_t_min: int, horizon: float, snapshot_times) -> int:
    """Smallest n_t >= n_t_min making every snapshot land on a step boundary."""
    if not snapshot_times:
        return n_t_min
    denom = 1
    for s in snapshot_times:
        frac = Fraction(s / horizon).limit_denominator(10**6)
        if abs(float(frac) - s / horizon) > 1e-12:
            raise InvalidParameter("snapshot_times", f"{s} is not a rational fraction of the horizon")
        denom = lcm(denom, frac.denominator)
    return ceil(n_t_min / denom) * denom


def _snap_steps(n_t: int, horizon: float, snapshot_times):
    """Step indices to record, and the requested time labelling each step."""
    by_step: dict[int, float] = {}
    for s in snapshot_times:
        by_step[round(s / horizon * n_t)] = float(s)
    by_step.setdefault(n_t, float(horizon))
    steps = np.array(sorted(by_step), dtype=np.int64)
    return steps, [by_step[int(m)] for m in steps]


def _payoff_values(payoff: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    vals = np.asarray(payoff(x), dtype=float)
    if vals.shape != x.shape:
        vals = np.array([float(payoff(xi)) for xi in x])
    if not np.all(np.isfinite(vals)):
        raise InvalidParameter("payoff", "must be finite on the domain")
    return vals


def solve_heat_hjb(payoff, params: ModelParams, horizon: float,
                   domain: tuple[float, float], n_x: int, n_t: int | None = None,
                   snapshot_times=None, cfl: float = 0.5) -> PdeSolution:
    """Worst-case heat equation on [lo, hi] with Dirichlet payoff boundaries.

    Stability requires sigma_hi_sq * dt / dx^2 <= cfl (default 1/2).  The
    value at (x=0, full horizon) estimates the worst-case expectation of
    payoff at the horizon started from 0.
    """
    validate(params)
    lo_x, hi_x = domain
    if not hi_x > lo_x:
        raise InvalidParameter("domain", "must be a nonempty interval")
    if n_x < 3:
        raise InvalidParameter("n_x", "need at least 3 nodes")
    snapshot_times = list(snapshot_times or [])
    x = np.linspace(lo_x, hi_x, n_x)
    dx = x[1] - x[0]
    dt_max = cfl * dx * dx / params.sigma_hi_sq
    n_t_req = ceil(horizon / dt_max)
    if n_t is None:
        n_t = _n_t_for_snapshots(n_t_req, horizon, snapshot_times)
    elif n_t < n_t_req:
        raise StabilityError(
            f"sigma_hi_sq*dt/dx^2 = {params.sigma_hi_sq * (horizon / n_t) / dx**2:.3f} > {cfl}",
            n_t_req)
    dt = horizon / n_t
    u0 = _payoff_values(payoff, x)
    snaps, labels = _snap_steps(n_t, horizon, snapshot_times)
    out = kernels().heat_hjb_run(u0, dt, 1.0 / (dx * dx), params.sigma_lo_sq,
                                 params.sigma_hi_sq, n_t, snaps)
    snapshots = {label: out[i].copy() for i, label in enumerate(labels)}
    meta = {"scheme": "explicit heat band", "dx": dx, "dt": dt, "n_t": n_t,
            "cfl_ratio": params.sigma_hi_sq * dt / dx**2, "domain": [lo_x, hi_x],
            "horizon": horizon}
    return PdeSolution(x, out[-1].copy(), meta, snapshots)


def _besq_operator(x: np.ndarray, d: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stencil weights of L v = d v_z + 2 z v_zz with monotone switching."""
    n_x = x.shape[0]
    dx = x[1] - x[0]
    cL = np.zeros(n_x)
    cC = np.zeros(n_x)
    cR = np.zeros(n_x)
    # z = 0: diffusion vanishes, one-sided drift
    cC[0] = -d / dx
    cR[0] = d / dx
    z = x[1:-1]
    diff = 2.0 * z / dx**2
    central_ok = z >= d * dx / 4.0
    cL[1:-1] = np.where(central_ok, diff - d / (2.0 * dx), diff)
    cC[1:-1] = np.where(central_ok, -2.0 * diff, -2.0 * diff - d / dx)
    cR[1:-1] = np.where(central_ok, diff + d / (2.0 * dx), diff + d / dx)
    return cL, cC, cR


def besq_stability_dt(params: ModelParams, z_max: float, dx: float) -> float:
    """dt bound dx^2 / (2 sigma_hi_sq (d dx / 2 + 2 z_max)) for the radial solve."""
    return dx * dx / (2.0 * params.sigma_hi_sq * (params.d * dx / 2.0 + 2.0 * z_max))


def solve_besq_hjb(payoff, params: ModelParams, horizon: float, z_max: float,
                   n_z: int, n_t: int | None = None, snapshot_times=None,
                   safety: float = 0.95) -> PdeSolution:
    """Worst-case expectation of payoff(Z at horizon) as a function of the start.

    Returns nodal v on [0, z_max]; v(z) estimates the worst-case expectation
    started from z.  Dirichlet far boundary at payoff(z_max): size the domain
    with suggested_zmax so paths essentially never reach it.
    """
    validate(params)
    if z_max <= 0:
        raise InvalidParameter("z_max", "must be positive")
    if n_z < 3:
        raise InvalidParameter("n_z", "need at least 3 nodes")
    snapshot_times = list(snapshot_times or [])
    x = np.linspace(0.0, z_max, n_z)
    dx = x[1] - x[0]
    dt_max = safety * besq_stability_dt(params, z_max, dx)
    n_t_req = ceil(horizon / dt_max)
    if n_t is None:
        n_t = _n_t_for_snapshots(n_t_req, horizon, snapshot_times)
    elif n_t < n_t_req:
        raise StabilityError("explicit radial scheme unstable at this n_t", n_t_req)
    dt = horizon / n_t
    cL, cC, cR = _besq_operator(x, params.d)
    u0 = _payoff_values(payoff, x)
    snaps, labels = _snap_steps(n_t, horizon, snapshot_times)
    out = kernels().besq_hjb_run(u0, cL, cC, cR, dt, params.sigma_lo_sq,
                                 params.sigma_hi_sq, n_t, snaps)
    snapshots = {label: out[i].copy() for i, label in enumerate(labels)}
    meta = {"scheme": "explicit radial band, central/upwind drift", "dx": dx,
            "dt": dt, "n_t": n_t, "stability_dt": besq_stability_dt(params, z_max, dx),
            "domain": [0.0, z_max], "horizon": horizon}
    return PdeSolution(x, out[-1].copy(), meta, snapshots)


def suggested_zmax(params: ModelParams, horizon: float, z: float | None = None) -> float:
    """Domain cut z + 6 sigma_hi sqrt(d) T + d sigma_hi_sq T (start + drift + spread)."""
    z0 = params.z if z is None else z
    s = np.sqrt(params.sigma_hi_sq)
    return float(z0 + 6.0 * s * np.sqrt(params.d) * horizon + params.d * params.sigma_hi_sq * horizon)


def solve_exit_bvp(a: float, b: float, d: float, n_z: int) -> PdeSolution:
    """Stationary exit problem d w' + 2 z w'' = 0, w(a) = 0, w(b) = 1.

    Solved directly as a banded linear system; w(z) is the capacity of
    exiting through b before a and must reproduce the closed-form scale
    ratio.
    """
    if not (0 < a < b):
        raise InvalidParameter("levels", f"need 0 < a < b, got a={a}, b={b}")
    if d <= 0:
        raise InvalidParameter("d", "must be positive")
    if n_z < 3:
        raise InvalidParameter("n_z", "need at least 3 nodes")
    x = np.linspace(a, b, n_z)
    h = x[1] - x[0]
    lower = np.zeros(n_z)
    diag = np.zeros(n_z)
    upper = np.zeros(n_z)
    rhs = np.zeros(n_z)
    diag[0] = 1.0
    diag[-1] = 1.0
    rhs[-1] = 1.0
    zi = x[1:-1]
    lower[0:n_z - 2] = 2.0 * zi / h**2 - d / (2.0 * h)   # sub-diagonal entries (rows 1..n-2)
    diag[1:-1] = -4.0 * zi / h**2
    upper[2:n_z] = 2.0 * zi / h**2 + d / (2.0 * h)       # super-diagonal entries
    ab = np.vstack([upper, diag, lower])
    w = solve_banded((1, 1), ab, rhs)
    meta = {"scheme": "central-difference exit problem", "dx": h, "domain": [a, b], "d": d}
    return PdeSolution(x, w, meta)


def export_solution_csv(sol: PdeSolution, path: str | Path) -> Path:
    """Write (grid point, value) rows plus a sibling JSON metadata file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for xi, vi in zip(sol.x, sol.values):
            w.writerow([repr(float(xi)), repr(float(vi))])
    meta_path = path.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(sol.metadata, indent=2, sort_keys=True))
    return path
