"""Worst-case Monte Carlo: maximise estimates over control families.

The upper expectation of a functional is the supremum of its mean over all
admissible volatility controls; this module estimates it from below by
evaluating a finite family of controls with common random numbers and taking
the best member.  Reported values are therefore family-sup lower estimates:
the gap to the true supremum is unknown and the PDE module provides the
independent upper oracle.

Paths are summarised on the fly by the backend kernels (terminal state,
running minimum, first-crossing indices, stopped integrals), so batch sizes
of 1e5+ paths with early exit at hitting times stay cheap.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import analytics
from .backend import kernels
from .controls import ControlSpec, compile_control
from .model import InvalidParameter, ModelParams, RngSpec, TimeGrid, validate

__all__ = [
    "Estimate",
    "PathStats",
    "run_path_stats",
    "PathFunctional",
    "estimate_expectation",
    "sup_expectation",
    "capacity",
    "HittingRecord",
    "detect_hitting",
    "capacity_curve",
    "ScaleMartingale",
    "LaplaceMartingale",
    "DriftStat",
    "martingale_drift",
    "exp_neg_terminal",
    "beta_sq_terminal",
    "constant_one",
    "hit_upper_first_event",
    "hit_lower_first_event",
]


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("GBESQ_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo value with standard error and 95% normal interval."""

    value: float
    stderr: float
    n_paths: int
    ci95: tuple[float, float]
    best_control: str | None = None

    @classmethod
    def from_values(cls, values: np.ndarray, control_name: str | None = None) -> "Estimate":
        n = values.shape[0]
        if n < 2:
            raise InvalidParameter("n_paths", "need at least 2 samples for a standard error")
        m = float(values.mean())
        se = float(values.std(ddof=1) / np.sqrt(n))
        return cls(m, se, n, (m - 1.96 * se, m + 1.96 * se), control_name)


@dataclass
class PathStats:
    """Per-path summaries at checkpoint nodes (last checkpoint = horizon).

    Shapes: scalar series are (n_paths, n_checkpoints); tau indices are
    (n_paths,) with -1 for "not hit within the horizon".  With
    ``freeze_at_exit`` the state stops evolving at the first crossing, so a
    checkpoint column holds the stopped value Z_{t ^ tau}.
    """

    params: ModelParams
    control_name: str
    z: np.ndarray
    beta: np.ndarray
    qv: np.ndarray
    y: np.ndarray
    min_z: np.ndarray
    tau_a: np.ndarray
    tau_b: np.ndarray
    checkpoint_nodes: np.ndarray
    checkpoint_times: np.ndarray
    horizon: float
    n_steps: int

    @property
    def n_paths(self) -> int:
        return self.z.shape[0]

    @property
    def z_T(self) -> np.ndarray:
        return self.z[:, -1]

    @property
    def beta_T(self) -> np.ndarray:
        return self.beta[:, -1]

    @property
    def qv_T(self) -> np.ndarray:
        return self.qv[:, -1]

    @property
    def y_T(self) -> np.ndarray:
        return self.y[:, -1]

    def column(self, t: float) -> int:
        """Index of the checkpoint at time t."""
        hits = np.nonzero(np.isclose(self.checkpoint_times, t, rtol=0, atol=1e-9))[0]
        if hits.size != 1:
            raise InvalidParameter("t", f"{t} is not a checkpoint time")
        return int(hits[0])


def run_summary_raw(params: ModelParams, dt_array: np.ndarray, control: ControlSpec,
                    n_paths: int, master_seed: int, *, a: float | None = None,
                    b: float | None = None, freeze_at_exit: bool = False,
                    chk_nodes: np.ndarray | None = None, path_offset: int = 0):
    """Low-level summary run on an explicit step array.

    ``chk_nodes`` are ascending node indices (>= 1); the final node is always
    appended.  Returns the raw kernel tuple (z, beta, qv, y, min_z, tau_a,
    tau_b).  Most callers want run_path_stats instead.
    """
    validate(params)
    d = params.int_d
    if n_paths < 1:
        raise InvalidParameter("n_paths", "must be positive")
    dt = np.ascontiguousarray(dt_array, dtype=float)
    n_steps = dt.shape[0]
    t_starts = np.concatenate([[0.0], np.cumsum(dt)[:-1]])
    compiled = compile_control(control, params, t_starts, float(np.sum(dt)))
    if chk_nodes is None:
        nodes = np.array([n_steps], dtype=np.int64)
    else:
        nodes = np.asarray(chk_nodes, dtype=np.int64)
        if nodes.size and (nodes[0] < 1 or np.any(np.diff(nodes) <= 0) or nodes[-1] > n_steps):
            raise InvalidParameter("chk_nodes", "must be ascending node indices in [1, n_steps]")
        if not nodes.size or nodes[-1] != n_steps:
            nodes = np.concatenate([nodes, [n_steps]])
    out = kernels().summary_kernel(
        np.uint64(master_seed), path_offset, n_paths, d, float(params.z), dt,
        compiled.mode, compiled.table, compiled.lo, compiled.hi, compiled.level,
        compiled.above_high,
        float(a) if a is not None else 0.0, 1 if a is not None else 0,
        float(b) if b is not None else 0.0, 1 if b is not None else 0,
        1 if freeze_at_exit else 0, nodes,
    )
    return out + (compiled, nodes)


def run_path_stats(params: ModelParams, grid: TimeGrid, control: ControlSpec,
                   n_paths: int, rng: RngSpec, *, a: float | None = None,
                   b: float | None = None, freeze_at_exit: bool = False,
                   checkpoint_times=None, path_offset: int = 0) -> PathStats:
    """Run the summary kernel for one control.

    ``a``/``b`` switch on first-crossing detection of Z <= a and Z >= b;
    ``freeze_at_exit`` stops a path at its first crossing.  Checkpoint times
    must lie on the grid; the horizon is always appended.
    """
    nodes = None
    if checkpoint_times is not None:
        idx = [grid.node_of(t) for t in checkpoint_times]
        if any(n == 0 for n in idx):
            raise InvalidParameter("checkpoint_times", "checkpoints must be positive times")
        nodes = np.array(sorted(set(idx)), dtype=np.int64)
    z, beta, qv, y, minz, tau_a, tau_b, compiled, nodes = run_summary_raw(
        params, grid.step_sizes(), control, n_paths, rng.master_seed,
        a=a, b=b, freeze_at_exit=freeze_at_exit, chk_nodes=nodes,
        path_offset=path_offset)
    return PathStats(
        params=params, control_name=compiled.name, z=z, beta=beta, qv=qv, y=y,
        min_z=minz, tau_a=tau_a, tau_b=tau_b, checkpoint_nodes=nodes,
        checkpoint_times=nodes * grid.dt, horizon=grid.horizon, n_steps=grid.n_steps,
    )


@dataclass(frozen=True)
class PathFunctional:
    """A per-path statistic plus the simulation features it needs."""

    name: str
    evaluate: Callable[[PathStats], np.ndarray]
    a: float | None = None
    b: float | None = None
    freeze_at_exit: bool = False
    checkpoint_times: tuple[float, ...] | None = None


def exp_neg_terminal(lam: float) -> PathFunctional:
    return PathFunctional(f"exp(-{lam:g} Z_T)",
                          lambda s: np.exp(-lam * s.z_T))


def beta_sq_terminal() -> PathFunctional:
    return PathFunctional("beta_T^2", lambda s: s.beta_T**2)


def constant_one() -> PathFunctional:
    return PathFunctional("1", lambda s: np.ones(s.n_paths))


def _b_first_values(s: PathStats) -> np.ndarray:
    hit_b = s.tau_b >= 0
    hit_a = s.tau_a >= 0
    return ((hit_b & ~hit_a) | (hit_b & hit_a & (s.tau_b < s.tau_a))).astype(float)


def _a_first_values(s: PathStats) -> np.ndarray:
    hit_b = s.tau_b >= 0
    hit_a = s.tau_a >= 0
    # ties go to the lower level
    return ((hit_a & ~hit_b) | (hit_a & hit_b & (s.tau_a <= s.tau_b))).astype(float)


def hit_upper_first_event(a: float, b: float) -> PathFunctional:
    """Indicator of reaching b before a (undecided paths count as 0)."""
    return PathFunctional(f"hit {b:g} before {a:g}", _b_first_values,
                          a=a, b=b, freeze_at_exit=True)


def hit_lower_first_event(a: float, b: float) -> PathFunctional:
    return PathFunctional(f"hit {a:g} before {b:g}", _a_first_values,
                          a=a, b=b, freeze_at_exit=True)


def estimate_expectation(functional: PathFunctional, params: ModelParams,
                         grid: TimeGrid, control: ControlSpec, n_paths: int,
                         rng: RngSpec) -> Estimate:
    """Plain Monte Carlo mean of the functional under one control."""
    if n_paths < 2:
        raise InvalidParameter("n_paths", "must be at least 2")
    stats = run_path_stats(
        params, grid, control, n_paths, rng, a=functional.a, b=functional.b,
        freeze_at_exit=functional.freeze_at_exit,
        checkpoint_times=functional.checkpoint_times,
    )
    return Estimate.from_values(np.asarray(functional.evaluate(stats), dtype=float),
                                stats.control_name)


def sup_expectation(functional: PathFunctional, params: ModelParams, grid: TimeGrid,
                    family: list[ControlSpec], n_paths: int, rng: RngSpec,
                    workers: int | None = None,
                    return_members: bool = False):
    """Family-sup lower estimate of the worst-case expectation.

    Every member sees the same random numbers (counter streams keyed by path
    ordinal), and members are evaluated independently (thread pool when
    ``workers`` > 1) with a fixed-order reduction, so the result does not
    depend on scheduling.  The reported stderr is the best member's; the
    selection is made on the same sample.
    """
    if not family:
        raise InvalidParameter("family", "must be nonempty")
    workers = workers if workers is not None else _default_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(
                lambda c: estimate_expectation(functional, params, grid, c, n_paths, rng),
                family))
    else:
        members = [estimate_expectation(functional, params, grid, c, n_paths, rng)
                   for c in family]
    best = max(range(len(members)), key=lambda i: members[i].value)
    if return_members:
        return members[best], members
    return members[best]


def capacity(event: PathFunctional, params: ModelParams, grid: TimeGrid,
             family: list[ControlSpec], n_paths: int, rng: RngSpec,
             workers: int | None = None, return_members: bool = False):
    """Family-sup lower estimate of the capacity of a path event.

    Same contract as sup_expectation with an indicator-valued functional.
    """
    return sup_expectation(event, params, grid, family, n_paths, rng,
                           workers=workers, return_members=return_members)


@dataclass(frozen=True)
class HittingRecord:
    """First-crossing node indices for one path; None means never hit."""

    tau_a_index: int | None
    tau_b_index: int | None
    first: str  # "a-first" | "b-first" | "neither"


def detect_hitting(z_series: np.ndarray, a: float, b: float) -> HittingRecord:
    """First grid index with Z <= a (resp. Z >= b) on an explicit series.

    Requires a < b and the start value strictly between them.  Ties at the
    same index resolve to a-first.
    """
    z_series = np.asarray(z_series, dtype=float)
    if not a < b:
        raise InvalidParameter("levels", f"need a < b, got a={a}, b={b}")
    if not (a < z_series[0] < b):
        raise InvalidParameter("levels", "start value must lie strictly between the levels")
    below = np.nonzero(z_series <= a)[0]
    above = np.nonzero(z_series >= b)[0]
    ta = int(below[0]) if below.size else None
    tb = int(above[0]) if above.size else None
    if ta is None and tb is None:
        first = "neither"
    elif tb is None or (ta is not None and ta <= tb):
        first = "a-first"
    else:
        first = "b-first"
    return HittingRecord(ta, tb, first)


_CURVE_KINDS = ("tau_b_gt_t", "tau_a_lt_t", "tau_0_gt_t", "min_before_T_below_a")


def capacity_curve(kind: str, sweep, params: ModelParams, grid: TimeGrid,
                   family: list[ControlSpec], n_paths: int, rng: RngSpec,
                   *, level: float | None = None, tau0_proxy_fraction: float = 1e-6,
                   workers: int | None = None) -> list[dict]:
    """Capacity estimates along a sweep, sharing one simulation per control.

    kinds (sweep variable in brackets):
      tau_b_gt_t            [t]  exit above ``level`` later than t
      tau_a_lt_t            [a]  reach below a before the fixed horizon
      tau_0_gt_t            [t]  origin proxy (a = tau0_proxy_fraction * z) not
                                 reached by t
      min_before_T_below_a  [a]  running minimum over the horizon at most a

    Rows are dicts {sweep, value, stderr, best_control}.  Because every
    member evaluates all sweep values on the same paths, monotone kinds give
    monotone estimate sequences by construction.
    """
    if kind not in _CURVE_KINDS:
        raise InvalidParameter("kind", f"unknown capacity curve kind {kind!r}")
    sweep = list(sweep)
    if sweep != sorted(sweep) and sweep != sorted(sweep, reverse=True):
        raise InvalidParameter("sweep", "sweep values must be ordered")
    if not sweep:
        raise InvalidParameter("sweep", "must be nonempty")
    workers = workers if workers is not None else _default_workers()

    if kind in ("tau_b_gt_t", "tau_0_gt_t"):
        checkpoints = None
        if kind == "tau_b_gt_t":
            if level is None:
                raise InvalidParameter("level", "tau_b_gt_t needs the upper level")
            run_kw = dict(b=level, freeze_at_exit=True)
        else:
            proxy = tau0_proxy_fraction * params.z
            if proxy <= 0:
                raise InvalidParameter("tau0_proxy_fraction", "proxy level must be positive")
            run_kw = dict(a=proxy, freeze_at_exit=True)
        nodes = [grid.node_of(t) for t in sweep]

        def values_for(stats: PathStats) -> list[np.ndarray]:
            tau = stats.tau_b if kind == "tau_b_gt_t" else stats.tau_a
            return [((tau < 0) | (tau > node)).astype(float) for node in nodes]
    else:
        # sweep over levels, one running-minimum simulation per control
        a_min = min(sweep)
        run_kw = dict(a=a_min, freeze_at_exit=True)
        checkpoints = None

        def values_for(stats: PathStats) -> list[np.ndarray]:
            return [(stats.min_z[:, -1] <= a).astype(float) for a in sweep]

    per_member: list[list[Estimate]] = []

    def eval_member(control: ControlSpec) -> list[Estimate]:
        stats = run_path_stats(params, grid, control, n_paths, rng,
                               checkpoint_times=checkpoints, **run_kw)
        return [Estimate.from_values(v, stats.control_name) for v in values_for(stats)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_member = list(pool.map(eval_member, family))
    else:
        per_member = [eval_member(c) for c in family]

    rows = []
    for j, s in enumerate(sweep):
        cands = [m[j] for m in per_member]
        best = max(range(len(cands)), key=lambda i: cands[i].value)
        e = cands[best]
        rows.append({"sweep": float(s), "value": e.value, "stderr": e.stderr,
                     "best_control": e.best_control})
    return rows


@dataclass(frozen=True)
class ScaleMartingale:
    """Scale function of Z stopped at the exit from (a, b)."""

    a: float
    b: float
    variant: str = "phi"  # phi vanishes at a; psi = 1 - phi vanishes at b

    def name(self) -> str:
        return f"{self.variant}(Z stopped at ({self.a:g},{self.b:g}))"

    def functional(self) -> PathFunctional:
        def values(s: PathStats) -> np.ndarray:
            phi = analytics.scale_function(s.z[:, -1], self.a, self.b, s.params.d)
            return phi if self.variant == "phi" else 1.0 - phi
        return PathFunctional(self.name(), values, a=self.a, b=self.b,
                              freeze_at_exit=True)

    def start_value(self, params: ModelParams, grid: TimeGrid) -> float:
        phi0 = analytics.scale_function(params.z, self.a, self.b, params.d)
        return float(phi0 if self.variant == "phi" else 1.0 - phi0)


@dataclass(frozen=True)
class LaplaceMartingale:
    """Exponential martingale behind the Laplace-transform bounds."""

    lam: float

    def name(self) -> str:
        return f"laplace martingale (lam={self.lam:g})"

    def functional(self) -> PathFunctional:
        def values(s: PathStats) -> np.ndarray:
            return analytics.laplace_martingale_terminal(
                s.z_T, s.qv_T, self.lam, s.horizon, s.params.d, s.params.sigma_hi_sq)
        return PathFunctional(self.name(), values)

    def start_value(self, params: ModelParams, grid: TimeGrid) -> float:
        return analytics.laplace_martingale_start(
            self.lam, grid.horizon, params.z, params.d, params.sigma_hi_sq)


@dataclass(frozen=True)
class DriftStat:
    """Batch mean and stderr of M_T - M_0; a pass is |mean| <= 4 stderr."""

    mean: float
    stderr: float
    n_paths: int
    m0: float
    control_name: str
    martingale: str

    @property
    def passed(self) -> bool:
        return abs(self.mean) <= 4.0 * self.stderr


def martingale_drift(martingale, params: ModelParams, grid: TimeGrid,
                     control: ControlSpec, n_paths: int, rng: RngSpec) -> DriftStat:
    """Drift check for a named martingale under one control.

    Under every fixed control the stopped scale functions and the Laplace
    martingale are true martingales, so the batch mean of M_T - M_0 should
    vanish to within Monte Carlo noise for each control separately.
    """
    func = martingale.functional()
    m0 = martingale.start_value(params, grid)
    stats = run_path_stats(params, grid, control, n_paths, rng, a=func.a, b=func.b,
                           freeze_at_exit=func.freeze_at_exit)
    vals = np.asarray(func.evaluate(stats), dtype=float) - m0
    est = Estimate.from_values(vals, stats.control_name)
    return DriftStat(est.value, est.stderr, n_paths, m0, stats.control_name,
                     martingale.name())
