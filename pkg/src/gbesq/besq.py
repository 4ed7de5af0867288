"""Squared Bessel constructions, transforms, and scheme diagnostics.

Two independent constructions of the squared-radius process Z:

  * modulus: Z = |B|^2 from the coordinate paths (exact at the nodes under
    piecewise-constant controls);
  * Euler: the clamped scheme for dZ = 2 sqrt(Z) d(beta) + d d<beta>, driven
    by the same (beta, qv) increments.

Their pathwise gap is the strong Euler error and decays like sqrt(dt); the
refinement helpers measure that rate, which is the package's main scheme
diagnostic.  Also here: the sqrt(Z) equation residual, the diffusive scaling
and time-inversion transforms, and the exponential time change that turns Z
into a mean-reverting square-root process.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controls import ControlSpec
from .model import InvalidParameter, ModelParams, RngSpec, TimeGrid, validate
from .paths import PathBundle, accumulate_beta, simulate_paths

__all__ = [
    "CirSpec",
    "besq_from_modulus",
    "besq_sde_euler",
    "bessel_residual",
    "equivalence_refinement",
    "scaling_transform",
    "time_inversion",
    "cir_transform",
    "cir_refinement",
    "GridCompatibilityError",
]

_SQRT_EPS = 1e-10  # guards the 1/sqrt(Z) integrand against fp underflow


class GridCompatibilityError(ValueError):
    """A requested time does not land on a grid node."""


@dataclass(frozen=True)
class CirSpec:
    """Mean-reversion rate a, drift level b, diffusion coefficient c.

    Compatible with dimension d only when 4b / c^2 = d; init validates a, c
    positive and b nonnegative, the dimension match is checked against the
    model parameters by cir_transform.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.a <= 0:
            raise InvalidParameter("a", "must be positive")
        if self.c <= 0:
            raise InvalidParameter("c", "must be positive")
        if self.b < 0:
            raise InvalidParameter("b", "must be nonnegative")

    @property
    def implied_d(self) -> float:
        return 4.0 * self.b / self.c**2

    def time_change(self, t):
        """f(t) = (c^2 / 4a) (e^{at} - 1); maps process time to radial time."""
        return (self.c**2 / (4.0 * self.a)) * np.expm1(self.a * np.asarray(t, dtype=float))


def besq_from_modulus(bundle: PathBundle) -> PathBundle:
    """Fill Z = |B|^2 (sum of squared coordinates); Z_0 is set to z exactly."""
    bundle.Z = np.einsum("pik,pik->pk", bundle.B, bundle.B)
    bundle.Z[:, 0] = bundle.params.z
    return bundle


def besq_sde_euler(params: ModelParams, dt: np.ndarray, beta: np.ndarray,
                   qv: np.ndarray) -> np.ndarray:
    """Clamped Euler scheme for dZ = 2 sqrt(Z) d(beta) + d d<beta>.

    ``beta`` and ``qv`` are node series of shape (n_paths, n_steps + 1);
    the scheme is Z_{k+1} = max(0, Z_k + 2 sqrt(max(Z_k, 0)) dbeta_k + d dqv_k),
    so the output is nonnegative by construction.
    """
    validate(params)
    n_steps = dt.shape[0]
    if beta.shape[1] != n_steps + 1 or qv.shape[1] != n_steps + 1:
        raise InvalidParameter("beta", "series length must match the step array")
    dbeta = np.diff(beta, axis=1)
    dqv = np.diff(qv, axis=1)
    z = np.empty_like(beta)
    z[:, 0] = params.z
    cur = z[:, 0].copy()
    for k in range(n_steps):
        cur = cur + 2.0 * np.sqrt(np.maximum(cur, 0.0)) * dbeta[:, k] + params.d * dqv[:, k]
        np.maximum(cur, 0.0, out=cur)
        z[:, k + 1] = cur
    return z


@dataclass(frozen=True)
class ResidualStats:
    """Pathwise equation-defect summary: per-path sups, their RMS, and dt."""

    sup_per_path: np.ndarray
    rms: float
    sup: float
    dt: float
    order_estimate: float | None = None

    def to_json_block(self) -> dict:
        out = {"rms": self.rms, "sup": self.sup, "dt": self.dt,
               "order_estimate": self.order_estimate}
        return out

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_block(), indent=2))


def bessel_residual(bundle: PathBundle, eps: float = _SQRT_EPS) -> ResidualStats:
    """Defect of the sqrt(Z) equation along each path.

    residual_k = sqrt(Z_k) - sqrt(z) - (d-1)/2 * sum_{j<k} Z_j^{-1/2} 1_{Z_j > eps} dqv_j - beta_k

    Requires d >= 2 and z > 0 (below the origin is reachable and sqrt is not
    smooth there).  Returns the per-path sup over nodes and the batch RMS.
    """
    params = bundle.params
    if params.d < 2:
        raise InvalidParameter("d", "the sqrt(Z) equation requires d >= 2")
    if params.z <= 0:
        raise InvalidParameter("z", "must be positive for the sqrt(Z) residual")
    if bundle.Z is None or bundle.beta is None:
        raise InvalidParameter("bundle", "fill Z and beta first")
    root = np.sqrt(np.maximum(bundle.Z, 0.0))
    with np.errstate(divide="ignore"):
        integrand = np.where(bundle.Z[:, :-1] > eps, 1.0 / root[:, :-1], 0.0)
    drift = np.cumsum(integrand * np.diff(bundle.qv, axis=1), axis=1)
    resid = root.copy()
    resid[:, 0] -= np.sqrt(params.z)
    resid[:, 1:] -= np.sqrt(params.z) + 0.5 * (params.d - 1.0) * drift + bundle.beta[:, 1:]
    sup = np.max(np.abs(resid), axis=1)
    return ResidualStats(sup, float(np.sqrt(np.mean(sup**2))), float(sup.max()),
                         float(np.max(np.diff(bundle.t))))


def _reference_series(params: ModelParams, dt_sim: np.ndarray, control: ControlSpec,
                      n_paths: int, rng: RngSpec, oversample: int):
    """Z, beta, qv node series on the comparison grid, simulated ``oversample``
    times finer.

    The modulus and Euler constructions differ per simulation step by the
    fluctuation of the squared coordinate increments around d * dqv, whose
    accumulated size scales with the *simulation* step.  Oversampling the
    reference keeps that part negligible against the Euler error under study.
    """
    from .mc import run_summary_raw  # local import to avoid a cycle

    n_sim = dt_sim.shape[0]
    chk = np.arange(oversample, n_sim + 1, oversample, dtype=np.int64)
    z, beta, qv, *_ = run_summary_raw(params, dt_sim, control, n_paths,
                                      rng.master_seed, chk_nodes=chk)
    pad = np.zeros((n_paths, 1))
    z = np.concatenate([np.full((n_paths, 1), float(params.z)), z], axis=1)
    beta = np.concatenate([pad, beta], axis=1)
    qv = np.concatenate([pad, qv], axis=1)
    return z, beta, qv


def equivalence_refinement(params: ModelParams, control: ControlSpec, horizon: float,
                           n_steps_list: list[int], n_paths: int, rng: RngSpec,
                           oversample: int = 16):
    """Strong gap between the modulus and Euler constructions under refinement.

    One reference simulation (``oversample`` steps per finest comparison
    cell) provides the modulus path and the driving increments; each
    comparison grid aggregates those increments and runs the Euler scheme.
    Measures RMS over paths of sup_k |Z_modulus - Z_euler| per grid and
    returns (dts, rms_values, fitted_order), the order being the slope of
    log2 RMS against log2 dt.
    """
    n_steps_list = sorted(n_steps_list)
    n_fine = n_steps_list[-1]
    for n in n_steps_list:
        if n_fine % n:
            raise GridCompatibilityError(f"{n} does not divide the finest grid {n_fine}")
    dt_sim = np.full(n_fine * oversample, horizon / (n_fine * oversample))
    z_ref, beta_ref, qv_ref = _reference_series(params, dt_sim, control, n_paths,
                                                rng, oversample)
    dts, rms = [], []
    for n in n_steps_list:
        factor = n_fine // n
        beta_c = beta_ref[:, ::factor]
        qv_c = qv_ref[:, ::factor]
        z_mod = z_ref[:, ::factor]
        dt_c = np.full(n, horizon / n)
        z_eul = besq_sde_euler(params, dt_c, beta_c, qv_c)
        gap = np.max(np.abs(z_mod - z_eul), axis=1)
        dts.append(horizon / n)
        rms.append(float(np.sqrt(np.mean(gap**2))))
    order = float(np.polyfit(np.log2(dts), np.log2(rms), 1)[0])
    return np.array(dts), np.array(rms), order


def scaling_transform(t_nodes: np.ndarray, Z: np.ndarray, lam: float,
                      target_times: np.ndarray | None = None):
    """Diffusive rescaling: value at time s is Z(lam * s) / lam.

    With no target grid the full image series on t_nodes / lam is returned
    (every source node maps exactly).  With ``target_times``, each lam * s
    must land on a source node, otherwise GridCompatibilityError.
    """
    if lam <= 0:
        raise InvalidParameter("lam", "must be positive")
    t_nodes = np.asarray(t_nodes, dtype=float)
    if target_times is None:
        return t_nodes / lam, Z / lam
    dt = t_nodes[1] - t_nodes[0]
    idx = np.empty(len(target_times), dtype=np.int64)
    for j, s in enumerate(target_times):
        k = int(round(lam * s / dt))
        if k < 0 or k >= t_nodes.shape[0] or abs(k * dt - lam * s) > 1e-9 * max(dt, 1.0):
            raise GridCompatibilityError(f"lam * {s} does not land on the source grid")
        idx[j] = k
    return np.asarray(target_times, dtype=float), Z[:, idx] / lam


def time_inversion(t_nodes: np.ndarray, Z: np.ndarray, z: float,
                   target_times: np.ndarray):
    """Time inversion for z = 0 starts: X(s) = s^2 Z(1/s), X(0) = 0.

    Z(1/s) is read by nearest-node lookup, so the source horizon must cover
    1 / min(positive target time).  Each X(s) has the law of Z(s).
    """
    if z != 0.0:
        raise InvalidParameter("z", "time inversion is defined for z = 0 starts")
    target_times = np.asarray(target_times, dtype=float)
    if target_times.size == 0:
        raise InvalidParameter("target_times", "empty sweep")
    if np.any(target_times < 0):
        raise InvalidParameter("target_times", "must be nonnegative")
    pos = target_times > 0
    if not np.any(pos):
        raise InvalidParameter("target_times", "need at least one positive time")
    if (1.0 / target_times[pos].min()) > t_nodes[-1] * (1 + 1e-12):
        raise InvalidParameter("target_times",
                               f"source horizon {t_nodes[-1]} does not cover 1/t for the smallest t")
    X = np.zeros((Z.shape[0], target_times.shape[0]))
    dt = t_nodes[1] - t_nodes[0]
    for j, s in enumerate(target_times):
        if s == 0.0:
            continue
        k = int(round((1.0 / s) / dt))
        k = min(max(k, 0), t_nodes.shape[0] - 1)
        X[:, j] = s * s * Z[:, k]
    return target_times, X


@dataclass
class CirResult:
    """Exponential time change of a squared-radius bundle.

    ``X`` is the transformed process on the uniform process-time grid,
    ``bar_beta``/``bar_qv`` the rescaled driving series, ``residual`` the
    one-step equation defect statistics and ``euler_gap_rms`` the strong gap
    against the Euler scheme driven by the same increments.
    """

    t_nodes: np.ndarray
    X: np.ndarray
    bar_beta: np.ndarray
    bar_qv: np.ndarray
    residual: ResidualStats
    euler_gap_rms: float
    bundle: PathBundle


def _cir_series(params: ModelParams, cir: CirSpec, t_nodes: np.ndarray,
                bundle: PathBundle):
    """Transform a bundle simulated on the image grid into CIR coordinates."""
    dt_proc = np.diff(t_nodes)
    s_nodes = cir.time_change(t_nodes)
    rate = np.diff(s_nodes) / dt_proc  # discrete df/dt on each cell
    X = np.exp(-cir.a * t_nodes)[None, :] * bundle.Z
    dbar_beta = np.diff(bundle.beta, axis=1) / np.sqrt(rate)[None, :]
    dbar_qv = np.diff(bundle.qv, axis=1) / rate[None, :]
    return X, dbar_beta, dbar_qv, dt_proc


def cir_transform(params: ModelParams, cir: CirSpec, grid: TimeGrid,
                  control: ControlSpec, n_paths: int, rng: RngSpec) -> CirResult:
    """Simulate Z on the image grid f(t_k) and return X_t = e^{-at} Z_{f(t)}.

    Requires 4b/c^2 = d.  The driving series are rescaled per cell by the
    discrete derivative of f, which keeps the rescaled quadratic-variation
    increments inside [sigma_lo_sq dt, sigma_hi_sq dt] exactly; the residual
    statistics quantify how well X solves

        dX = -a X dt + b d<bar_beta> + c sqrt(X) d(bar_beta).
    """
    validate(params)
    if abs(cir.implied_d - params.d) > 1e-9 * max(1.0, params.d):
        raise InvalidParameter("cir", f"4b/c^2 = {cir.implied_d} does not match d = {params.d}")
    t_nodes = grid.times()
    s_nodes = cir.time_change(t_nodes)
    bundle = simulate_paths(params, grid, control, n_paths, rng,
                            dt_array=np.diff(s_nodes))
    besq_from_modulus(bundle)
    accumulate_beta(bundle)
    X, dbar_beta, dbar_qv, dt_proc = _cir_series(params, cir, t_nodes, bundle)

    drift = -cir.a * X[:, :-1] * dt_proc[None, :] + cir.b * dbar_qv
    diffu = cir.c * np.sqrt(np.maximum(X[:, :-1], 0.0)) * dbar_beta
    resid = np.diff(X, axis=1) - drift - diffu
    sup = np.max(np.abs(resid), axis=1)
    per_step_rms = float(np.sqrt(np.mean(resid**2)))
    stats = ResidualStats(sup, per_step_rms, float(sup.max()), float(dt_proc.max()))

    cur = np.full(n_paths, float(params.z))
    gap = np.zeros(n_paths)
    for k in range(dt_proc.shape[0]):
        cur = cur + (-cir.a * cur * dt_proc[k] + cir.b * dbar_qv[:, k]
                     + cir.c * np.sqrt(np.maximum(cur, 0.0)) * dbar_beta[:, k])
        np.maximum(cur, 0.0, out=cur)
        np.maximum(gap, np.abs(X[:, k + 1] - cur), out=gap)
    euler_gap_rms = float(np.sqrt(np.mean(gap**2)))

    bar_beta = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(dbar_beta, axis=1)], axis=1)
    bar_qv = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(dbar_qv, axis=1)], axis=1)
    return CirResult(t_nodes, X, bar_beta, bar_qv, stats, euler_gap_rms, bundle)


def cir_refinement(params: ModelParams, cir: CirSpec, horizon: float,
                   n_steps_list: list[int], control: ControlSpec, n_paths: int,
                   rng: RngSpec, oversample: int = 16):
    """Strong Euler gap for the time-changed process under dt refinement.

    One oversampled reference simulation on the image grid; each comparison
    grid reuses aggregated increments (the process-time grids nest, hence so
    do the image grids).  Returns (dts, gap_rms, fitted_order).
    """
    n_steps_list = sorted(n_steps_list)
    n_fine = n_steps_list[-1]
    for n in n_steps_list:
        if n_fine % n:
            raise GridCompatibilityError(f"{n} does not divide the finest grid {n_fine}")
    n_sim = n_fine * oversample
    t_sim = TimeGrid(horizon, n_sim).times()
    dt_sim = np.diff(cir.time_change(t_sim))
    z_ref, beta_ref, qv_ref = _reference_series(params, dt_sim, control, n_paths,
                                                rng, oversample)
    t_fine = t_sim[::oversample]
    dts, rms = [], []
    for n in n_steps_list:
        factor = n_fine // n
        t_nodes = t_fine[::factor]
        holder = PathBundle(params=params, control_name="", master_seed=rng.master_seed,
                            t=cir.time_change(t_nodes), B=np.empty((n_paths, 0, 0)),
                            qv=qv_ref[:, ::factor], beta=beta_ref[:, ::factor],
                            Z=z_ref[:, ::factor])
        X, dbar_beta, dbar_qv, dt_proc = _cir_series(params, cir, t_nodes, holder)
        cur = np.full(n_paths, float(params.z))
        gap = np.zeros(n_paths)
        for k in range(n):
            cur = cur + (-cir.a * cur * dt_proc[k] + cir.b * dbar_qv[:, k]
                         + cir.c * np.sqrt(np.maximum(cur, 0.0)) * dbar_beta[:, k])
            np.maximum(cur, 0.0, out=cur)
            np.maximum(gap, np.abs(X[:, k + 1] - cur), out=gap)
        dts.append(horizon / n)
        rms.append(float(np.sqrt(np.mean(gap**2))))
    order = float(np.polyfit(np.log2(dts), np.log2(rms), 1)[0])
    return np.array(dts), np.array(rms), order
