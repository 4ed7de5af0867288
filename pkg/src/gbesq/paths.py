"""Full-path simulation: coordinate paths and the derived scalar series.

This is the diagnostic-scale path builder (it stores every node of every
path, so memory caps the batch size).  The derived series are

    qv    quadratic variation of the radial part, accumulated exactly as
          sum of sigma^2_k dt_k; increments always lie in
          [sigma_lo_sq * dt, sigma_hi_sq * dt]
    beta  radial martingale, d(beta) = sum_i (B_i / |B|) dB_i
    Z     squared modulus |B|^2 (filled by gbesq.besq.besq_from_modulus)
    Y     integral of 2 sqrt(Z) d(beta)

Large-batch statistics (hitting times, stopped functionals) use the summary
kernels in gbesq.mc instead, which share the same draw addressing: path p of
a bundle and path p of a summary run see identical increments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controls import CompiledControl, ControlSpec, compile_control
from .model import InvalidParameter, ModelParams, RngSpec, TimeGrid, validate
from .rng import normals_for_step, path_keys

__all__ = ["PathBundle", "simulate_paths", "accumulate_beta", "accumulate_y", "export_paths_csv"]

_EPS_ORIGIN = 1e-12
_MAX_BUNDLE_BYTES = 2 << 30


@dataclass
class PathBundle:
    """A batch of simulated paths plus the grid and control that made them.

    ``B`` has shape (n_paths, d, n_nodes) and starts at x = (sqrt(z), 0, ...);
    the scalar series have shape (n_paths, n_nodes).  ``Z`` and ``Y`` are
    filled lazily by besq_from_modulus / accumulate_y.
    """

    params: ModelParams
    control_name: str
    master_seed: int
    t: np.ndarray
    B: np.ndarray
    qv: np.ndarray
    beta: np.ndarray | None = None
    Z: np.ndarray | None = None
    Y: np.ndarray | None = None
    dt: np.ndarray = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.B.shape[0]

    @property
    def n_steps(self) -> int:
        return self.B.shape[2] - 1


def _simulate_on_steps(params: ModelParams, dt: np.ndarray,
                       compiled: CompiledControl, n_paths: int, seed: int,
                       path_offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    d = params.int_d
    n_steps = dt.shape[0]
    need = n_paths * (d + 1) * (n_steps + 1) * 8
    if need > _MAX_BUNDLE_BYTES:
        raise InvalidParameter(
            "n_paths", f"bundle would need {need / 2**30:.1f} GiB; use the summary runner instead"
        )
    keys = path_keys(seed, np.arange(path_offset, path_offset + n_paths))
    B = np.empty((n_paths, d, n_steps + 1))
    qv = np.empty((n_paths, n_steps + 1))
    B[:, :, 0] = 0.0
    B[:, 0, 0] = np.sqrt(params.z)
    qv[:, 0] = 0.0
    zc = np.full(n_paths, params.z)
    for k in range(n_steps):
        if compiled.mode == 0:
            s2 = compiled.table[k]
        else:
            hi_branch = zc >= compiled.level if compiled.above_high else zc < compiled.level
            s2 = np.where(hi_branch, compiled.hi, compiled.lo)
        xi = normals_for_step(keys, k, d)
        sd = np.sqrt(s2 * dt[k])
        if np.ndim(sd):
            sd = sd[:, None]
        B[:, :, k + 1] = B[:, :, k] + sd * xi
        qv[:, k + 1] = qv[:, k] + s2 * dt[k]
        zc = np.einsum("ij,ij->i", B[:, :, k + 1], B[:, :, k + 1])
    return B, qv


def simulate_paths(params: ModelParams, grid: TimeGrid, control: ControlSpec,
                   n_paths: int, rng: RngSpec, *, dt_array: np.ndarray | None = None) -> PathBundle:
    """Simulate a bundle of coordinate paths under one control.

    All coordinates share the single scalar control, so the per-coordinate
    quadratic variations are equal and cross-variations vanish (up to Monte
    Carlo noise).  ``dt_array`` overrides the uniform steps for simulation on
    an image grid (see the time-change transform); node times are then the
    cumulative sums.
    """
    validate(params)
    if n_paths < 1:
        raise InvalidParameter("n_paths", "must be positive")
    if dt_array is None:
        dt = grid.step_sizes()
        t_nodes = grid.times()
    else:
        dt = np.asarray(dt_array, dtype=float)
        if dt.ndim != 1 or np.any(dt <= 0):
            raise InvalidParameter("dt_array", "must be a 1-d array of positive steps")
        t_nodes = np.concatenate([[0.0], np.cumsum(dt)])
    compiled = compile_control(control, params, t_nodes[:-1], t_nodes[-1])
    B, qv = _simulate_on_steps(params, dt, compiled, n_paths, rng.master_seed)
    return PathBundle(
        params=params, control_name=compiled.name, master_seed=rng.master_seed,
        t=t_nodes, B=B, qv=qv, dt=dt,
    )


def accumulate_beta(bundle: PathBundle) -> PathBundle:
    """Fill the radial martingale series from the coordinate increments.

    d(beta)_k = sum_i (B_i,k / |B_k|) dB_i,k, using the position at the cell
    start.  At the (measure-zero) event |B_k| < 1e-12 the unit direction e_1
    is used instead; any unit vector preserves the increment's variance.
    """
    B = bundle.B
    norms = np.sqrt(np.einsum("pik,pik->pk", B, B))
    dB = np.diff(B, axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = B[:, :, :-1] / norms[:, None, :-1]
    radial = np.einsum("pik,pik->pk", unit, dB)
    dbeta = np.where(norms[:, :-1] < _EPS_ORIGIN, dB[:, 0, :], radial)
    beta = np.empty_like(bundle.qv)
    beta[:, 0] = 0.0
    np.cumsum(dbeta, axis=1, out=beta[:, 1:])
    bundle.beta = beta
    return bundle


def accumulate_y(bundle: PathBundle) -> PathBundle:
    """Fill Y = integral of 2 sqrt(Z) d(beta) (left-endpoint sums)."""
    if bundle.Z is None:
        raise InvalidParameter("Z", "fill Z first (besq_from_modulus)")
    if bundle.beta is None:
        accumulate_beta(bundle)
    dy = 2.0 * np.sqrt(np.maximum(bundle.Z[:, :-1], 0.0)) * np.diff(bundle.beta, axis=1)
    Y = np.empty_like(bundle.qv)
    Y[:, 0] = 0.0
    np.cumsum(dy, axis=1, out=Y[:, 1:])
    bundle.Y = Y
    return bundle


def export_paths_csv(bundle: PathBundle, sample_indices, out_dir: str | Path) -> list[Path]:
    """Write one CSV per requested sample: t, B1..Bd, beta, qv, Z, Y."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    d = bundle.B.shape[1]
    written = []
    for p in sample_indices:
        if p < 0 or p >= bundle.n_paths:
            raise InvalidParameter("sample_indices", f"path {p} not in bundle")
        fname = out_dir / f"path_{p:05d}.csv"
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"B{i + 1}" for i in range(d)] + ["beta", "qv", "Z", "Y"])
            for k in range(bundle.B.shape[2]):
                row = [repr(bundle.t[k])]
                row += [repr(bundle.B[p, i, k]) for i in range(d)]
                row.append(repr(bundle.beta[p, k]) if bundle.beta is not None else "")
                row.append(repr(bundle.qv[p, k]))
                row.append(repr(bundle.Z[p, k]) if bundle.Z is not None else "")
                row.append(repr(bundle.Y[p, k]) if bundle.Y is not None else "")
                w.writerow(row)
        written.append(fname)
    return written
