"""Pure-numpy kernels: reference semantics for the numba versions.

``summary_kernel`` simulates ``n_paths`` coordinate paths of a band-controlled
Brownian motion started at (sqrt(z), 0, ..., 0) and accumulates, per path:

    zc    squared modulus Z_k
    beta  radial martingale increments sum_i (B_i / |B|) dB_i
    qv    its quadratic variation, accumulated exactly as sum sigma^2_k dt_k
    y     the integral of 2 sqrt(Z) d(beta)
    mn    running minimum of Z

plus first-crossing node indices for the optional levels a (Z <= a) and
b (Z >= b).  With ``freeze`` set, a path stops evolving at its first crossing,
so snapshots at later checkpoints return the stopped state.  State snapshots
are taken at the node indices in ``chk_nodes`` (ascending).

Controls: mode 0 reads sigma^2 from ``table`` per step (covers constant and
piecewise-constant controls); mode 1 is the threshold feedback rule
sigma^2 = hi if Z >= level else lo (flipped when ``above_high`` is 0).

Draw addressing matches gbesq.rng exactly, so a path's increments do not
depend on which batch, backend or worker produced it.
"""

from __future__ import annotations

import numpy as np

from .rng import TWO_PI, draw_u64, path_keys

U64 = np.uint64

_EPS_ORIGIN = 1e-12


def summary_kernel(seed, path_offset, n_paths, d, z, dt, mode, table, lo, hi,
                   level, above_high, a_level, use_a, b_level, use_b, freeze,
                   chk_nodes):
    n_steps = dt.shape[0]
    n_chk = chk_nodes.shape[0]
    out_z = np.empty((n_paths, n_chk))
    out_beta = np.empty((n_paths, n_chk))
    out_qv = np.empty((n_paths, n_chk))
    out_y = np.empty((n_paths, n_chk))
    out_minz = np.empty((n_paths, n_chk))
    tau_a = np.full(n_paths, -1, np.int64)
    tau_b = np.full(n_paths, -1, np.int64)

    keys = path_keys(seed, np.arange(path_offset, path_offset + n_paths))
    slots = 2 * ((d + 1) // 2)
    b = np.zeros((n_paths, d))
    b[:, 0] = np.sqrt(z)
    zc = np.full(n_paths, float(z))
    beta = np.zeros(n_paths)
    qv = np.zeros(n_paths)
    y = np.zeros(n_paths)
    mn = np.full(n_paths, float(z))
    active = np.ones(n_paths, dtype=bool)

    ci = 0
    for k in range(n_steps):
        if active.any():
            idx = np.nonzero(active)[0]
            kb = keys[idx]
            zb = zc[idx]
            if mode == 0:
                s2 = table[k]
            else:
                hi_branch = zb >= level if above_high else zb < level
                s2 = np.where(hi_branch, hi, lo)
            sd = np.sqrt(s2 * dt[k])
            base = U64(k) * U64(slots)
            db = np.empty((kb.shape[0], d))
            for j in range((d + 1) // 2):
                h1 = draw_u64(kb, base + U64(2 * j))
                h2 = draw_u64(kb, base + U64(2 * j + 1))
                u1 = ((h1 >> U64(11)).astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)
                u2 = (h2 >> U64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
                r = np.sqrt(-2.0 * np.log(u1))
                th = TWO_PI * u2
                db[:, 2 * j] = sd * (r * np.cos(th))
                if 2 * j + 1 < d:
                    db[:, 2 * j + 1] = sd * (r * np.sin(th))
            norm = np.sqrt(zb)
            bb = b[idx]
            with np.errstate(invalid="ignore", divide="ignore"):
                radial = np.einsum("ij,ij->i", bb / norm[:, None], db)
            dbeta = np.where(norm < _EPS_ORIGIN, db[:, 0], radial)
            y[idx] += 2.0 * norm * dbeta
            beta[idx] += dbeta
            qv[idx] += s2 * dt[k]
            bb = bb + db
            b[idx] = bb
            znew = np.einsum("ij,ij->i", bb, bb)
            zc[idx] = znew
            mn[idx] = np.minimum(mn[idx], znew)
            node = k + 1
            if use_a:
                sub = np.nonzero((tau_a[idx] < 0) & (znew <= a_level))[0]
                if sub.size:
                    tau_a[idx[sub]] = node
            if use_b:
                sub = np.nonzero((tau_b[idx] < 0) & (znew >= b_level))[0]
                if sub.size:
                    tau_b[idx[sub]] = node
            if freeze:
                active &= (tau_a < 0) & (tau_b < 0)
        node = k + 1
        while ci < n_chk and chk_nodes[ci] == node:
            out_z[:, ci] = zc
            out_beta[:, ci] = beta
            out_qv[:, ci] = qv
            out_y[:, ci] = y
            out_minz[:, ci] = mn
            ci += 1
    while ci < n_chk:
        out_z[:, ci] = zc
        out_beta[:, ci] = beta
        out_qv[:, ci] = qv
        out_y[:, ci] = y
        out_minz[:, ci] = mn
        ci += 1
    return out_z, out_beta, out_qv, out_y, out_minz, tau_a, tau_b


def heat_hjb_run(u0, dt, inv_dx2, lo, hi, n_t, snap_steps):
    n_x = u0.shape[0]
    out = np.empty((snap_steps.shape[0], n_x))
    u = u0.copy()
    si = 0
    for m in range(1, n_t + 1):
        d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) * inv_dx2
        g = np.maximum(0.5 * hi * d2, 0.5 * lo * d2)
        u[1:-1] += dt * g
        while si < snap_steps.shape[0] and snap_steps[si] == m:
            out[si] = u
            si += 1
    return out


def besq_hjb_run(u0, cL, cC, cR, dt, lo, hi, n_t, snap_steps):
    n_x = u0.shape[0]
    out = np.empty((snap_steps.shape[0], n_x))
    u = u0.copy()
    ell = np.empty(n_x - 1)
    si = 0
    for m in range(1, n_t + 1):
        ell[0] = cC[0] * u[0] + cR[0] * u[1]
        ell[1:] = cL[1:n_x - 1] * u[:n_x - 2] + cC[1:n_x - 1] * u[1:n_x - 1] + cR[1:n_x - 1] * u[2:]
        g = np.maximum(hi * ell, lo * ell)
        u[: n_x - 1] += dt * g
        while si < snap_steps.shape[0] and snap_steps[si] == m:
            out[si] = u
            si += 1
    return out
