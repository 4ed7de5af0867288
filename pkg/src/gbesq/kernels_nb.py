"""Numba kernels: path-summary Monte Carlo and explicit PDE stepping.

Same contracts as gbesq.kernels_np; see that module for the reference
semantics.  The per-path loop exits early once a path is frozen at a hitting
time, which is what makes long-horizon first-passage runs cheap.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .rng import GOLDEN, INV53, MIX_A, MIX_B, SALT, TWO_PI

_GOLDEN = np.uint64(GOLDEN)
_SALT = np.uint64(SALT)
_MA = np.uint64(MIX_A)
_MB = np.uint64(MIX_B)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)

_EPS_ORIGIN = 1e-12  # |B| below this: radial direction replaced by e_1


@njit(cache=True, nogil=True, inline="always")
def _mix64(x):
    x = (x ^ (x >> _S30)) * _MA
    x = (x ^ (x >> _S27)) * _MB
    return x ^ (x >> _S31)


@njit(cache=True, nogil=True, inline="always")
def _path_key(seed, p):
    return _mix64(_mix64(seed) + (np.uint64(p) + _ONE) * _GOLDEN)


@njit(cache=True, nogil=True, inline="always")
def _draw(key, counter):
    return _mix64(key + (counter + _ONE) * _SALT)


@njit(cache=True, nogil=True, inline="always")
def _u_open(h):
    return (np.float64(h >> _S11) + 1.0) * INV53


@njit(cache=True, nogil=True, inline="always")
def _u_half(h):
    return np.float64(h >> _S11) * INV53


@njit(cache=True, nogil=True)
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

    slots = np.uint64(2 * ((d + 1) // 2))
    npairs = (d + 1) // 2
    x0 = np.sqrt(z)
    b = np.empty(d)
    db = np.empty(d)

    for p in range(n_paths):
        key = _path_key(seed, path_offset + p)
        for i in range(d):
            b[i] = 0.0
        b[0] = x0
        zc = z
        beta = 0.0
        qv = 0.0
        y = 0.0
        mn = z
        ta = np.int64(-1)
        tb = np.int64(-1)
        ci = 0
        k = 0
        frozen = False
        while k < n_steps and not frozen:
            if mode == 0:
                s2 = table[k]
            else:
                if zc >= level:
                    s2 = hi if above_high != 0 else lo
                else:
                    s2 = lo if above_high != 0 else hi
            sd = np.sqrt(s2 * dt[k])
            base = np.uint64(k) * slots
            for j in range(npairs):
                u1 = _u_open(_draw(key, base + np.uint64(2 * j)))
                u2 = _u_half(_draw(key, base + np.uint64(2 * j + 1)))
                r = np.sqrt(-2.0 * np.log(u1))
                th = TWO_PI * u2
                db[2 * j] = sd * (r * np.cos(th))
                if 2 * j + 1 < d:
                    db[2 * j + 1] = sd * (r * np.sin(th))
            norm = np.sqrt(zc)
            if norm < _EPS_ORIGIN:
                dbeta = db[0]
            else:
                dbeta = 0.0
                for i in range(d):
                    dbeta += (b[i] / norm) * db[i]
            y += 2.0 * norm * dbeta
            beta += dbeta
            qv += s2 * dt[k]
            zc = 0.0
            for i in range(d):
                b[i] += db[i]
                zc += b[i] * b[i]
            if zc < mn:
                mn = zc
            node = k + 1
            if use_a != 0 and ta < 0 and zc <= a_level:
                ta = node
            if use_b != 0 and tb < 0 and zc >= b_level:
                tb = node
            if freeze != 0 and (ta >= 0 or tb >= 0):
                frozen = True
            while ci < n_chk and chk_nodes[ci] == node:
                out_z[p, ci] = zc
                out_beta[p, ci] = beta
                out_qv[p, ci] = qv
                out_y[p, ci] = y
                out_minz[p, ci] = mn
                ci += 1
            k += 1
        while ci < n_chk:
            out_z[p, ci] = zc
            out_beta[p, ci] = beta
            out_qv[p, ci] = qv
            out_y[p, ci] = y
            out_minz[p, ci] = mn
            ci += 1
        tau_a[p] = ta
        tau_b[p] = tb
    return out_z, out_beta, out_qv, out_y, out_minz, tau_a, tau_b


@njit(cache=True, nogil=True)
def heat_hjb_run(u0, dt, inv_dx2, lo, hi, n_t, snap_steps):
    n_x = u0.shape[0]
    n_snap = snap_steps.shape[0]
    out = np.empty((n_snap, n_x))
    u = u0.copy()
    w = u0.copy()
    si = 0
    for m in range(1, n_t + 1):
        for j in range(1, n_x - 1):
            d2 = (u[j + 1] - 2.0 * u[j] + u[j - 1]) * inv_dx2
            g = 0.5 * hi * d2
            g2 = 0.5 * lo * d2
            if g2 > g:
                g = g2
            w[j] = u[j] + dt * g
        w[0] = u[0]
        w[n_x - 1] = u[n_x - 1]
        tmp = u
        u = w
        w = tmp
        while si < n_snap and snap_steps[si] == m:
            for j in range(n_x):
                out[si, j] = u[j]
            si += 1
    return out


@njit(cache=True, nogil=True)
def besq_hjb_run(u0, cL, cC, cR, dt, lo, hi, n_t, snap_steps):
    n_x = u0.shape[0]
    n_snap = snap_steps.shape[0]
    out = np.empty((n_snap, n_x))
    u = u0.copy()
    w = u0.copy()
    si = 0
    for m in range(1, n_t + 1):
        # node 0 has no left neighbour; its operator carries cL[0] == 0
        ell = cC[0] * u[0] + cR[0] * u[1]
        g = hi * ell
        g2 = lo * ell
        if g2 > g:
            g = g2
        w[0] = u[0] + dt * g
        for j in range(1, n_x - 1):
            ell = cL[j] * u[j - 1] + cC[j] * u[j] + cR[j] * u[j + 1]
            g = hi * ell
            g2 = lo * ell
            if g2 > g:
                g = g2
            w[j] = u[j] + dt * g
        w[n_x - 1] = u[n_x - 1]
        tmp = u
        u = w
        w = tmp
        while si < n_snap and snap_steps[si] == m:
            for j in range(n_x):
                out[si, j] = u[j]
            si += 1
    return out
