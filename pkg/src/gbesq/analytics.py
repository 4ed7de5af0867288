"""Closed-form evaluators: exit capacities, Laplace bounds, tail bounds.

All of these are exact expressions; the Monte Carlo and PDE modules are
checked against them.  Conventions: ``d`` is the process dimension, ``z``
the start value, ``0 < a < z < b`` the lower/upper exit levels,
``sigma_lo_sq <= sigma_hi_sq`` the variance band.

The scale function of the squared-radius process is, up to normalisation,

    y -> y^(1 - d/2)      (d != 2)
    y -> ln y             (d == 2)

Normalised to 0 at ``a`` and 1 at ``b`` it gives the worst-case probability
(capacity) of exiting through ``b`` before ``a``; this value is the same
under every volatility control, which is what makes it a sharp cross-check.
"""

from __future__ import annotations

import numpy as np

from .model import InvalidParameter

__all__ = [
    "scale_function",
    "exit_upper_first",
    "exit_lower_first",
    "eventual_hit_below",
    "hit_upper_before_origin",
    "laplace_upper_bound",
    "laplace_lower_bound",
    "classical_laplace",
    "exit_time_tail_bound",
    "laplace_martingale_start",
    "laplace_martingale_terminal",
]


def _check_levels(z: float, a: float, b: float) -> None:
    if not (0 < a < z < b):
        raise InvalidParameter("levels", f"need 0 < a < z < b, got a={a}, z={z}, b={b}")


def scale_function(y, a: float, b: float, d: float):
    """Scale function normalised to 0 at ``a`` and 1 at ``b``.

    Strictly increasing on [a, b]; accepts scalars or arrays (values outside
    [a, b] are evaluated by the same formula, which is the harmonic extension
    and what a discretely stopped path needs).  The d == 2 logarithmic branch
    is dispatched exactly; near d == 2 the power branch is evaluated through
    expm1, which removes the 0/0 without a series fallback.
    """
    if d <= 0:
        raise InvalidParameter("d", "must be positive")
    if not (0 < a < b):
        raise InvalidParameter("levels", f"need 0 < a < b, got a={a}, b={b}")
    y = np.asarray(y, dtype=float)
    la, lb, ly = np.log(a), np.log(b), np.log(y)
    if d == 2:
        out = (ly - la) / (lb - la)
    else:
        p = 1.0 - d / 2.0
        # (y^p - a^p) / (b^p - a^p) = expm1(p (ln y - ln a)) / expm1(p (ln b - ln a))
        out = np.expm1(p * (ly - la)) / np.expm1(p * (lb - la))
    return out if out.ndim else float(out)


def exit_upper_first(z: float, a: float, b: float, d: float) -> float:
    """Capacity of reaching level b before level a, started from z."""
    _check_levels(z, a, b)
    return scale_function(z, a, b, d)


def exit_lower_first(z: float, a: float, b: float, d: float) -> float:
    """Capacity of reaching level a before level b; complement of the above."""
    _check_levels(z, a, b)
    return 1.0 - scale_function(z, a, b, d)


def eventual_hit_below(z: float, a: float, d: float) -> float:
    """Capacity of ever reaching level a from z > a, for d > 2: (a/z)^(d/2-1)."""
    if d <= 2:
        raise InvalidParameter("d", "finite hitting capacity requires d > 2")
    if not (0 < a < z):
        raise InvalidParameter("levels", f"need 0 < a < z, got a={a}, z={z}")
    return (a / z) ** (d / 2.0 - 1.0)


def hit_upper_before_origin(z: float, b: float) -> float:
    """d = 1: capacity of reaching b before the origin, sqrt(z/b)."""
    if not (0 < z < b):
        raise InvalidParameter("levels", f"need 0 < z < b, got z={z}, b={b}")
    return np.sqrt(z / b)


def _check_laplace_args(lam: float, t: float) -> None:
    if lam < 0:
        raise InvalidParameter("lam", "must be nonnegative")
    if t < 0:
        raise InvalidParameter("t", "must be nonnegative")


def classical_laplace(lam: float, t: float, z: float, d: float, sigma_sq: float) -> float:
    """E[exp(-lam Z_t)] for the classical squared Bessel process at fixed
    variance: (1 + 2 lam s2 t)^(-d/2) exp(-lam z / (1 + 2 lam s2 t))."""
    _check_laplace_args(lam, t)
    c = 1.0 + 2.0 * lam * sigma_sq * t
    return float(np.exp(-(d / 2.0) * np.log(c) - lam * z / c))


def laplace_upper_bound(lam: float, t: float, z: float, d: float,
                        sigma_lo_sq: float, sigma_hi_sq: float) -> float:
    """Upper bound for the worst-case Laplace transform of Z_t.

    ((1 + 2 lam (hi - lo) t) / (1 + 2 lam hi t))^(d/2) * exp(-lam z / (1 + 2 lam hi t))
    """
    _check_laplace_args(lam, t)
    gap = sigma_hi_sq - sigma_lo_sq
    c_hi = 1.0 + 2.0 * lam * sigma_hi_sq * t
    c_gap = 1.0 + 2.0 * lam * gap * t
    return float(np.exp((d / 2.0) * (np.log(c_gap) - np.log(c_hi)) - lam * z / c_hi))


def laplace_lower_bound(lam: float, t: float, z: float, d: float,
                        sigma_lo_sq: float, sigma_hi_sq: float) -> float:
    """Lower bound for the worst-case Laplace transform of Z_t.

    (1 + 2 lam hi t)^(-(d/2)(1 + 2 lam (hi - lo) t))
        * exp(-lam z (1 + 2 lam (hi - lo) t) / (1 + 2 lam hi t))

    The exponent grows with lam * t, so this is evaluated in log space.
    """
    _check_laplace_args(lam, t)
    gap = sigma_hi_sq - sigma_lo_sq
    c_hi = 1.0 + 2.0 * lam * sigma_hi_sq * t
    c_gap = 1.0 + 2.0 * lam * gap * t
    return float(np.exp(-(d / 2.0) * c_gap * np.log(c_hi) - lam * z * c_gap / c_hi))


def exit_time_tail_bound(b: float, sigma_hi_sq: float, t: float) -> float:
    """Bound 4 b hi / sqrt(t) on the capacity of a large stopped integral.

    Controls c({|Y_{tau_b ^ t}| > t^(3/4)}); may exceed 1, it is only a bound.
    """
    if b <= 0 or t <= 0:
        raise InvalidParameter("b" if b <= 0 else "t", "must be positive")
    return 4.0 * b * sigma_hi_sq / np.sqrt(t)


def laplace_martingale_start(lam: float, T: float, z: float, d: float,
                             sigma_hi_sq: float) -> float:
    """M_0 of the exponential martingale used in the Laplace bounds:
    (1 + 2 lam hi T)^(-d/2) exp(-lam z / (1 + 2 lam hi T))."""
    _check_laplace_args(lam, T)
    c = 1.0 + 2.0 * lam * sigma_hi_sq * T
    return float(np.exp(-(d / 2.0) * np.log(c) - lam * z / c))


def laplace_martingale_terminal(z_T, qv_T, lam: float, T: float, d: float,
                                sigma_hi_sq: float):
    """M_T = (1 + 2 lam (hi T - qv_T))^(-d/2) exp(-lam Z_T / (1 + 2 lam (hi T - qv_T))).

    Accepts arrays; the batch mean minus laplace_martingale_start is the
    drift statistic checked by the martingale suite.
    """
    c = 1.0 + 2.0 * lam * (sigma_hi_sq * T - np.asarray(qv_T, dtype=float))
    return np.exp(-(d / 2.0) * np.log(c) - lam * np.asarray(z_T, dtype=float) / c)
