"""Counter-based random streams for reproducible parallel Monte Carlo.

Every draw is a pure function of (master seed, path index, counter): the
path key is a SplitMix64-style hash of the seed and the path ordinal, and
each 64-bit output is the SplitMix64 finalizer applied to ``key + (c+1) *
odd_constant``.  Normals come from a Box-Muller pair on 53-bit uniforms.

Because no generator state is carried between draws, any batch split,
evaluation order or worker count reproduces the same numbers.  The numba
kernels reimplement the same arithmetic on scalars; the integer stream is
bit-identical across backends (the float stream can differ in the last ulp
of the transcendentals, see tests/test_backends.py).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "path_keys",
    "draw_u64",
    "normals_for_step",
    "slots_per_step",
    "GOLDEN",
    "SALT",
    "MIX_A",
    "MIX_B",
    "INV53",
]

U64 = np.uint64

GOLDEN = 0x9E3779B97F4A7C15
SALT = 0xD1B54A32D192ED03
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB
INV53 = 1.0 / 9007199254740992.0  # 2**-53
TWO_PI = 6.283185307179586


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on uint64 scalars or arrays (wrapping)."""
    with np.errstate(over="ignore"):
        x = (x ^ (x >> U64(30))) * U64(MIX_A)
        x = (x ^ (x >> U64(27))) * U64(MIX_B)
        return x ^ (x >> U64(31))


def path_keys(master_seed: int, path_indices) -> np.ndarray:
    """Per-path stream keys; path index is the stream index."""
    p = np.asarray(path_indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(mix64(U64(master_seed)) + (p + U64(1)) * U64(GOLDEN))


def draw_u64(keys, counter) -> np.ndarray:
    """The ``counter``-th 64-bit output of each stream in ``keys``."""
    with np.errstate(over="ignore"):
        return mix64(np.asarray(keys, dtype=np.uint64) + (U64(counter) + U64(1)) * U64(SALT))


def slots_per_step(d: int) -> int:
    """Uniform draws consumed per time step: one Box-Muller pair per 2 coords."""
    return 2 * ((d + 1) // 2)


def _uniform_open(u: np.ndarray) -> np.ndarray:
    # (0, 1]: safe under log
    return ((u >> U64(11)).astype(np.float64) + 1.0) * INV53


def _uniform_halfopen(u: np.ndarray) -> np.ndarray:
    # [0, 1)
    return (u >> U64(11)).astype(np.float64) * INV53


def normals_for_step(keys: np.ndarray, step: int, d: int) -> np.ndarray:
    """Standard normal increments for one step, shape (len(keys), d).

    Draw addressing: step k, Box-Muller pair j consumes counters
    ``k * slots + 2j`` and ``k * slots + 2j + 1``; coordinate 2j gets the
    cosine leg, 2j+1 the sine leg.
    """
    n = keys.shape[0]
    slots = slots_per_step(d)
    base = np.uint64(step) * np.uint64(slots)
    out = np.empty((n, d))
    for j in range((d + 1) // 2):
        u1 = _uniform_open(draw_u64(keys, base + U64(2 * j)))
        u2 = _uniform_halfopen(draw_u64(keys, base + U64(2 * j + 1)))
        r = np.sqrt(-2.0 * np.log(u1))
        th = TWO_PI * u2
        out[:, 2 * j] = r * np.cos(th)
        if 2 * j + 1 < d:
            out[:, 2 * j + 1] = r * np.sin(th)
    return out
