"""
Sub-sampling rules used in the duels.

An independent sampler ``SP(m, n, r)`` returns ``n`` distinct positions of a
history of length ``m`` without looking at the rewards. Positions are
1-based, so a block starting at offset ``n0`` is ``{n0 + 1, ..., n0 + n}``.

SSMC's rule is the one exception: it picks the block with the smallest mean
and therefore needs the leader's prefix sums. It lives in its own function
with a different signature so it cannot be mixed up with the others.
"""
from __future__ import annotations

import enum
import math

import numba as nb
import numpy as np


class Sampler(enum.IntEnum):
    RB = 0
    WR = 1
    LB = 2
    LDS = 3
    SSMC = 4

    @classmethod
    def parse(cls, value) -> "Sampler":
        if isinstance(value, Sampler):
            return value
        key = str(value).strip().upper()
        if key.endswith("-SDA"):
            key = key[:-4]
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown sampler {value!r}") from None


def _check(m: int, n: int):
    if n < 1 or m < n:
        raise ValueError(f"need 1 <= n <= m, got m={m}, n={n}")


# --------------------------------------------------------------------------
# jitted cores shared with the round engine


@nb.njit(cache=True, nogil=True)
def van_der_corput(r):
    """Base-2 radical inverse of the integer ``r``."""
    u = 0.0
    denom = 1.0
    while r > 0:
        denom *= 2.0
        u += (r & 1) / denom
        r >>= 1
    return u


@nb.njit(cache=True, nogil=True)
def rb_start(m, n, rng):
    return rng.integers(0, m - n + 1)


@nb.njit(cache=True, nogil=True)
def lb_start(m, n):
    return m - n


@nb.njit(cache=True, nogil=True)
def lds_start(m, n, r):
    return int(math.ceil(van_der_corput(r) * (m - n)))


@nb.njit(cache=True, nogil=True)
def wr_shuffle(perm, m, n, rng):
    """Partial Fisher-Yates: moves a uniform n-subset of perm[:m] to perm[:n].

    Returns the swap targets so the caller can undo the permutation and
    keep ``perm`` as the identity between draws.
    """
    swaps = np.empty(n, dtype=np.int64)
    for i in range(n):
        j = rng.integers(i, m)
        swaps[i] = j
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return swaps


@nb.njit(cache=True, nogil=True)
def wr_unshuffle(perm, swaps):
    for i in range(swaps.shape[0] - 1, -1, -1):
        j = swaps[i]
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp


@nb.njit(cache=True, nogil=True)
def wr_subsample_sum(values, m, n, rng, perm):
    """Sum of ``values`` over a uniform n-subset of the first ``m`` positions."""
    swaps = wr_shuffle(perm, m, n, rng)
    s = 0.0
    for i in range(n):
        s += values[perm[i]]
    wr_unshuffle(perm, swaps)
    return s


@nb.njit(cache=True, nogil=True)
def min_block_scan(prefix, lo, hi, n, best_sum, best_start):
    """Scan block starts ``lo..hi`` and keep the smallest block sum.

    Strict comparison keeps the earliest start among ties.
    """
    for s in range(lo, hi + 1):
        v = prefix[s + n] - prefix[s]
        if v < best_sum:
            best_sum = v
            best_start = s
    return best_sum, best_start


# --------------------------------------------------------------------------
# public samplers


def _block(n0: int, n: int) -> np.ndarray:
    return np.arange(n0 + 1, n0 + n + 1, dtype=np.int64)


def rb_sample(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random Block: a contiguous block with a uniform start in {0, ..., m-n}."""
    _check(m, n)
    return _block(int(rb_start(m, n, rng)), n)


def wr_sample(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sampling without replacement: a uniform n-subset of {1, ..., m}, sorted."""
    _check(m, n)
    perm = np.arange(m, dtype=np.int64)
    wr_shuffle(perm, m, n, rng)
    return np.sort(perm[:n]) + 1


def lb_sample(m: int, n: int) -> np.ndarray:
    """Last Block: the n most recent positions."""
    _check(m, n)
    return _block(m - n, n)


def lds_sample(m: int, n: int, r: int) -> np.ndarray:
    """Low-discrepancy block whose start is ceil(u_r (m - n)), u_r = van der Corput(r)."""
    _check(m, n)
    if r < 1:
        raise ValueError(f"round index must be >= 1, got {r}")
    return _block(int(lds_start(m, n, r)), n)


def ssmc_select(history, n: int) -> np.ndarray:
    """Block of length ``n`` with the smallest mean in ``history``.

    ``history`` is a :class:`~sda_bandits.sda.History` (anything exposing a
    ``prefix`` array works). Ties go to the earliest block.
    """
    prefix = np.asarray(history.prefix, dtype=np.float64)
    m = prefix.shape[0] - 1
    _check(m, n)
    _, start = min_block_scan(prefix, 0, m - n, n, np.inf, -1)
    return _block(int(start), n)


def sample(sampler, m: int, n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Dispatch ``SP(m, n, r)`` for the four independent samplers."""
    sampler = Sampler.parse(sampler)
    if sampler is Sampler.RB:
        return rb_sample(m, n, rng)
    if sampler is Sampler.WR:
        return wr_sample(m, n, rng)
    if sampler is Sampler.LB:
        return lb_sample(m, n)
    if sampler is Sampler.LDS:
        return lds_sample(m, n, r)
    raise ValueError("SSMC depends on rewards; call ssmc_select with the leader history")
