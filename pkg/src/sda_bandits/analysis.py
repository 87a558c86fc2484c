"""
Numerical oracles for the two properties behind the regret analysis.

* Balance: ``alpha_k(M, j) = E_{X ~ nu_{1,j}}[(1 - F_{nu_{k,j}}(X))^M]``, the
  probability that the best arm's j-sample sum loses M independent duels
  against j-sample sums of arm k.
* Diversity: ``X_{m,H,j}``, the largest number of pairwise disjoint blocks
  among m Random Block draws of length j from a history of length H. For
  j = 1 its law is known in closed form through Stirling numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numba as nb
import numpy as np
from scipy import integrate, special, stats

from .arms import Family, SUM_FAMILIES, draw_reward, sum_sf
from .samplers import rb_start

#: Largest (m, H) accepted by the exact diversity law. Python integers are
#: exact at any size; the bound only caps the cost of the Stirling table.
MAX_EXACT_DIVERSITY = 400


class Estimate(NamedTuple):
    value: float
    stderr: float = 0.0


@dataclass(frozen=True)
class BalanceQuery:
    family: Family
    mu1: float
    muk: float
    M: int
    j: int = 1
    sigma: float = 1.0
    mode: str = "exact"
    mc_samples: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "mode", str(self.mode).lower())
        if self.M < 0 or self.j < 1:
            raise ValueError(f"need M >= 0 and j >= 1, got M={self.M}, j={self.j}")
        if self.mode not in ("exact", "montecarlo"):
            raise ValueError(f"mode must be 'exact' or 'montecarlo', got {self.mode!r}")


@dataclass(frozen=True)
class BlockDraw:
    """Start offsets of blocks ``{s+1, ..., s+j}`` inside a history of length H."""

    starts: tuple
    j: int
    H: int

    def __post_init__(self):
        starts = tuple(int(s) for s in self.starts)
        object.__setattr__(self, "starts", starts)
        if self.j < 1 or self.j > self.H:
            raise ValueError(f"need 1 <= j <= H, got j={self.j}, H={self.H}")
        for s in starts:
            if not 0 <= s <= self.H - self.j:
                raise ValueError(f"start {s} outside [0, {self.H - self.j}]")


# --------------------------------------------------------------------------
# balance function


def exponential_balance_closed_form(mu1: float, mu2: float, M: int) -> float:
    if mu1 <= 0 or mu2 <= 0:
        raise ValueError("exponential means must be positive")
    return 1.0 / (1.0 + (mu1 / mu2) * M)


def _sf_vec(family, mu, sigma, j, x):
    x = np.asarray(x, dtype=np.float64)
    if family is Family.GAUSSIAN:
        return special.ndtr(-(x - j * mu) / (sigma * math.sqrt(j)))
    if family is Family.EXPONENTIAL:
        return np.where(x > 0, special.gammaincc(j, np.maximum(x, 0) / mu), 1.0)
    k = np.floor(x)
    if family is Family.BERNOULLI:
        if mu in (0.0, 1.0):
            return np.array([sum_sf(family, mu, sigma, j, v) for v in np.atleast_1d(x)])
        return np.where(k < 0, 1.0, np.where(k >= j, 0.0, special.bdtrc(np.clip(k, 0, j), j, mu)))
    return np.where(k < 0, 1.0, special.pdtrc(np.maximum(k, 0), j * mu))


def _balance_exact(q: BalanceQuery) -> float:
    f, j, M = q.family, q.j, q.M
    if f is Family.BERNOULLI:
        x = np.arange(j + 1)
        pmf = stats.binom.pmf(x, j, q.mu1)
        return float(np.sum(pmf * _sf_vec(f, q.muk, q.sigma, j, x) ** M))
    if f is Family.POISSON:
        lam = j * q.mu1
        top = int(lam + 40 * math.sqrt(lam) + 40)  # tail mass far below 1e-20
        x = np.arange(top + 1)
        pmf = stats.poisson.pmf(x, lam)
        return float(np.sum(pmf * _sf_vec(f, q.muk, q.sigma, j, x) ** M))
    if f is Family.GAUSSIAN:
        mean, sd = j * q.mu1, q.sigma * math.sqrt(j)

        def integrand(x):
            return stats.norm.pdf(x, mean, sd) * float(_sf_vec(f, q.muk, q.sigma, j, x)) ** M

        lo, hi = mean - 10 * sd, mean + 10 * sd
        pts = [p for p in (j * q.muk,) if lo < p < hi]
        val, _ = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=1e-14,
                                epsrel=1e-10, limit=400)
        return float(val)
    if f is Family.EXPONENTIAL:
        hi = float(stats.gamma.isf(1e-20, j, scale=q.mu1))

        def integrand(x):
            return stats.gamma.pdf(x, j, scale=q.mu1) * float(special.gammaincc(j, x / q.muk)) ** M

        val, _ = integrate.quad(integrand, 0.0, hi, epsabs=1e-14, epsrel=1e-10, limit=400)
        return float(val)
    raise ValueError(f"no exact balance function for {f.name.lower()} arms; use Monte Carlo")


@nb.njit(cache=True)
def _duel_loss_mc(code, mu1, muk, sigma, M, j, samples, rng):
    out = np.empty(samples)
    for s in range(samples):
        x = 0.0
        for _ in range(j):
            x += draw_reward(code, mu1, sigma, rng)
        lost = 1.0
        for _ in range(M):
            y = 0.0
            for _ in range(j):
                y += draw_reward(code, muk, sigma, rng)
            if not y > x:
                lost = 0.0
                break
        out[s] = lost
    return out


def _draw_sum(family, mu, sigma, j, n, rng):
    if family is Family.BERNOULLI:
        return rng.binomial(j, mu, size=n).astype(np.float64)
    if family is Family.GAUSSIAN:
        return rng.normal(j * mu, sigma * math.sqrt(j), size=n)
    if family is Family.POISSON:
        return rng.poisson(j * mu, size=n).astype(np.float64)
    return rng.gamma(j, mu, size=n)


def balance_function(q: BalanceQuery, rng: np.random.Generator | None = None) -> Estimate:
    """Evaluate ``alpha_k(M, j)`` exactly or by Monte Carlo.

    Monte Carlo draws X from the best arm's j-sum law and averages
    ``(1 - F(X))^M`` when the challenger's sum law is available, and falls
    back to simulating the M duels otherwise (truncated Gaussian).
    """
    if q.M == 0:
        return Estimate(1.0, 0.0)
    if q.mode == "exact":
        if q.family not in SUM_FAMILIES:
            raise ValueError(f"no exact balance function for {q.family.name.lower()} arms")
        return Estimate(_balance_exact(q), 0.0)
    rng = rng if rng is not None else np.random.default_rng()
    n = int(q.mc_samples)
    if q.family in SUM_FAMILIES:
        x = _draw_sum(q.family, q.mu1, q.sigma, q.j, n, rng)
        vals = _sf_vec(q.family, q.muk, q.sigma, q.j, x) ** q.M
    else:
        vals = _duel_loss_mc(int(q.family), q.mu1, q.muk, q.sigma, q.M, q.j, n, rng)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return Estimate(float(vals.mean()), se)


def balance_series(family, mu1: float, muk: float, T: int, beta: float = 1.0, j: int = 1,
                   sigma: float = 1.0) -> np.ndarray:
    """Partial sums ``S(t) = sum_{s=2}^t alpha(floor(beta s / ln(s)^2), j)``.

    Returned array has ``S(t)`` at index ``t`` (entries 0 and 1 are zero).
    """
    family = Family.parse(family)
    t = np.arange(2, T + 1)
    M = np.floor(beta * t / np.log(t) ** 2).astype(np.int64)
    if j == 1 and family is Family.EXPONENTIAL:
        terms = 1.0 / (1.0 + (mu1 / muk) * M)
    elif j == 1 and family is Family.BERNOULLI:
        # X = 1 beats every challenger draw; X = 0 loses to each with prob muk
        terms = (1.0 - mu1) * np.power(muk, M.astype(np.float64))
    else:
        cache = {}
        terms = np.empty(t.size)
        for i, m in enumerate(M):
            if m not in cache:
                cache[m] = balance_function(BalanceQuery(family, mu1, muk, int(m), j, sigma)).value
            terms[i] = cache[m]
    out = np.zeros(T + 1)
    out[2:] = np.cumsum(terms)
    return out


# --------------------------------------------------------------------------
# diversity


@nb.njit(cache=True, nogil=True)
def _greedy_disjoint(starts, j):
    # equal-length intervals: sorting by start sorts by end
    s = np.sort(starts)
    count = 0
    last_end = -1
    for i in range(s.shape[0]):
        if s[i] + 1 > last_end:
            count += 1
            last_end = s[i] + j
    return count


def max_disjoint_blocks(draw: BlockDraw) -> int:
    """Size of the largest family of pairwise disjoint blocks (greedy by end point)."""
    if not draw.starts:
        return 0
    return int(_greedy_disjoint(np.array(draw.starts, dtype=np.int64), draw.j))


@lru_cache(maxsize=None)
def _stirling_row(m: int) -> tuple:
    """Row ``S(m, 0..m)`` of Stirling numbers of the second kind, exact."""
    if m == 0:
        return (1,)
    prev = _stirling_row(m - 1)
    row = [0] * (m + 1)
    for k in range(1, m + 1):
        row[k] = k * (prev[k] if k < m else 0) + prev[k - 1]
    return tuple(row)


def stirling2(m: int, k: int) -> int:
    if m < 0 or k < 0:
        raise ValueError("negative argument")
    if k > m:
        return 0
    for i in range(m):  # build bottom-up, keeps recursion shallow
        _stirling_row(i)
    return _stirling_row(m)[k]


def diversity_pmf_exact(m: int, H: int, exact: bool = False):
    """Law of the number of distinct positions hit by m uniform draws in [H].

    Entry ``k - 1`` is ``P(X_{m,H,1} = k)`` for ``k = 1..min(m, H)``. With
    ``exact=True`` the probabilities are returned as Fractions.
    """
    if not (1 <= m <= MAX_EXACT_DIVERSITY and 1 <= H <= MAX_EXACT_DIVERSITY):
        raise ValueError(f"m and H must lie in [1, {MAX_EXACT_DIVERSITY}]")
    denom = H ** m
    probs = []
    falling = 1
    for k in range(1, min(m, H) + 1):
        falling *= H - k + 1
        probs.append(Fraction(falling * stirling2(m, k), denom))
    if exact:
        return probs
    return np.array([float(p) for p in probs])


def diversity_cdf_exact(m: int, H: int, x: float) -> float:
    """``P(X_{m,H,1} <= x)`` computed with exact rational arithmetic."""
    probs = diversity_pmf_exact(m, H, exact=True)
    kmax = math.floor(x)
    return float(sum(probs[:max(0, min(kmax, len(probs)))], Fraction(0)))


@nb.njit(cache=True)
def _diversity_mc(m, H, j, threshold, samples, rng):
    hits = 0
    starts = np.empty(m, dtype=np.int64)
    for _ in range(samples):
        for i in range(m):
            starts[i] = rb_start(H, j, rng)
        if _greedy_disjoint(starts, j) < threshold:
            hits += 1
    return hits


def diversity_estimate(m: int, H: int, j: int, threshold: int, samples: int,
                       rng: np.random.Generator) -> Estimate:
    """Monte Carlo estimate of ``P(X_{m,H,j} < threshold)`` under Random Block draws."""
    if not 1 <= j <= H:
        raise ValueError(f"need 1 <= j <= H, got j={j}, H={H}")
    if m < 1 or samples < 1:
        raise ValueError("m and samples must be positive")
    hits = _diversity_mc(m, H, j, threshold, samples, rng)
    p = hits / samples
    return Estimate(p, math.sqrt(p * (1 - p) / samples))


@nb.njit(cache=True)
def _diversity_hist(m, H, j, samples, rng):
    hist = np.zeros(m + 1, dtype=np.int64)
    starts = np.empty(m, dtype=np.int64)
    for _ in range(samples):
        for i in range(m):
            starts[i] = rb_start(H, j, rng)
        hist[_greedy_disjoint(starts, j)] += 1
    return hist


def diversity_distribution(m: int, H: int, j: int, samples: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Empirical law of ``X_{m,H,j}``: entry k is the frequency of ``X = k``."""
    if not 1 <= j <= H:
        raise ValueError(f"need 1 <= j <= H, got j={j}, H={H}")
    if m < 1 or samples < 1:
        raise ValueError("m and samples must be positive")
    return _diversity_hist(m, H, j, samples, rng) / samples
