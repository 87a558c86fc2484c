"""
Comparison policies: Thompson Sampling, IMED, BESA, PHE, ReBoot and
Non-Parametric TS.

All of them are index-style policies emitting one pull per decision, except
that the ones needing one observation per arm start with an initial round
pulling every arm once. Each ``*_select`` function is a thin wrapper around
the jitted core that the whole-run kernel ``_index_simulate`` uses too.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .arms import Family, binarize_reward, draw_reward, kl_mean
from .samplers import wr_subsample_sum
from .sda import (
    History,
    Policy,
    SdaConfig,
    SdaPolicy,
    duel_won,
    record_checkpoints,
    shuffle_prefix,
)

TS_BERNOULLI, TS_GAUSSIAN, IMED, BESA, PHE, REBOOT, NPTS = range(7)

# params vector layout shared by the kernels
P_FAMILY, P_SIGMA, P_A, P_BOUND, P_INFLATE = range(5)


# --------------------------------------------------------------------------
# jitted cores


@nb.njit(cache=True, nogil=True)
def rd_argmax(x, rng):
    """Index of the maximum of ``x``, ties broken uniformly at random."""
    best = x.max()
    n_best = 0
    for i in range(x.shape[0]):
        if x[i] == best:
            n_best += 1
    if n_best == 1:
        for i in range(x.shape[0]):
            if x[i] == best:
                return i
    pick = rng.integers(0, n_best)
    for i in range(x.shape[0]):
        if x[i] == best:
            if pick == 0:
                return i
            pick -= 1
    return -1


@nb.njit(cache=True, nogil=True)
def _first_unpulled(counts):
    for k in range(counts.shape[0]):
        if counts[k] == 0:
            return k
    return -1


@nb.njit(cache=True, nogil=True)
def ts_bernoulli_core(counts, sums, rng):
    K = counts.shape[0]
    theta = np.empty(K)
    for k in range(K):
        s = sums[k]
        theta[k] = rng.beta(1.0 + s, 1.0 + counts[k] - s)
    return rd_argmax(theta, rng)


@nb.njit(cache=True, nogil=True)
def ts_gaussian_core(counts, sums, sigma, rng):
    K = counts.shape[0]
    theta = np.empty(K)
    for k in range(K):
        theta[k] = rng.normal(sums[k] / counts[k], sigma / math.sqrt(counts[k]))
    return rd_argmax(theta, rng)


@nb.njit(cache=True, nogil=True)
def imed_core(counts, sums, code, sigma):
    K = counts.shape[0]
    best_mean = -np.inf
    for k in range(K):
        mk = sums[k] / counts[k]
        if mk > best_mean:
            best_mean = mk
    best = np.inf
    arm = 0
    for k in range(K):
        mk = sums[k] / counts[k]
        idx = counts[k] * kl_mean(code, mk, best_mean, sigma) + math.log(counts[k])
        if idx < best:
            best = idx
            arm = k
    return arm


@nb.njit(cache=True, nogil=True)
def phe_pseudo_count(a, s):
    # ceil(a * s) robust to a * s landing a rounding error above an integer
    return int(math.ceil(a * s - 1e-9))


@nb.njit(cache=True, nogil=True)
def phe_arm_index(s, v, a, rng):
    extra = phe_pseudo_count(a, s)
    u = rng.binomial(extra, 0.5)
    return (v + u) / (s + extra)


@nb.njit(cache=True, nogil=True)
def phe_core(counts, sums, a, rng):
    K = counts.shape[0]
    idx = np.empty(K)
    for k in range(K):
        idx[k] = phe_arm_index(counts[k], sums[k], a, rng)
    return rd_argmax(idx, rng)


@nb.njit(cache=True, nogil=True)
def reboot_arm_index(row, s, total_sum, inflate, rng):
    ybar = total_sum / s
    shift = inflate * math.sqrt(s)
    total = 0.0
    for _ in range(s + 2):
        i = rng.integers(0, s + 2)
        if i < s:
            total += row[i]
        elif i == s:
            total += ybar + shift
        else:
            total += ybar - shift
    return total / (s + 2)


@nb.njit(cache=True, nogil=True)
def reboot_core(counts, values, sums, inflate, rng):
    K = counts.shape[0]
    idx = np.empty(K)
    for k in range(K):
        idx[k] = reboot_arm_index(values[k], counts[k], sums[k], inflate, rng)
    return rd_argmax(idx, rng)


@nb.njit(cache=True, nogil=True)
def npts_arm_index(n_zero, n_top, n_other, other_row, bound, rng):
    den = 0.0
    if n_zero > 0:
        den += rng.standard_gamma(float(n_zero))
    g_top = rng.standard_gamma(float(n_top + 1))
    num = bound * g_top
    den += g_top
    for i in range(n_other):
        e = rng.standard_exponential()
        num += e * other_row[i]
        den += e
    return num / den


@nb.njit(cache=True, nogil=True)
def npts_core(n_zero, n_top, n_other, other, bound, rng):
    """Dirichlet(1, ..., 1)-weighted mean of the history plus the bound.

    Rewards equal to 0 or to the bound are grouped: the sum of c i.i.d.
    Exp(1) weights is Gamma(c), which keeps the law exact while avoiding one
    draw per atom observation.
    """
    K = n_zero.shape[0]
    idx = np.empty(K)
    for k in range(K):
        idx[k] = npts_arm_index(n_zero[k], n_top[k], n_other[k], other[k], bound, rng)
    return rd_argmax(idx, rng)


@nb.njit(cache=True, nogil=True)
def besa_match(a, b, counts, values, sums, rng, perm):
    """One BESA duel, decided by the WR-SDA rule between two arms."""
    na, nb_ = counts[a], counts[b]
    ma, mb = sums[a] / na, sums[b] / nb_
    if na > nb_ or (na == nb_ and ma > mb):
        leader, chal = a, b
    elif nb_ > na or mb > ma:
        leader, chal = b, a
    elif rng.integers(0, 2) == 0:
        leader, chal = a, b
    else:
        leader, chal = b, a
    n = counts[chal]
    sub = wr_subsample_sum(values[leader], counts[leader], n, rng, perm)
    if duel_won(sums[chal] / n, sub / n, True):
        return chal
    return leader


@nb.njit(cache=True, nogil=True)
def besa_core(counts, values, sums, rng, perm):
    K = counts.shape[0]
    bracket = np.arange(K)
    shuffle_prefix(bracket, K, rng)
    alive = K
    while alive > 1:
        nxt = 0
        i = 0
        while i + 1 < alive:
            bracket[nxt] = besa_match(bracket[i], bracket[i + 1], counts, values, sums, rng,
                                      perm)
            nxt += 1
            i += 2
        if i < alive:
            bracket[nxt] = bracket[i]
            nxt += 1
        alive = nxt
    return bracket[0]


@nb.njit(cache=True, nogil=True)
def index_select(kind, params, counts, sums, values, n_zero, n_top, n_other, other, rng,
                 perm):
    if kind == TS_BERNOULLI:
        return ts_bernoulli_core(counts, sums, rng)
    k = _first_unpulled(counts)
    if k >= 0:
        return k
    if kind == TS_GAUSSIAN:
        return ts_gaussian_core(counts, sums, params[P_SIGMA], rng)
    if kind == IMED:
        return imed_core(counts, sums, int(params[P_FAMILY]), params[P_SIGMA])
    if kind == BESA:
        return besa_core(counts, values, sums, rng, perm)
    if kind == PHE:
        return phe_core(counts, sums, params[P_A], rng)
    if kind == REBOOT:
        return reboot_core(counts, values, sums, params[P_INFLATE], rng)
    return npts_core(n_zero, n_top, n_other, other, params[P_BOUND], rng)


@nb.njit(cache=True, nogil=True)
def index_update(arm, y, counts, sums, values, n_zero, n_top, n_other, other, bound,
                 track_atoms):
    n = counts[arm]
    values[arm, n] = y
    counts[arm] = n + 1
    sums[arm] += y
    if not track_atoms:
        return
    if y == 0.0:
        n_zero[arm] += 1
    elif y == bound:
        n_top[arm] += 1
    else:
        other[arm, n_other[arm]] = y
        n_other[arm] += 1


@nb.njit(cache=True, nogil=True)
def _index_simulate(kind, params, init_round, binarized, codes, mus, sigmas, gaps, horizon,
                    checkpoints, rng):
    K = codes.shape[0]
    counts = np.zeros(K, dtype=np.int64)
    sums = np.zeros(K)
    values = np.zeros((K, horizon))
    other = np.zeros((K, horizon)) if kind == NPTS else np.zeros((K, 1))
    n_zero = np.zeros(K, dtype=np.int64)
    n_top = np.zeros(K, dtype=np.int64)
    n_other = np.zeros(K, dtype=np.int64)
    perm = np.arange(horizon)
    regrets = np.zeros(checkpoints.shape[0])
    bound = params[P_BOUND]
    out = np.empty(K, dtype=np.int64)
    t = 0
    ci = 0
    first = init_round
    while t < horizon:
        if first:
            for k in range(K):
                out[k] = k
            n_out = K
            first = False
        else:
            out[0] = index_select(kind, params, counts, sums, values, n_zero, n_top, n_other,
                                  other, rng, perm)
            n_out = 1
        shuffle_prefix(out, n_out, rng)
        for i in range(min(n_out, horizon - t)):
            a = out[i]
            y = draw_reward(codes[a], mus[a], sigmas[a], rng)
            if binarized:
                y = binarize_reward(y, rng)
            index_update(a, y, counts, sums, values, n_zero, n_top, n_other, other, bound,
                         kind == NPTS)
            t += 1
            ci = record_checkpoints(t, ci, checkpoints, regrets, gaps, counts)
    return regrets, counts


# --------------------------------------------------------------------------
# public per-decision selection functions


def _as_counts_sums(counts, sums):
    counts = np.asarray(counts, dtype=np.int64)
    sums = np.asarray(sums, dtype=np.float64)
    if counts.shape != sums.shape or counts.ndim != 1:
        raise ValueError("counts and sums must be 1-d arrays of equal length")
    return counts, sums


def _pack_histories(histories):
    hs = [np.asarray(h.values if isinstance(h, History) else h, dtype=np.float64)
          for h in histories]
    if any(h.size == 0 for h in hs):
        raise ValueError("every arm must have at least one observation")
    counts = np.array([h.size for h in hs], dtype=np.int64)
    values = np.zeros((len(hs), counts.max()))
    for k, h in enumerate(hs):
        values[k, :h.size] = h
    sums = np.array([h.sum() for h in hs])
    return hs, counts, values, sums


def ts_select(counts, sums, family, rng, sigma: float = 1.0) -> int:
    """Thompson Sampling draw: Beta(1 + S, 1 + F) for Bernoulli rewards,
    Normal(mean, sigma^2 / N) under a flat prior for Gaussian rewards."""
    family = Family.parse(family)
    counts, sums = _as_counts_sums(counts, sums)
    if family is Family.BERNOULLI:
        return int(ts_bernoulli_core(counts, sums, rng))
    if family is Family.GAUSSIAN:
        if counts.min() < 1:
            raise ValueError("Gaussian TS needs one observation per arm")
        return int(ts_gaussian_core(counts, sums, float(sigma), rng))
    raise ValueError(f"no Thompson Sampling prior defined for {family.name.lower()} arms")


def imed_select(counts, sums, family, sigma: float = 1.0) -> int:
    """Minimise N_k kl(mean_k, best mean) + ln N_k; ties go to the lowest index."""
    family = Family.parse(family)
    if family is Family.TRUNCATED_GAUSSIAN:
        raise ValueError("IMED needs a one-parameter family")
    counts, sums = _as_counts_sums(counts, sums)
    if counts.min() < 1:
        raise ValueError("IMED needs one observation per arm")
    return int(imed_core(counts, sums, int(family), float(sigma)))


def besa_select(histories, rng) -> int:
    """BESA tournament over a shuffled bracket; one WR duel per match."""
    hs, counts, values, sums = _pack_histories(histories)
    if len(hs) < 2:
        raise ValueError("BESA needs at least two arms")
    perm = np.arange(values.shape[1])
    return int(besa_core(counts, values, sums, rng, perm))


def phe_select(counts, sums, a: float, rng) -> int:
    """Perturbed history: add Binomial(ceil(a s), 1/2) pseudo-successes."""
    counts, sums = _as_counts_sums(counts, sums)
    if counts.min() < 1:
        raise ValueError("PHE needs one observation per arm")
    if np.any(sums < 0) or np.any(sums > counts):
        raise ValueError("PHE needs rewards in [0, 1]")
    return int(phe_core(counts, sums, float(a), rng))


def reboot_select(histories, sigma_inflate: float, rng) -> int:
    """Bootstrap of the history augmented with mean +/- sigma_inflate sqrt(s)."""
    _, counts, values, sums = _pack_histories(histories)
    return int(reboot_core(counts, values, sums, float(sigma_inflate), rng))


def phe_index(s: int, v: float, a: float, rng) -> float:
    """One draw of the PHE index of an arm with ``s`` pulls and reward sum ``v``."""
    return float(phe_arm_index(int(s), float(v), float(a), rng))


def reboot_index(history, sigma_inflate: float, rng) -> float:
    """One draw of the ReBoot index of a single arm."""
    h = np.asarray(history, dtype=np.float64)
    if h.size == 0:
        raise ValueError("empty history")
    return float(reboot_arm_index(h, h.size, h.sum(), float(sigma_inflate), rng))


def npts_index(history, upper_bound: float, rng) -> float:
    """One draw of the Non-Parametric TS index of a single arm."""
    _, n_zero, n_top, n_other, other = _pack_atoms([history], float(upper_bound))
    return float(npts_arm_index(n_zero[0], n_top[0], n_other[0], other[0], float(upper_bound),
                                rng))


def _pack_atoms(histories, B):
    hs, _, _, _ = _pack_histories(histories)
    K = len(hs)
    n_zero = np.zeros(K, dtype=np.int64)
    n_top = np.zeros(K, dtype=np.int64)
    n_other = np.zeros(K, dtype=np.int64)
    other = np.zeros((K, max(h.size for h in hs)))
    for k, h in enumerate(hs):
        if np.any(h > B):
            raise ValueError(f"reward above the support bound {B}")
        rest = h[(h != 0.0) & (h != B)]
        n_zero[k] = np.sum(h == 0.0)
        n_top[k] = np.sum(h == B) if B != 0.0 else 0
        n_other[k] = rest.size
        other[k, :rest.size] = rest
    return hs, n_zero, n_top, n_other, other


def npts_select(histories, upper_bound: float, rng) -> int:
    """Non-parametric TS: Dirichlet-weighted mean of the history and the bound."""
    B = float(upper_bound)
    _, n_zero, n_top, n_other, other = _pack_atoms(histories, B)
    return int(npts_core(n_zero, n_top, n_other, other, B, rng))


# --------------------------------------------------------------------------
# policy objects


class IndexPolicy(Policy):
    """Generic one-pull-per-decision baseline driven by ``index_select``."""

    kind = -1
    init_round = True

    def __init__(self, binarized: bool = False):
        self.binarized = bool(binarized)
        self.params = np.zeros(5)
        self.params[P_BOUND] = np.inf

    def check_instance(self, instance):
        if self.binarized and not all(a.bounded_unit for a in instance.arms):
            raise ValueError("binarization needs rewards in [0, 1]")

    def reset(self, K, horizon):
        cap = max(horizon, 1)
        self.counts = np.zeros(K, dtype=np.int64)
        self.sums = np.zeros(K)
        self.values = np.zeros((K, cap))
        self.other = np.zeros((K, cap)) if self.kind == NPTS else np.zeros((K, 1))
        self.n_zero = np.zeros(K, dtype=np.int64)
        self.n_top = np.zeros(K, dtype=np.int64)
        self.n_other = np.zeros(K, dtype=np.int64)
        self.perm = np.arange(cap)
        self._first = self.init_round

    def choose(self, rng):
        if self._first:
            self._first = False
            return list(range(self.counts.shape[0]))
        return [int(index_select(self.kind, self.params, self.counts, self.sums, self.values,
                                 self.n_zero, self.n_top, self.n_other, self.other, rng,
                                 self.perm))]

    def _validate_reward(self, reward):
        pass

    def observe(self, arm, reward, rng):
        if self.binarized:
            reward = binarize_reward(reward, rng)
        self._validate_reward(reward)
        index_update(arm, reward, self.counts, self.sums, self.values, self.n_zero, self.n_top,
                     self.n_other, self.other, self.params[P_BOUND], self.kind == NPTS)

    def simulate(self, instance, horizon, checkpoints, rng):
        self.check_instance(instance)
        codes, mus, sigmas = instance.kernel_arrays()
        regrets, counts = _index_simulate(self.kind, self.params, self.init_round,
                                          self.binarized, codes, mus, sigmas, instance.gaps,
                                          horizon, checkpoints, rng)
        return regrets, counts, {}


class ThompsonSampling(IndexPolicy):
    """Beta-Bernoulli TS (optionally on binarized rewards) or Gaussian TS with
    known sigma and a flat prior."""

    def __init__(self, family="bernoulli", sigma: float = 1.0, binarized: bool = False):
        super().__init__(binarized)
        family = Family.parse(family)
        if family is Family.BERNOULLI:
            self.kind, self.init_round = TS_BERNOULLI, False
        elif family is Family.GAUSSIAN:
            if binarized:
                raise ValueError("Gaussian TS does not use binarization")
            self.kind, self.init_round = TS_GAUSSIAN, True
        else:
            raise ValueError(f"no Thompson Sampling prior defined for {family.name.lower()} arms")
        self.family = family
        self.params[P_SIGMA] = sigma
        self.name = "TS"

    def check_instance(self, instance):
        super().check_instance(instance)
        if self.kind == TS_BERNOULLI and not self.binarized:
            if any(a.family is not Family.BERNOULLI for a in instance.arms):
                raise ValueError("Beta-Bernoulli TS needs binary rewards; enable binarization")


class Imed(IndexPolicy):
    kind = IMED
    name = "IMED"

    def __init__(self, family, sigma: float = 1.0):
        super().__init__(False)
        family = Family.parse(family)
        if family is Family.TRUNCATED_GAUSSIAN:
            raise ValueError("IMED needs a one-parameter family")
        self.family = family
        self.params[P_FAMILY] = int(family)
        self.params[P_SIGMA] = sigma


class Phe(IndexPolicy):
    kind = PHE
    name = "PHE"

    def __init__(self, a: float = 1.1):
        super().__init__(False)
        if a <= 0:
            raise ValueError("PHE perturbation scale a must be positive")
        self.params[P_A] = a

    def check_instance(self, instance):
        if not all(a.bounded_unit for a in instance.arms):
            raise ValueError("PHE needs rewards in [0, 1]")

    def _validate_reward(self, reward):
        if not 0.0 <= reward <= 1.0:
            raise ValueError(f"PHE needs rewards in [0, 1], got {reward}")


class ReBoot(IndexPolicy):
    kind = REBOOT
    name = "ReBoot"

    def __init__(self, sigma: float = 1.5):
        super().__init__(False)
        self.params[P_INFLATE] = sigma


class NonParametricTS(IndexPolicy):
    kind = NPTS
    name = "NP-TS"

    def __init__(self, upper_bound: float = 1.0):
        super().__init__(False)
        self.params[P_BOUND] = float(upper_bound)

    def check_instance(self, instance):
        B = self.params[P_BOUND]
        for a in instance.arms:
            if not (a.bounded_unit and B >= 1.0):
                raise ValueError(f"NP-TS needs rewards bounded by B={B}")

    def _validate_reward(self, reward):
        if reward > self.params[P_BOUND]:
            raise ValueError(f"reward {reward} above the support bound")


class Besa(IndexPolicy):
    """BESA. With two arms it is WR-SDA and delegates to it wholesale."""

    kind = BESA
    name = "BESA"

    def __init__(self):
        super().__init__(False)
        self._wr = None

    def reset(self, K, horizon):
        if K == 2:
            self._wr = SdaPolicy(SdaConfig("WR"))
            self._wr.reset(K, horizon)
        else:
            self._wr = None
            super().reset(K, horizon)

    def choose(self, rng):
        return self._wr.choose(rng) if self._wr else super().choose(rng)

    def observe(self, arm, reward, rng):
        if self._wr:
            self._wr.observe(arm, reward, rng)
        else:
            super().observe(arm, reward, rng)

    def simulate(self, instance, horizon, checkpoints, rng):
        if instance.K == 2:
            return SdaPolicy(SdaConfig("WR")).simulate(instance, horizon, checkpoints, rng)
        return super().simulate(instance, horizon, checkpoints, rng)
