"""
Sub-sampling Duelling Algorithms: round engine and run driver.

Each round the arm with the most pulls (the leader) duels every other arm.
A challenger wins when its full empirical mean is at least the mean of an
equal-size sub-sample of the leader's history (strict comparison optional). Winners are pulled; if
nobody wins, the leader is pulled. Optional forced exploration adds every
arm with fewer than sqrt(ln r) pulls.

The jitted functions below are the single implementation of that logic.
:func:`sda_round` and :class:`SdaPolicy` drive them one round at a time from
Python, :func:`_sda_simulate` drives them for a whole run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .arms import BanditInstance, binarize_reward, draw_reward
from .samplers import (
    Sampler,
    lb_start,
    lds_start,
    min_block_scan,
    rb_start,
    wr_subsample_sum,
)


# --------------------------------------------------------------------------
# history


class History:
    """Append-only reward sequence of one arm with running prefix sums.

    ``prefix[i]`` is the sum of the first ``i`` rewards, so block means cost
    O(1). Positions passed to :meth:`block_mean` and :meth:`subset_mean`
    are 1-based.
    """

    def __init__(self, values=()):
        values = np.asarray(values, dtype=np.float64).ravel()
        n = values.shape[0]
        cap = max(16, n)
        self._values = np.zeros(cap)
        self._prefix = np.zeros(cap + 1)
        self._values[:n] = values
        np.cumsum(values, out=self._prefix[1:n + 1])
        self._n = n
        self._frozen = False

    @classmethod
    def view(cls, values: np.ndarray, prefix: np.ndarray, n: int) -> "History":
        """Read-only history over existing buffers (no copy)."""
        h = cls.__new__(cls)
        h._values, h._prefix, h._n, h._frozen = values, prefix, n, True
        return h

    def __len__(self):
        return self._n

    @property
    def values(self) -> np.ndarray:
        return self._values[:self._n]

    @property
    def prefix(self) -> np.ndarray:
        return self._prefix[:self._n + 1]

    def append(self, y: float):
        if self._frozen:
            raise TypeError("this history is a read-only view")
        if self._n == self._values.shape[0]:
            cap = 2 * self._n
            values, prefix = np.zeros(cap), np.zeros(cap + 1)
            values[:self._n] = self._values
            prefix[:self._n + 1] = self._prefix[:self._n + 1]
            self._values, self._prefix = values, prefix
        self._values[self._n] = y
        self._prefix[self._n + 1] = self._prefix[self._n] + y
        self._n += 1

    def mean(self) -> float:
        if self._n == 0:
            raise ValueError("empty history")
        return self._prefix[self._n] / self._n

    def block_mean(self, a: int, b: int) -> float:
        """Mean over positions a+1..b."""
        if not 0 <= a < b <= self._n:
            raise ValueError(f"invalid block ({a}, {b}] for history of length {self._n}")
        return (self._prefix[b] - self._prefix[a]) / (b - a)

    def subset_mean(self, subset) -> float:
        idx = np.asarray(subset, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("empty subset")
        if idx.min() < 1 or idx.max() > self._n:
            raise ValueError(f"subset out of range [1, {self._n}]")
        if idx.size == idx[-1] - idx[0] + 1 and np.all(np.diff(idx) == 1):
            return self.block_mean(int(idx[0]) - 1, int(idx[-1]))
        return float(self._values[idx - 1].sum()) / idx.size


# --------------------------------------------------------------------------
# jitted engine


@nb.njit(cache=True, nogil=True)
def elect_leader_core(counts, prefix, prev, rng):
    K = counts.shape[0]
    maxc = counts.max()
    best = -np.inf
    n_tied = 0
    for k in range(K):
        if counts[k] == maxc:
            n_tied += 1
            mk = prefix[k, counts[k]] / counts[k]
            if mk > best:
                best = mk
    if n_tied == 1:
        for k in range(K):
            if counts[k] == maxc:
                return k
    cands = np.empty(K, dtype=np.int64)
    n_c = 0
    for k in range(K):
        if counts[k] == maxc and prefix[k, counts[k]] / counts[k] == best:
            cands[n_c] = k
            n_c += 1
    if n_c == 1:
        return cands[0]
    for i in range(n_c):
        if cands[i] == prev:
            return prev
    return cands[rng.integers(0, n_c)]


@nb.njit(cache=True, nogil=True)
def leader_subsample_sum(sampler, values, prefix, leader, k, m, n, r, rng, perm, cache):
    """Sum of the leader's sub-sample used in its duel against challenger k.

    ``cache`` (K x 4 float array: leader, m, n, start) lets SSMC extend its
    minimum-block scan incrementally while the leader and ``n`` are unchanged.
    """
    if sampler == 0:
        s = rb_start(m, n, rng)
        return prefix[leader, s + n] - prefix[leader, s]
    if sampler == 1:
        return wr_subsample_sum(values[leader], m, n, rng, perm)
    if sampler == 2:
        s = lb_start(m, n)
        return prefix[leader, s + n] - prefix[leader, s]
    if sampler == 3:
        s = lds_start(m, n, r)
        return prefix[leader, s + n] - prefix[leader, s]
    row = prefix[leader]
    c_leader = int(cache[k, 0])
    c_m = int(cache[k, 1])
    c_n = int(cache[k, 2])
    if c_leader == leader and c_n == n and c_m <= m:
        start = int(cache[k, 3])
        best = row[start + n] - row[start]
        best, start = min_block_scan(row, c_m - n + 1, m - n, n, best, start)
    else:
        best, start = min_block_scan(row, 0, m - n, n, np.inf, -1)
    cache[k, 0] = leader
    cache[k, 1] = m
    cache[k, 2] = n
    cache[k, 3] = start
    return best


@nb.njit(cache=True, nogil=True)
def duel_won(challenger_mean, leader_sub_mean, ties_to_challenger):
    if ties_to_challenger:
        return challenger_mean >= leader_sub_mean
    return challenger_mean > leader_sub_mean


@nb.njit(cache=True, nogil=True)
def sda_choose(values, prefix, counts, r, prev_leader, sampler, forced, ties_to_challenger,
               rng, perm, cache, out, wins):
    """Compute the pull set of round r+1 after r completed rounds.

    Fills ``out`` with the arms to pull (ascending order) and ``wins`` with
    the duel outcomes; returns (number of arms, leader).
    """
    K = counts.shape[0]
    leader = elect_leader_core(counts, prefix, prev_leader, rng)
    m = counts[leader]
    for k in range(K):
        wins[k] = False
        if k == leader:
            continue
        n = counts[k]
        if n > m:
            continue
        challenger_mean = prefix[k, n] / n
        sub = leader_subsample_sum(sampler, values, prefix, leader, k, m, n, r + 1, rng,
                                   perm, cache)
        if duel_won(challenger_mean, sub / n, ties_to_challenger):
            wins[k] = True
    n_out = 0
    threshold = math.sqrt(math.log(r)) if forced and r >= 1 else 0.0
    for k in range(K):
        if wins[k] or (forced and counts[k] < threshold):
            out[n_out] = k
            n_out += 1
    if n_out == 0:
        out[0] = leader
        n_out = 1
    return n_out, leader


@nb.njit(cache=True, nogil=True)
def shuffle_prefix(arr, n, rng):
    for i in range(n - 1, 0, -1):
        j = rng.integers(0, i + 1)
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp


@nb.njit(cache=True, nogil=True)
def pseudo_regret(gaps, counts):
    s = 0.0
    for k in range(gaps.shape[0]):
        s += gaps[k] * counts[k]
    return s


@nb.njit(cache=True, nogil=True)
def record_checkpoints(t, ci, checkpoints, regrets, gaps, counts):
    while ci < checkpoints.shape[0] and checkpoints[ci] == t:
        regrets[ci] = pseudo_regret(gaps, counts)
        ci += 1
    return ci


@nb.njit(cache=True, nogil=True)
def _sda_simulate(codes, mus, sigmas, gaps, horizon, checkpoints, sampler, forced, binarized,
                  ties_to_challenger, rng):
    K = codes.shape[0]
    values = np.zeros((K, horizon))
    prefix = np.zeros((K, horizon + 1))
    counts = np.zeros(K, dtype=np.int64)
    perm = np.arange(horizon)
    cache = np.full((K, 4), -1.0)
    out = np.empty(K, dtype=np.int64)
    wins = np.zeros(K, dtype=np.bool_)
    regrets = np.zeros(checkpoints.shape[0])
    # diagnostics: min leader-count slack over rounds, min pull-set size, rounds
    diag = np.array([np.inf, np.inf, 0.0])
    for k in range(K):
        out[k] = k
    n_out = K
    leader = -1
    r = 0
    t = 0
    ci = 0
    while t < horizon:
        if r > 0:
            n_out, leader = sda_choose(values, prefix, counts, r, leader, sampler, forced,
                                       ties_to_challenger, rng, perm, cache, out, wins)
            slack = counts[leader] - (r // K - 1)
            if slack < diag[0]:
                diag[0] = slack
        if n_out < diag[1]:
            diag[1] = n_out
        shuffle_prefix(out, n_out, rng)
        n_pull = min(n_out, horizon - t)
        for i in range(n_pull):
            a = out[i]
            y = draw_reward(codes[a], mus[a], sigmas[a], rng)
            if binarized:
                y = binarize_reward(y, rng)
            n = counts[a]
            values[a, n] = y
            prefix[a, n + 1] = prefix[a, n] + y
            counts[a] = n + 1
            t += 1
            ci = record_checkpoints(t, ci, checkpoints, regrets, gaps, counts)
        r += 1
    diag[2] = r
    return regrets, counts, diag


# --------------------------------------------------------------------------
# round-level API


@dataclass
class SdaConfig:
    """Sampler choice and flags of one SDA variant.

    ``forced_exploration`` defaults to on for SSMC and off otherwise.
    ``binarized`` stores Bernoulli(reward) pseudo-rewards in the histories and
    is only valid for rewards in [0, 1]. With ``ties_to_challenger`` a duel
    ending in equal means is won by the challenger; with strict duels a
    challenger whose only reward sits at the bottom of a discrete support can
    never win again.
    """

    sampler: Sampler = Sampler.RB
    forced_exploration: bool | None = None
    binarized: bool = False
    ties_to_challenger: bool = True

    def __post_init__(self):
        self.sampler = Sampler.parse(self.sampler)
        if self.forced_exploration is None:
            self.forced_exploration = self.sampler is Sampler.SSMC
        self.forced_exploration = bool(self.forced_exploration)
        self.binarized = bool(self.binarized)

    @property
    def label(self) -> str:
        name = "SSMC" if self.sampler is Sampler.SSMC else f"{self.sampler.name}-SDA"
        if self.forced_exploration != (self.sampler is Sampler.SSMC):
            name += "+FE" if self.forced_exploration else "-FE"
        if self.binarized:
            name += "+bin"
        if not self.ties_to_challenger:
            name += "-strict"
        return name


class RoundState:
    """Mutable state of an SDA run: round and pull counters, counts, histories."""

    def __init__(self, K: int, capacity: int = 64):
        if K < 2:
            raise ValueError("need at least two arms")
        self.K = K
        self.r = 0
        self.t = 0
        self.leader = -1
        self.counts = np.zeros(K, dtype=np.int64)
        self.values = np.zeros((K, capacity))
        self.prefix = np.zeros((K, capacity + 1))
        self.perm = np.arange(capacity)
        self.cache = np.full((K, 4), -1.0)
        self.last_duels = np.zeros(K, dtype=np.bool_)

    @classmethod
    def from_histories(cls, histories, leader: int = -1, r: int | None = None) -> "RoundState":
        """Build a state from per-arm reward lists (mainly for tests)."""
        histories = [np.asarray(h, dtype=np.float64) for h in histories]
        cap = max(64, max(len(h) for h in histories))
        state = cls(len(histories), cap)
        for k, h in enumerate(histories):
            for y in h:
                state.append(k, y)
        state.t = int(state.counts.sum())
        state.leader = leader
        state.r = r if r is not None else max(1, int(state.counts.max()))
        return state

    def history(self, k: int) -> History:
        n = int(self.counts[k])
        return History.view(self.values[k], self.prefix[k], n)

    @property
    def histories(self) -> list:
        return [self.history(k) for k in range(self.K)]

    def _grow(self, cap: int):
        values, prefix = np.zeros((self.K, cap)), np.zeros((self.K, cap + 1))
        old = self.values.shape[1]
        values[:, :old] = self.values
        prefix[:, :old + 1] = self.prefix
        self.values, self.prefix = values, prefix
        self.perm = np.arange(cap)

    def append(self, k: int, y: float):
        n = int(self.counts[k])
        if n == self.values.shape[1]:
            self._grow(2 * n)
        self.values[k, n] = y
        self.prefix[k, n + 1] = self.prefix[k, n] + y
        self.counts[k] = n + 1


def elect_leader(state: RoundState, rng: np.random.Generator) -> int:
    """Arm with most pulls; ties go to the larger empirical mean, then to the
    previous leader, then uniformly at random."""
    if state.counts.min() < 1:
        raise ValueError("every arm must have been pulled once")
    return int(elect_leader_core(state.counts, state.prefix, state.leader, rng))


def run_duel(challenger_hist: History, leader_hist: History, subset,
             ties_to_challenger: bool = True) -> bool:
    """True iff the challenger's mean beats the leader's sub-sample mean.

    Equal means count as a challenger win unless ``ties_to_challenger`` is off.
    """
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size != len(challenger_hist):
        raise ValueError(f"sub-sample has size {subset.size}, challenger has "
                         f"{len(challenger_hist)} observations")
    return bool(duel_won(challenger_hist.mean(), leader_hist.subset_mean(subset),
                         ties_to_challenger))


def sda_round(state: RoundState, config: SdaConfig, rng: np.random.Generator) -> list:
    """Elect the leader, run the K-1 duels and return the next pull set.

    Updates ``state.leader`` and ``state.last_duels``; the caller pulls the
    arms and appends rewards.
    """
    if state.r < 1 or state.counts.min() < 1:
        raise ValueError("initialise the state by pulling every arm once")
    out = np.empty(state.K, dtype=np.int64)
    n_out, leader = sda_choose(state.values, state.prefix, state.counts, state.r, state.leader,
                               int(config.sampler), config.forced_exploration,
                               config.ties_to_challenger, rng, state.perm, state.cache, out,
                               state.last_duels)
    state.leader = int(leader)
    return [int(a) for a in out[:n_out]]


# --------------------------------------------------------------------------
# policies and the run driver


@dataclass
class RegretTrace:
    """Cumulative pseudo-regret of one run at the requested checkpoints."""

    checkpoints: np.ndarray
    regrets: np.ndarray
    counts: np.ndarray
    run_index: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> float:
        return float(self.regrets[-1])


class Policy:
    """Sequential agent: ``choose`` returns the arms to pull next, ``observe``
    receives each reward. Index policies return a single arm per call."""

    name = "policy"

    def check_instance(self, instance: BanditInstance):
        pass

    def reset(self, K: int, horizon: int):
        raise NotImplementedError

    def choose(self, rng: np.random.Generator) -> list:
        raise NotImplementedError

    def observe(self, arm: int, reward: float, rng: np.random.Generator):
        raise NotImplementedError

    def simulate(self, instance, horizon, checkpoints, rng):
        """Whole-run fast path; returns (regrets, counts, diagnostics) or None."""
        return None


class SdaPolicy(Policy):
    """SP-SDA (or SSMC) behind the common policy interface."""

    def __init__(self, config: SdaConfig | None = None, **kwargs):
        self.config = config if config is not None else SdaConfig(**kwargs)
        self.name = self.config.label
        self.state = None

    def check_instance(self, instance):
        if self.config.binarized and not all(a.bounded_unit for a in instance.arms):
            raise ValueError("binarization needs rewards in [0, 1]")

    def reset(self, K, horizon):
        self.state = RoundState(K, max(horizon, 1))

    def choose(self, rng):
        st = self.state
        if st.r == 0:
            pulls = list(range(st.K))
        else:
            pulls = sda_round(st, self.config, rng)
        st.r += 1
        return pulls

    def observe(self, arm, reward, rng):
        if self.config.binarized:
            reward = binarize_reward(reward, rng)
        self.state.append(arm, reward)
        self.state.t += 1

    def simulate(self, instance, horizon, checkpoints, rng):
        self.check_instance(instance)
        codes, mus, sigmas = instance.kernel_arrays()
        regrets, counts, diag = _sda_simulate(
            codes, mus, sigmas, instance.gaps, horizon, checkpoints, int(self.config.sampler),
            self.config.forced_exploration, self.config.binarized, self.config.ties_to_challenger,
            rng)
        return regrets, counts, {"min_leader_slack": diag[0], "min_pull_set": diag[1],
                                 "rounds": diag[2]}


def _checkpoints(checkpoints, horizon) -> np.ndarray:
    cp = np.asarray(checkpoints if checkpoints is not None else [horizon], dtype=np.int64)
    if cp.ndim != 1 or cp.size == 0:
        raise ValueError("checkpoints must be a non-empty list")
    if np.any(np.diff(cp) < 0) or cp[0] < 1 or cp[-1] > horizon:
        raise ValueError(f"checkpoints must be sorted within [1, {horizon}]")
    return cp


def run_policy(policy: Policy, instance: BanditInstance, horizon: int, checkpoints=None,
               rng: np.random.Generator | None = None, fast: bool = True,
               run_index: int = 0) -> RegretTrace:
    """Play ``policy`` on ``instance`` for ``horizon`` pulls.

    Pull sets are played in uniformly random order and truncated at random
    when they would exceed the budget. ``fast=False`` forces the generic
    choose/observe loop; both paths consume ``rng`` identically.
    """
    K = instance.K
    if horizon < K:
        raise ValueError(f"horizon {horizon} is smaller than the number of arms {K}")
    cp = _checkpoints(checkpoints, horizon)
    rng = rng if rng is not None else np.random.default_rng()
    policy.check_instance(instance)
    policy.reset(K, horizon)
    if fast:
        res = policy.simulate(instance, horizon, cp, rng)
        if res is not None:
            regrets, counts, diag = res
            return RegretTrace(cp, regrets, counts, run_index, diag)

    gaps = instance.gaps
    codes, mus, sigmas = instance.kernel_arrays()
    counts = np.zeros(K, dtype=np.int64)
    regrets = np.zeros(cp.size)
    t = ci = 0
    while t < horizon:
        pulls = np.array(policy.choose(rng), dtype=np.int64)
        if pulls.size == 0 or np.any(pulls < 0) or np.any(pulls >= K):
            raise RuntimeError(f"{policy.name} returned an invalid pull set {pulls.tolist()}")
        if np.unique(pulls).size != pulls.size:
            raise RuntimeError(f"{policy.name} returned duplicate arms {pulls.tolist()}")
        shuffle_prefix(pulls, pulls.size, rng)
        for a in pulls[:min(pulls.size, horizon - t)]:
            y = draw_reward(codes[a], mus[a], sigmas[a], rng)
            policy.observe(int(a), y, rng)
            counts[a] += 1
            t += 1
            ci = record_checkpoints(t, ci, cp, regrets, gaps, counts)
    return RegretTrace(cp, regrets, counts, run_index, {})
