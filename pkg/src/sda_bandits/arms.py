"""
Reward distributions, divergences and asymptotic lower-bound constants.

Arms are one-parameter laws indexed by their mean, plus the truncated
Gaussian ``Y = 0 v (X ^ 1)`` used as a bounded, non-exponential-family test
case. The jitted helpers at the bottom of the module (``draw_reward``,
``kl_mean``, ``binarize_reward``) are shared by the public functions and by
the simulation kernels, so both consume random streams identically.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numba as nb
import numpy as np
from scipy import integrate, special


class Family(enum.IntEnum):
    BERNOULLI = 0
    GAUSSIAN = 1
    POISSON = 2
    EXPONENTIAL = 3
    TRUNCATED_GAUSSIAN = 4

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "b": "bernoulli", "ber": "bernoulli",
            "g": "gaussian", "normal": "gaussian",
            "p": "poisson",
            "exp": "exponential",
            "tg": "truncated_gaussian", "truncatedgaussian": "truncated_gaussian",
        }
        key = aliases.get(key, key)
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValueError(f"unknown arm family {value!r}") from None


#: Families whose sum of ``j`` i.i.d. draws has a closed-form law.
SUM_FAMILIES = (Family.BERNOULLI, Family.GAUSSIAN, Family.POISSON, Family.EXPONENTIAL)


# --------------------------------------------------------------------------
# jitted primitives


@nb.njit(cache=True, nogil=True)
def draw_reward(code, mu, sigma, rng):
    if code == 0:
        return 1.0 if rng.random() < mu else 0.0
    if code == 1:
        return rng.normal(mu, sigma)
    if code == 2:
        return float(rng.poisson(mu))
    if code == 3:
        return mu * rng.standard_exponential()
    x = rng.normal(mu, sigma)
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@nb.njit(cache=True, nogil=True)
def binarize_reward(y, rng):
    return 1.0 if rng.random() < y else 0.0


@nb.njit(cache=True, nogil=True)
def _xlogx_ratio(x, y):
    # x * ln(x / y) with the 0 ln 0 = 0 convention
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return np.inf
    return x * math.log(x / y)


@nb.njit(cache=True, nogil=True)
def kl_mean(code, x, y, sigma):
    """KL divergence between the laws of mean ``x`` and ``y`` in one family."""
    if x == y:
        return 0.0
    if code == 0:
        return _xlogx_ratio(x, y) + _xlogx_ratio(1.0 - x, 1.0 - y)
    if code == 1:
        d = x - y
        return d * d / (2.0 * sigma * sigma)
    if code == 2:
        if y == 0.0:
            return np.inf
        return y - x + _xlogx_ratio(x, y)
    if code == 3:
        if x == 0.0 or y == 0.0:
            return np.inf
        return math.log(y / x) + x / y - 1.0
    return np.nan


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class ArmDistribution:
    """A reward law: family tag, mean parameter ``mu`` and scale ``sigma``.

    For the truncated Gaussian ``mu`` is the mean of the underlying normal
    variable before clamping to [0, 1], not the mean of the rewards.
    """

    family: Family
    mu: float
    sigma: float = 1.0

    def __post_init__(self):
        family = Family.parse(self.family)
        object.__setattr__(self, "family", family)
        mu, sigma = float(self.mu), float(self.sigma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if not math.isfinite(mu):
            raise ValueError(f"mu must be finite, got {mu}")
        if family is Family.BERNOULLI and not 0.0 <= mu <= 1.0:
            raise ValueError(f"Bernoulli mean must lie in [0, 1], got {mu}")
        if family in (Family.POISSON, Family.EXPONENTIAL) and mu <= 0.0:
            raise ValueError(f"{family.name.lower()} mean must be positive, got {mu}")
        if family in (Family.GAUSSIAN, Family.TRUNCATED_GAUSSIAN) and not sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {sigma}")

    def sample(self, rng: np.random.Generator) -> float:
        return draw_reward(int(self.family), self.mu, self.sigma, rng)

    @property
    def mean(self) -> float:
        return analytic_mean(self)

    @property
    def bounded_unit(self) -> bool:
        """True when every reward lies in [0, 1]."""
        return self.family in (Family.BERNOULLI, Family.TRUNCATED_GAUSSIAN)


@dataclass(frozen=True)
class BanditInstance:
    """An ordered collection of at least two arms."""

    arms: tuple

    def __post_init__(self):
        arms = tuple(self.arms)
        if len(arms) < 2:
            raise ValueError("a bandit instance needs at least two arms")
        for a in arms:
            if not isinstance(a, ArmDistribution):
                raise TypeError(f"expected ArmDistribution, got {type(a).__name__}")
        object.__setattr__(self, "arms", arms)

    @classmethod
    def from_means(cls, family, means: Sequence[float], sigma: float = 1.0) -> "BanditInstance":
        return cls(tuple(ArmDistribution(family, m, sigma) for m in means))

    def __len__(self):
        return len(self.arms)

    @property
    def K(self) -> int:
        return len(self.arms)

    @property
    def means(self) -> np.ndarray:
        return np.array([analytic_mean(a) for a in self.arms])

    @property
    def best_mean(self) -> float:
        return float(self.means.max())

    @property
    def gaps(self) -> np.ndarray:
        m = self.means
        return m.max() - m

    @property
    def unique_optimal(self) -> bool:
        m = self.means
        return int(np.sum(m == m.max())) == 1

    @property
    def family(self) -> Family | None:
        """The common family of all arms, or None for mixed instances."""
        fams = {a.family for a in self.arms}
        return fams.pop() if len(fams) == 1 else None

    def kernel_arrays(self):
        """Family codes, means and scales as arrays for the jitted kernels."""
        codes = np.array([int(a.family) for a in self.arms], dtype=np.int64)
        mus = np.array([a.mu for a in self.arms], dtype=np.float64)
        sigmas = np.array([a.sigma for a in self.arms], dtype=np.float64)
        return codes, mus, sigmas


# --------------------------------------------------------------------------
# operations


def sample(dist: ArmDistribution, rng: np.random.Generator) -> float:
    return dist.sample(rng)


def _tg_atoms(mu: float, sigma: float) -> tuple[float, float]:
    """Return (P(Y = 0), P(Y = 1)) for the truncated Gaussian."""
    return float(special.ndtr(-mu / sigma)), float(special.ndtr((mu - 1.0) / sigma))


def analytic_mean(dist: ArmDistribution) -> float:
    if dist.family is not Family.TRUNCATED_GAUSSIAN:
        return dist.mu
    mu, sigma = dist.mu, dist.sigma
    _, p_one = _tg_atoms(mu, sigma)

    def integrand(x):
        return x * math.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))

    inner, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return p_one + inner


def kl_divergence(family, mu_x: float, mu_y: float, sigma: float = 1.0) -> float:
    """Divergence ``kl(mu_x, mu_y)`` between two members of one family.

    Returns ``math.inf`` when the first law is not absolutely continuous
    with respect to the second (Bernoulli boundary cases).
    """
    family = Family.parse(family)
    if family is Family.TRUNCATED_GAUSSIAN:
        raise ValueError("the truncated Gaussian is not parameterised by its mean; "
                         "use truncated_gaussian_kl")
    # validate both means through the constructor
    ArmDistribution(family, mu_x, sigma)
    ArmDistribution(family, mu_y, sigma)
    return float(kl_mean(int(family), float(mu_x), float(mu_y), float(sigma)))


def lai_robbins_constant(instance: BanditInstance) -> float:
    """Sum over sub-optimal arms of ``gap / kl(mu_k, mu_star)``."""
    family = instance.family
    if family is None:
        raise ValueError("lai_robbins_constant needs a single family across arms")
    if family is Family.TRUNCATED_GAUSSIAN:
        raise ValueError("use bk_constant_truncated_gaussian for truncated Gaussian arms")
    sigmas = {a.sigma for a in instance.arms}
    if family is Family.GAUSSIAN and len(sigmas) > 1:
        raise ValueError("Gaussian arms must share one known sigma")
    sigma = instance.arms[0].sigma
    mus = [a.mu for a in instance.arms]
    best = max(mus)
    total = 0.0
    for mu in sorted(mus):
        if mu < best:
            total += (best - mu) / kl_divergence(family, mu, best, sigma)
    return total


def truncated_gaussian_kl(p: ArmDistribution, q: ArmDistribution) -> float:
    """KL(p || q) between two truncated Gaussian reward laws.

    Two atoms (at 0 and 1) plus the absolutely continuous part on (0, 1).
    """
    for d in (p, q):
        if d.family is not Family.TRUNCATED_GAUSSIAN:
            raise ValueError("truncated_gaussian_kl takes truncated Gaussian arms")
    if p == q:
        return 0.0
    # log-probabilities of the atoms, stable deep in the tails
    lp0, lq0 = special.log_ndtr(-p.mu / p.sigma), special.log_ndtr(-q.mu / q.sigma)
    lp1, lq1 = special.log_ndtr((p.mu - 1) / p.sigma), special.log_ndtr((q.mu - 1) / q.sigma)
    total = 0.0
    for lp, lq in ((lp0, lq0), (lp1, lq1)):
        if lp == -np.inf:
            continue
        if lq == -np.inf:
            return math.inf
        total += math.exp(lp) * (lp - lq)

    def logpdf(x, d):
        z = (x - d.mu) / d.sigma
        return -0.5 * z * z - math.log(d.sigma) - 0.5 * math.log(2 * math.pi)

    def integrand(x):
        a = logpdf(x, p)
        return math.exp(a) * (a - logpdf(x, q))

    inner, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return total + inner


def bk_constant_truncated_gaussian(instance: BanditInstance) -> float:
    """Burnetas-Katehakis regret constant for truncated Gaussian arms.

    Sub-optimal arms whose divergence to the best arm is infinite contribute 0.
    """
    if instance.family is not Family.TRUNCATED_GAUSSIAN:
        raise ValueError("all arms must be truncated Gaussian")
    if not instance.unique_optimal:
        raise ValueError("a unique optimal arm is required")
    means = instance.means
    star = int(np.argmax(means))
    total = 0.0
    for k, arm in enumerate(instance.arms):
        if k == star:
            continue
        kl = truncated_gaussian_kl(arm, instance.arms[star])
        if math.isinf(kl):
            continue
        total += (means[star] - means[k]) / kl
    return total


def sum_cdf(family, mu: float, sigma: float, j: int, x: float) -> float:
    """CDF at ``x`` of the sum of ``j`` i.i.d. rewards of the given arm."""
    return _sum_dist(family, mu, sigma, j, x, upper=False)


def sum_sf(family, mu: float, sigma: float, j: int, x: float) -> float:
    """Survival function ``1 - sum_cdf``, computed without cancellation."""
    return _sum_dist(family, mu, sigma, j, x, upper=True)


def _sum_dist(family, mu, sigma, j, x, upper):
    family = Family.parse(family)
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    if family is Family.TRUNCATED_GAUSSIAN:
        raise ValueError("no closed-form sum law for truncated Gaussian arms; use Monte Carlo")
    x = float(x)
    if family is Family.GAUSSIAN:
        z = (x - j * mu) / (sigma * math.sqrt(j))
        return float(special.ndtr(-z) if upper else special.ndtr(z))
    if family is Family.EXPONENTIAL:
        if x <= 0.0:
            return 1.0 if upper else 0.0
        return float(special.gammaincc(j, x / mu) if upper else special.gammainc(j, x / mu))
    # integer-valued laws: F(x) = F(floor x)
    if x < 0.0:
        return 1.0 if upper else 0.0
    k = math.floor(x)
    if family is Family.BERNOULLI:
        if k >= j:
            return 0.0 if upper else 1.0
        if mu == 0.0:
            return 0.0 if upper else 1.0
        if mu == 1.0:
            return 1.0 if upper else 0.0
        return float(special.bdtrc(k, j, mu) if upper else special.bdtr(k, j, mu))
    return float(special.pdtrc(k, j * mu) if upper else special.pdtr(k, j * mu))


def binarize(reward: float, rng: np.random.Generator) -> float:
    """Replace a reward in [0, 1] by a Bernoulli(reward) pseudo-reward."""
    reward = float(reward)
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"binarization needs a reward in [0, 1], got {reward}")
    return binarize_reward(reward, rng)
