"""Offspring laws and their generating-function calculus.

Everything downstream (path rates, exponents, simulation) consumes a finite
offspring distribution through the four maps defined here: the pgf f(s), its
iterates f_n(0), the log moment generating function g(t) with derivatives, and
the exact extinction law f_N(0)^K.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

_NORM_TOL = 1e-12
_NEG_INF = float("-inf")


@dataclass(frozen=True)
class OffspringDistribution:
    """Finite-support offspring law (p_0, ..., p_L) with p_L > 0.

    Trailing zero probabilities are stripped at construction; the degenerate
    law (1.0,) is allowed and means certain immediate death. p_0 = 0 is legal
    here but rejected by the extinction-path operations that need it positive.
    """

    probs: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if not probs:
            raise ValueError("offspring law needs at least one probability")
        for p in probs:
            if not p >= 0.0:
                raise ValueError(f"probabilities must be nonnegative, got {p!r}")
        total = math.fsum(probs)
        if abs(total - 1.0) > _NORM_TOL:
            raise ValueError(
                f"probabilities sum to {total!r}, expected 1 within {_NORM_TOL}"
            )
        while len(probs) > 1 and probs[-1] == 0.0:
            probs = probs[:-1]
        object.__setattr__(self, "probs", probs)

    @property
    def max_support(self):
        """Largest support point L."""
        return len(self.probs) - 1

    def as_array(self):
        return np.asarray(self.probs, dtype=np.float64)

    @classmethod
    def from_pmf(cls, pmf, tail_tol=1e-12, max_support=100000):
        """Truncate an infinite pmf to finite support.

        Accumulates pmf(0), pmf(1), ... until the remaining mass is at most
        tail_tol, then folds that remainder into the last retained entry, so
        the result is exactly normalized and every g evaluation stays exact.
        """
        probs = []
        total = 0.0
        l = 0
        while True:
            probs.append(float(pmf(l)))
            total += probs[-1]
            if l >= 1 and 1.0 - total <= tail_tol:
                break
            if l >= max_support:
                raise ValueError(
                    f"tail mass still above {tail_tol} at support {max_support}"
                )
            l += 1
        probs[-1] += max(1.0 - total, 0.0)
        return cls(tuple(probs))

    @classmethod
    def poisson(cls, mu, tail_tol=1e-12):
        """Poisson(mu) offspring, truncated per from_pmf."""
        if mu < 0.0:
            raise ValueError(f"mu must be nonnegative, got {mu!r}")
        if mu == 0.0:
            return cls((1.0,))
        log_mu = math.log(mu)
        return cls.from_pmf(
            lambda l: math.exp(l * log_mu - math.lgamma(l + 1) - mu), tail_tol
        )

    @classmethod
    def geometric(cls, r, tail_tol=1e-12):
        """Geometric offspring P(l) = r (1-r)^l on {0, 1, ...}, truncated."""
        if not 0.0 < r <= 1.0:
            raise ValueError(f"r must lie in (0, 1], got {r!r}")
        if r == 1.0:
            return cls((1.0,))
        return cls.from_pmf(lambda l: r * (1.0 - r) ** l, tail_tol)


@dataclass(frozen=True)
class PgfIterates:
    """Iterates q_n = f_n(0), q_0 = 0; q_N is the one-ancestor extinction
    probability by generation N."""

    q: tuple

    @property
    def horizon(self):
        return len(self.q) - 1


def pgf(dist, s):
    """Probability generating function f(s) = sum_l p_l s^l, for s in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s!r}")
    acc = 0.0
    for p in reversed(dist.probs):
        acc = acc * s + p
    return acc


def pgf_d1(dist, s):
    """Derivative f'(s) = sum_l l p_l s^(l-1)."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s!r}")
    acc = 0.0
    for l in range(dist.max_support, 0, -1):
        acc = acc * s + l * dist.probs[l]
    return acc


def mean(dist):
    """Offspring mean m = f'(1)."""
    return math.fsum(l * p for l, p in enumerate(dist.probs))


def _check_t(dist, t):
    if math.isnan(t):
        raise ValueError("t must not be NaN")
    if math.isinf(t) and t > 0.0:
        raise ValueError("t = +inf is outside the domain; only -inf is a sentinel")
    if t == _NEG_INF and dist.probs[0] == 0.0:
        raise ValueError("g(-inf) undefined: p_0 = 0")


def log_mgf(dist, t):
    """Log moment generating function g(t) = log sum_l exp(t l) p_l.

    t = -inf is accepted as an exact sentinel with g(-inf) = log p_0; it is a
    domain error when p_0 = 0. Finite evaluation is max-shifted log-sum-exp,
    so large |t| cannot overflow.
    """
    _check_t(dist, t)
    if t == _NEG_INF:
        return math.log(dist.probs[0])
    return _kernels.g_all(dist.as_array(), t)[0]


def log_mgf_d1(dist, t):
    """g'(t); exactly 0 at the -inf sentinel."""
    _check_t(dist, t)
    if t == _NEG_INF:
        return 0.0
    return _kernels.g_all(dist.as_array(), t)[1]


def log_mgf_d2(dist, t):
    """g''(t); exactly 0 at the -inf sentinel."""
    _check_t(dist, t)
    if t == _NEG_INF:
        return 0.0
    return _kernels.g_all(dist.as_array(), t)[2]


def pgf_iterates(dist, N):
    """q_0..q_N by forward pgf iteration, q_n = f(q_{n-1}) from q_0 = 0.

    Iteration stays in the pgf domain [0, 1], which is contraction-stable;
    the log-domain iterates are exp-related and checked in tests only.
    """
    if not isinstance(N, (int, np.integer)) or isinstance(N, bool) or N < 1:
        raise ValueError(f"N must be an integer >= 1, got {N!r}")
    q = [0.0]
    s = 0.0
    for _ in range(N):
        s = pgf(dist, s)
        q.append(s)
    return PgfIterates(tuple(q))


def extinction_prob_exact(dist, K, N):
    """Exact extinction probability P(tau <= N) = f_N(0)^K for K ancestors."""
    if not isinstance(K, (int, np.integer)) or isinstance(K, bool) or K < 1:
        raise ValueError(f"K must be an integer >= 1, got {K!r}")
    q_N = pgf_iterates(dist, N).q[-1]
    if q_N == 0.0:
        return 0.0
    if q_N == 1.0:
        return 1.0
    # exp(K log q) keeps precision when q^K underflows plain powering
    return math.exp(K * math.log(q_N))
