"""Discrete-time path analysis: per-step cost I(y, x), trajectory rate J_N,
the closed-form most likely extinction path, and an independent grid
dynamic-programming oracle for the same minimum.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._backend import get_lane
from .offspring import pgf_d1, pgf_iterates


@dataclass(frozen=True)
class DiscretePath:
    """Normalized trajectory (u_0, ..., u_N) over N generations.

    Entries are nonnegative; u_0 = 1 and the no-resurrection rule are not
    enforced here because violating paths must remain representable, they
    simply evaluate to rate +inf.
    """

    u: tuple

    def __post_init__(self):
        u = tuple(float(x) for x in self.u)
        if len(u) < 2:
            raise ValueError("a path needs at least u_0 and u_1")
        for x in u:
            if not x >= 0.0 or math.isinf(x):
                raise ValueError(f"path entries must be finite and nonnegative, got {x!r}")
        object.__setattr__(self, "u", u)

    @property
    def horizon(self):
        return len(self.u) - 1


@dataclass(frozen=True)
class DpOracleConfig:
    """Grid for the dynamic-programming oracle: states {0} plus a uniform
    grid of grid_points nodes on (0, grid_max]."""

    grid_max: float
    grid_points: int
    horizon: int

    def __post_init__(self):
        if not self.grid_max > 1.0:
            raise ValueError(f"grid_max must exceed 1, got {self.grid_max!r}")
        if self.grid_points < 64:
            raise ValueError(f"grid_points must be at least 64, got {self.grid_points!r}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon!r}")


def legendre(dist, y, x):
    """Per-step cost I(y, x) = sup_t [t y - x g(t)] and the maximizing t.

    Args:
        dist: offspring law.
        y: target state, >= 0.
        x: source state, > 0.

    Returns:
        (rate, t_star). For 0 < y/x < L, t_star solves g'(t) = y/x by
        bisection (tolerance 1e-12 on g'). The boundary suprema are exact:
        y = 0 gives (-x log p_0, -inf), y/x = L gives (-x log p_L, +inf),
        and y/x > L gives (+inf, +inf).

    Raises:
        ValueError: x <= 0, y < 0, or y = 0 with p_0 = 0.
    """
    if not x > 0.0:
        raise ValueError(f"x must be positive, got {x!r}")
    if not y >= 0.0:
        raise ValueError(f"y must be nonnegative, got {y!r}")
    if y == 0.0 and dist.probs[0] == 0.0:
        raise ValueError("I(0, x) undefined: p_0 = 0")
    rate, t_star = _kernels.legendre_kernel(dist.as_array(), float(y), float(x))
    return rate, t_star


def path_rate(dist, path):
    """Trajectory rate J_N(u): sum of I over the positive steps plus the
    absorption term -u_{m-1} log p_0 at the first zero m.

    Returns +inf for u_0 != 1, for resurrection after a zero, and for any
    step steeper than the support slope.
    """
    u = path.u
    if u[0] != 1.0:
        return math.inf
    m = None
    for n, val in enumerate(u):
        if val == 0.0:
            m = n
            break
    if m is not None:
        for val in u[m:]:
            if val > 0.0:
                return math.inf
    stop = m if m is not None else len(u)
    total = 0.0
    for n in range(1, stop):
        rate, _ = legendre(dist, u[n], u[n - 1])
        if math.isinf(rate):
            return math.inf
        total += rate
    if m is not None:
        p0 = dist.probs[0]
        if p0 == 0.0:
            return math.inf
        total += -u[m - 1] * math.log(p0)
    return total


def most_likely_extinction_path(dist, N):
    """Rate-minimizing path from u_0 = 1 to u_N = 0, in closed form.

    The step ratio u_n/u_{n-1} equals q_{N-n} f'(q_{N-n}) / q_{N-n+1} with
    q the pgf iterates; working through the pgf keeps the terminal factor an
    exact zero (q_0 = 0) instead of a log(0) evaluation.
    """
    if dist.probs[0] == 0.0:
        raise ValueError("extinction impossible: p_0 = 0")
    q = pgf_iterates(dist, N).q
    u = [1.0]
    for n in range(1, N + 1):
        s = q[N - n]
        u.append(u[-1] * (s * pgf_d1(dist, s) / q[N - n + 1]))
    return DiscretePath(tuple(u))


def extinction_exponent_discrete(dist, N):
    """LDP exponent lim_K (1/K) log P(tau <= N) = log q_N."""
    if dist.probs[0] == 0.0:
        raise ValueError("extinction impossible: p_0 = 0")
    return math.log(pgf_iterates(dist, N).q[-1])


def dp_oracle(dist, cfg, backend=None):
    """Backward dynamic programming on the state grid, independent of the
    closed form.

    Boundary cost is forced extinction -x log p_0; interior levels minimize
    successor cost plus I over the grid, with an explicit absorb-now
    candidate, exploiting argmin monotonicity for an O(G log G) sweep per
    level. The first step is taken from the exact off-grid state 1.

    Args:
        dist: offspring law with p_0 > 0.
        cfg: DpOracleConfig.
        backend: kernel lane override, None for the default.

    Returns:
        (path, value): the arg-min DiscretePath from 1 to 0 and the value
        B_1(1). The value upper-bounds the continuum minimum and converges
        to it as the grid refines.
    """
    p0 = dist.probs[0]
    if p0 == 0.0:
        raise ValueError("extinction impossible: p_0 = 0")
    if cfg.horizon == 1:
        # single forced step, boundary term only
        return DiscretePath((1.0, 0.0)), -math.log(p0)
    lane = get_lane(backend)
    value, u = lane.dp_kernel(
        dist.as_array(),
        math.log(p0),
        np.int64(cfg.grid_points),
        float(cfg.grid_max),
        np.int64(cfg.horizon),
    )
    return DiscretePath(tuple(float(x) for x in u)), float(value)
