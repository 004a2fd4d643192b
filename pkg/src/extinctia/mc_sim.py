"""Monte Carlo simulation of the branching process and the square-root
diffusion: extinction frequencies with errors, and conditional-on-extinction
mean paths for comparison against the optimal trajectories.

Replicas draw from counter-based streams keyed by (seed, replica index), and
results are reduced in replica order within fixed-size chunks, so a result is
bit-identical for a given config regardless of thread count or backend lane.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import apply_thread_env, get_lane
from .feller_path import FellerModel, closed_form_exponent
from .offspring import OffspringDistribution

SCHEME_EXACT = "exact_poisson_gamma"
SCHEME_EULER = "euler_full_truncation"

# 95% normal quantile for the Wilson interval
_Z95 = 1.959963984540054


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed!r}")


class RngStream:
    """One random stream, keyed by (seed, replica).

    Streams for different replica indices never share state, which is what
    makes replica-parallel simulation reproducible. Drawing methods cover the
    samplers the simulators use; all are exact-acceptance, no lookup tables.
    """

    def __init__(self, seed, replica=0, backend=None):
        _check_seed(seed)
        _check_seed(replica)
        self._lane = get_lane(backend)
        self.state = self._lane.stream_state(np.uint64(seed), np.uint64(replica))

    def random(self):
        """Uniform double in [0, 1)."""
        return float(self._lane.next_double(self.state))

    def normal(self):
        return float(self._lane.rnorm(self.state))

    def gamma(self, shape):
        if not shape >= 1.0:
            raise ValueError(f"shape must be >= 1, got {shape!r}")
        return float(self._lane.rgamma(self.state, float(shape)))

    def poisson(self, lam):
        if not lam >= 0.0:
            raise ValueError(f"lam must be nonnegative, got {lam!r}")
        return int(self._lane.rpois(self.state, float(lam)))

    def binomial(self, n, p):
        if n < 0:
            raise ValueError(f"n must be nonnegative, got {n!r}")
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p!r}")
        return int(self._lane.rbinom(self.state, np.int64(n), float(p)))


@dataclass(frozen=True)
class GwSimConfig:
    """Branching-process run: K ancestors, N generations, reps replicas."""

    dist: OffspringDistribution
    K: int
    N: int
    reps: int
    seed: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K!r}")
        if self.N < 1:
            raise ValueError(f"N must be at least 1, got {self.N!r}")
        if self.reps < 1:
            raise ValueError(f"reps must be at least 1, got {self.reps!r}")
        _check_seed(self.seed)


@dataclass(frozen=True)
class FellerSimConfig:
    """Diffusion run on a uniform grid of n_steps steps over [0, T]."""

    model: FellerModel
    scheme: str
    n_steps: int
    reps: int
    seed: int

    def __post_init__(self):
        if self.scheme not in (SCHEME_EXACT, SCHEME_EULER):
            raise ValueError(
                f"scheme must be {SCHEME_EXACT!r} or {SCHEME_EULER!r}, got {self.scheme!r}"
            )
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be at least 1, got {self.n_steps!r}")
        if self.reps < 1:
            raise ValueError(f"reps must be at least 1, got {self.reps!r}")
        _check_seed(self.seed)
        if self.scheme == SCHEME_EULER:
            recommended = self.model.T * max(1.0, abs(self.model.alpha)) * 100.0
            if self.n_steps < recommended:
                warnings.warn(
                    f"Euler scheme with n_steps={self.n_steps} below the "
                    f"recommended {math.ceil(recommended)}; absorption bias grows",
                    stacklevel=2,
                )


@dataclass(frozen=True)
class McExtinctionResult:
    """Extinction-frequency estimate with errors and the conditional mean path.

    frequency counts absorption by the horizon; std_error is the binomial
    sqrt(f(1-f)/reps); the Wilson 95% bounds stay honest when extinctions are
    rare. conditional_mean_path (and its per-entry standard errors) average
    the normalized trajectory over the n_conditioned replicas satisfying the
    conditioning event, and are None when that count is zero.
    """

    frequency: float
    std_error: float
    n_extinct: int
    wilson_low: float
    wilson_high: float
    n_conditioned: int
    conditional_mean_path: tuple
    conditional_se_path: tuple


def _wilson(k, n):
    f = k / n
    denom = 1.0 + _Z95 * _Z95 / n
    center = (f + _Z95 * _Z95 / (2.0 * n)) / denom
    half = _Z95 * math.sqrt(f * (1.0 - f) / n + _Z95 * _Z95 / (4.0 * n * n)) / denom
    # the bounds are exactly 0 and 1 at the degenerate counts; don't let
    # sqrt roundoff leak through
    lo = 0.0 if k == 0 else max(center - half, 0.0)
    hi = 1.0 if k == n else min(center + half, 1.0)
    return lo, hi


def _assemble(n_ext, n_cond, cond_s1, cond_s2, reps):
    f = n_ext / reps
    lo, hi = _wilson(n_ext, reps)
    if n_cond > 0:
        m = cond_s1 / n_cond
        var = np.maximum(cond_s2 / n_cond - m * m, 0.0)
        se = np.sqrt(var / n_cond)
        mean_path = tuple(float(x) for x in m)
        se_path = tuple(float(x) for x in se)
    else:
        mean_path = None
        se_path = None
    return McExtinctionResult(
        frequency=f,
        std_error=math.sqrt(f * (1.0 - f) / reps),
        n_extinct=int(n_ext),
        wilson_low=lo,
        wilson_high=hi,
        n_conditioned=int(n_cond),
        conditional_mean_path=mean_path,
        conditional_se_path=se_path,
    )


def simulate_gw_step(dist, x, rng):
    """One branching generation from x individuals.

    Sampled as a multinomial over the support via a chain of binomials, so the
    cost is O(L) draws regardless of x; x = 0 is absorbing and draws nothing.
    """
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x!r}")
    if x == 0:
        return 0
    return int(rng._lane.gw_step(rng.state, dist.as_array(), np.int64(x)))


def gw_extinction_mc(cfg, *, include_early_extinction=False, backend=None):
    """Estimate P(tau <= N) and the conditional mean path for the branching
    process.

    The conditioning event for the mean path is absorption at exactly N
    (the dominant extinction time for large K); include_early_extinction
    widens it to absorption by N for sensitivity checks. Deterministic for a
    given cfg: same bits for any thread count.
    """
    lane = get_lane(backend)
    apply_thread_env()
    n_ext, n_cond, cond_s1, cond_s2, _, _ = lane.gw_mc_kernel(
        np.uint64(cfg.seed),
        cfg.dist.as_array(),
        np.int64(cfg.K),
        np.int64(cfg.N),
        np.int64(cfg.reps),
        bool(include_early_extinction),
    )
    return _assemble(n_ext, n_cond, cond_s1, cond_s2, cfg.reps)


def _exact_step_params(model, h):
    # Gamma scale b and Poisson factor exp(alpha h)/b of the exact transition
    if abs(model.alpha) < 1e-10:
        b = 0.5 * model.sigma2 * h
    else:
        b = 0.5 * model.sigma2 * math.expm1(model.alpha * h) / model.alpha
    return math.exp(model.alpha * h) / b, b


def simulate_feller_path(cfg, rng):
    """One diffusion replica on the grid.

    Returns (path, tau): path is the array of states X_0..X_{n_steps} with
    X_0 = K, and tau the first grid time at 0, +inf if never absorbed.

    The exact_poisson_gamma scheme draws each step from the true transition
    law (Gamma with Poisson-mixed shape), so extinction statistics carry no
    step-size bias; euler_full_truncation absorbs at the first nonpositive
    proposal and is kept as a cross-check.
    """
    model = cfg.model
    h = model.T / cfg.n_steps
    row = np.empty(cfg.n_steps + 1, dtype=np.float64)
    if cfg.scheme == SCHEME_EULER:
        k = rng._lane.feller_replica_euler(
            rng.state,
            float(model.K),
            np.int64(cfg.n_steps),
            model.alpha,
            math.sqrt(model.sigma2),
            h,
            math.sqrt(h),
            row,
        )
    else:
        lam_fac, b = _exact_step_params(model, h)
        k = rng._lane.feller_replica_exact(
            rng.state, float(model.K), np.int64(cfg.n_steps), lam_fac, b, row
        )
    tau = k * h if k >= 0 else math.inf
    return row, tau


def feller_extinction_mc(cfg, backend=None):
    """Estimate P(tau <= T) and the conditional mean path for the diffusion.

    Conditioning event is absorption by the horizon; the mean path is
    normalized by K. Warns when the expected number of extinct replicas under
    the closed-form exponent is below 10 (estimate unreliable). Deterministic
    for a given cfg.
    """
    model = cfg.model
    expected = cfg.reps * math.exp(-model.K * closed_form_exponent(model))
    if expected < 10.0:
        warnings.warn(
            f"about {expected:.2f} extinct replicas expected; "
            "frequency estimate unreliable at this K/reps",
            stacklevel=2,
        )
    h = model.T / cfg.n_steps
    lam_fac, b = _exact_step_params(model, h)
    lane = get_lane(backend)
    apply_thread_env()
    n_ext, cond_s1, cond_s2, _, _ = lane.feller_mc_kernel(
        np.uint64(cfg.seed),
        float(model.K),
        np.int64(cfg.n_steps),
        cfg.scheme == SCHEME_EULER,
        model.alpha,
        math.sqrt(model.sigma2),
        h,
        lam_fac,
        b,
        np.int64(cfg.reps),
    )
    return _assemble(n_ext, n_ext, cond_s1, cond_s2, cfg.reps)
