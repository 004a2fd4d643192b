"""Numerical kernels, written to compile under numba njit unchanged.

Every function here is plain Python over numpy scalars/arrays, restricted to the
njit-supported subset. The backend module clones this namespace and jits it; the
interpreted originals are the numpy fallback lane. Keep the two lanes bit-identical:
no fastmath, no reordering, uint64-pure arithmetic in the RNG core.

RNG stream state is a uint64[8] array::

    [key0, key1, block_counter, buffer_pos, buf0, buf1, buf2, buf3]

Counter-based Philox4x64-10 keyed by (seed, replica): distinct replicas are distinct
keys, so streams never share state. The raw stream reproduces numpy's Philox bit
generator for key=[seed, replica] (the block counter pre-increments, first block has
counter 1), which the tests pin down.
"""
import math

import numpy as np

prange = range  # replaced by numba.prange in the jitted namespace

U64 = np.uint64

# Philox4x64 round and Weyl constants.
_PHILOX_M0 = U64(0xD2E7470EE14C6C93)
_PHILOX_M1 = U64(0xCA5A826395121157)
_WEYL0 = U64(0x9E3779B97F4A7C15)
_WEYL1 = U64(0xBB67AE8584CAA73B)
_SHIFT32 = U64(32)
_LO32 = U64(0xFFFFFFFF)
_SHIFT11 = U64(11)
_INV53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi

# Fixed chunk sizes keep the reduction order, and therefore every emitted float,
# independent of thread count and machine memory.
GW_CHUNK = 16384
FELLER_CHUNK_DOUBLES = 4194304


def _mulhi(a, b):
    # high 64 bits of a 64x64 product via 32-bit limbs (uint64 wraps in both lanes)
    alo = a & _LO32
    ahi = a >> _SHIFT32
    blo = b & _LO32
    bhi = b >> _SHIFT32
    mid = (alo * blo >> _SHIFT32) + (ahi * blo & _LO32) + (alo * bhi)
    return ahi * bhi + (ahi * blo >> _SHIFT32) + (mid >> _SHIFT32)


def _refill(st):
    ctr = st[2] + U64(1)
    st[2] = ctr
    c0 = ctr
    c1 = U64(0)
    c2 = U64(0)
    c3 = U64(0)
    k0 = st[0]
    k1 = st[1]
    for _ in range(10):
        hi0 = _mulhi(_PHILOX_M0, c0)
        lo0 = _PHILOX_M0 * c0
        hi1 = _mulhi(_PHILOX_M1, c2)
        lo1 = _PHILOX_M1 * c2
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + _WEYL0
        k1 = k1 + _WEYL1
    st[4] = c0
    st[5] = c1
    st[6] = c2
    st[7] = c3
    st[3] = U64(0)


def stream_state(seed, replica):
    """Fresh stream state for (seed, replica)."""
    st = np.zeros(8, dtype=np.uint64)
    st[0] = U64(seed)
    st[1] = U64(replica)
    st[3] = U64(4)  # empty buffer, first draw refills
    return st


def next_u64(st):
    pos = np.int64(st[3])
    if pos >= 4:
        _refill(st)
        pos = 0
    v = st[4 + pos]
    st[3] = U64(pos + 1)
    return v


def next_double(st):
    # 53-bit uniform in [0, 1), same mapping as numpy
    return (next_u64(st) >> _SHIFT11) * _INV53


def philox_raw(seed, replica, n):
    """First n raw uint64 outputs of stream (seed, replica)."""
    st = stream_state(seed, replica)
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = next_u64(st)
    return out


def rnorm(st):
    # Box-Muller, cosine branch only; the spare is discarded to keep the
    # draw count per call fixed
    u1 = next_double(st)
    while u1 == 0.0:
        u1 = next_double(st)
    u2 = next_double(st)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


def rgamma(st, shape):
    # Marsaglia-Tsang with the exact acceptance test; valid for shape >= 1,
    # which is the only range the callers use
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rnorm(st)
        t = 1.0 + c * x
        if t <= 0.0:
            continue
        v = t * t * t
        u = next_double(st)
        if u == 0.0:
            continue
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v


def rbeta(st, a, b):
    ga = rgamma(st, a)
    gb = rgamma(st, b)
    return ga / (ga + gb)


def rbinom(st, n, p):
    # exact beta-splitting on the median order statistic: O(log n) splits
    # down to a Bernoulli-sum base case
    count = np.int64(0)
    while n > 30:
        if p <= 0.0:
            return count
        if p >= 1.0:
            return count + n
        i = (n + 1) // 2
        v = rbeta(st, float(i), float(n + 1 - i))
        if v <= p:
            count += i
            p = (p - v) / (1.0 - v)
            n = n - i
        else:
            p = p / v
            n = i - 1
    if p <= 0.0:
        return count
    if p >= 1.0:
        return count + n
    k = np.int64(0)
    for _ in range(n):
        if next_double(st) < p:
            k += 1
    return count + k


def rpois(st, lam):
    # exact gamma-splitting on waiting times: O(log lam) splits down to a
    # Knuth product base case (lam <= 30 keeps exp(-lam) well above underflow)
    count = np.int64(0)
    while lam > 30.0:
        m = np.int64(0.875 * lam)
        g = rgamma(st, float(m))
        if g <= lam:
            count += m
            lam = lam - g
        else:
            return count + rbinom(st, m - 1, lam / g)
    limit = math.exp(-lam)
    k = np.int64(0)
    p = 1.0
    while True:
        p = p * next_double(st)
        if p <= limit:
            return count + k
        k += 1


def sample_doubles(seed, replica, n):
    st = stream_state(seed, replica)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = next_double(st)
    return out


def sample_normals(seed, replica, n):
    st = stream_state(seed, replica)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = rnorm(st)
    return out


def sample_gammas(seed, replica, shape, n):
    st = stream_state(seed, replica)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = rgamma(st, shape)
    return out


def sample_binomials(seed, replica, trials, p, n):
    st = stream_state(seed, replica)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = rbinom(st, trials, p)
    return out


def sample_poissons(seed, replica, lam, n):
    st = stream_state(seed, replica)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = rpois(st, lam)
    return out


def g_all(probs, t):
    """Log moment generating function of the offspring law and its first two
    derivatives at finite t, in one overflow-safe max-shifted pass.

    Returns (g, g1, g2).
    """
    top = probs.shape[0] - 1
    # t*l is monotone in l, so the max shift sits at a support endpoint;
    # shifting at the lowest support point keeps t << 0 finite when p_0 = 0
    if t > 0.0:
        shift = t * top
    else:
        lo_l = 0
        while probs[lo_l] == 0.0:
            lo_l += 1
        shift = t * lo_l
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    for l in range(top + 1):
        w = probs[l] * math.exp(t * l - shift)
        s0 += w
        s1 += l * w
        s2 += l * l * w
    g1 = s1 / s0
    return shift + math.log(s0), g1, s2 / s0 - g1 * g1


def _tstar(probs, r):
    # root of g'(t) = r for 0 < r < L: g' is strictly increasing, so bisection
    # on an expanding bracket cannot fail; tolerance is on g', not on t
    lo = -1.0
    hi = 1.0
    while g_all(probs, lo)[1] >= r:
        lo = lo * 2.0
    while g_all(probs, hi)[1] <= r:
        hi = hi * 2.0
    mid = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g1 = g_all(probs, mid)[1]
        if abs(g1 - r) <= 1e-12:
            return mid
        if g1 < r:
            lo = mid
        else:
            hi = mid
    return mid


def legendre_kernel(probs, y, x):
    """sup_t [t*y - x*g(t)] for x > 0, y >= 0, with the boundary suprema taken
    in closed form. Returns (rate, t_star); t_star is +-inf at the boundaries:
    growth ratios at the extreme support points cost the log-probability of
    every particle drawing that point, and ratios outside the support hull are
    unreachable. Callers must have checked p_0 > 0 before requesting y = 0.
    """
    top_i = probs.shape[0] - 1
    lo_i = 0
    while probs[lo_i] == 0.0:
        lo_i += 1
    r = y / x
    if r <= float(lo_i):
        if r == float(lo_i):
            return -x * math.log(probs[lo_i]), -math.inf
        return math.inf, -math.inf
    if r >= float(top_i):
        if r == float(top_i):
            return -x * math.log(probs[top_i]), math.inf
        return math.inf, math.inf
    t = _tstar(probs, r)
    g = g_all(probs, t)[0]
    return t * y - x * g, t


def dp_kernel(probs, logp0, grid_points, grid_max, horizon):
    """Backward grid dynamic programming for the minimal extinction rate.

    States are {0} plus the uniform grid delta*i, i = 1..grid_points, on
    (0, grid_max]. Boundary level is the forced-extinction cost -x*log p_0;
    earlier levels take the min over grid successors plus an explicit
    absorb-now candidate. The per-level argmin is monotone in the state
    (the transition cost x*phi(u/x) is submodular), so each level runs as
    divide-and-conquer monotone-argmin in O(G log G) pair evaluations.
    The first step is evaluated off-grid at the exact state 1.

    Returns (value, u) with u the arg-min trajectory, u[0] = 1, u[horizon] = 0.
    Requires horizon >= 2; the single-step case is closed-form at the caller.
    """
    G = grid_points
    delta = grid_max / G
    top = np.int64(probs.shape[0] - 1)

    C = np.empty(G + 1, dtype=np.float64)
    C[0] = 0.0
    for i in range(1, G + 1):
        C[i] = -(delta * i) * logp0

    argtab = np.zeros((horizon + 1, G + 1), dtype=np.int64)
    stack = np.empty((256, 4), dtype=np.int64)

    for n in range(horizon - 1, 1, -1):
        newC = np.empty(G + 1, dtype=np.float64)
        newC[0] = 0.0
        sp = np.int64(0)
        stack[0, 0] = 1
        stack[0, 1] = G
        stack[0, 2] = 1
        stack[0, 3] = G
        sp = 1
        while sp > 0:
            sp -= 1
            jl = stack[sp, 0]
            jh = stack[sp, 1]
            il = stack[sp, 2]
            ih = stack[sp, 3]
            if jl > jh:
                continue
            jm = (jl + jh) >> 1
            xj = delta * jm
            # candidates above the support slope have infinite cost
            cap = top * jm
            ihi = ih
            if ihi > cap:
                ihi = cap
            gbest = math.inf
            gi = il
            for i in range(il, ihi + 1):
                rate = legendre_kernel(probs, delta * i, xj)[0]
                c = C[i] + rate
                if c < gbest:
                    gbest = c
                    gi = i
            absorb = -xj * logp0
            if absorb < gbest:
                newC[jm] = absorb
                argtab[n, jm] = 0
            else:
                newC[jm] = gbest
                argtab[n, jm] = gi
            if sp + 2 <= 254:
                stack[sp, 0] = jl
                stack[sp, 1] = jm - 1
                stack[sp, 2] = il
                stack[sp, 3] = gi
                sp += 1
                stack[sp, 0] = jm + 1
                stack[sp, 1] = jh
                stack[sp, 2] = gi
                stack[sp, 3] = ih
                sp += 1
        for i in range(G + 1):
            C[i] = newC[i]

    # first step from the exact state 1 (not a grid node in general)
    best = -logp0
    bi = np.int64(0)
    for i in range(1, G + 1):
        rate = legendre_kernel(probs, delta * i, 1.0)[0]
        c = C[i] + rate
        if c < best:
            best = c
            bi = i

    u = np.zeros(horizon + 1, dtype=np.float64)
    u[0] = 1.0
    cur = bi
    u[1] = delta * cur
    for n in range(2, horizon):
        if cur > 0:
            cur = argtab[n, cur]
        u[n] = delta * cur
    # u[horizon] stays 0: the boundary level is forced extinction
    return best, u


def gw_step(st, probs, x):
    """One branching generation: total offspring of x parents, sampled as a
    multinomial over the support via a binomial chain, O(L) draws."""
    top = probs.shape[0] - 1
    remaining = x
    denom = 1.0
    total = np.int64(0)
    for l in range(top):
        if remaining <= 0:
            return total
        pl = probs[l]
        c = rbinom(st, remaining, pl / denom)
        total += l * c
        remaining -= c
        denom -= pl
        if denom <= 1e-300:
            break
    return total + top * remaining


def gw_replica(st, probs, K, N, row):
    """Simulate one replica for N generations from K ancestors, filling row
    with X_0..X_N. Returns the absorption generation, -1 if never absorbed."""
    x = K
    row[0] = x
    tau = np.int64(-1)
    for n in range(1, N + 1):
        if x > 0:
            x = gw_step(st, probs, x)
        row[n] = x
        if x == 0 and tau < 0:
            tau = n
    return tau


def gw_mc_kernel(seed, probs, K, N, reps, cond_le):
    """Replica-parallel extinction MC for the branching process.

    Fills fixed-size chunks in parallel, then reduces serially in replica
    order: results are bit-identical for any thread count. Returns
    (n_extinct, n_cond, cond_s1, cond_s2, all_s1, all_s2) where the sums are
    over X_n/K (cond_* restricted to the conditioning event: absorption at
    exactly N, or by N when cond_le).
    """
    Kf = float(K)
    n_ext = np.int64(0)
    n_cond = np.int64(0)
    cond_s1 = np.zeros(N + 1, dtype=np.float64)
    cond_s2 = np.zeros(N + 1, dtype=np.float64)
    all_s1 = np.zeros(N + 1, dtype=np.float64)
    all_s2 = np.zeros(N + 1, dtype=np.float64)
    traj = np.empty((GW_CHUNK, N + 1), dtype=np.int64)
    tau = np.empty(GW_CHUNK, dtype=np.int64)
    done = np.int64(0)
    while done < reps:
        c = reps - done
        if c > GW_CHUNK:
            c = GW_CHUNK
        for i in prange(c):
            st = stream_state(seed, U64(done + i))
            tau[i] = gw_replica(st, probs, K, N, traj[i])
        for i in range(c):
            t = tau[i]
            if t >= 0:
                n_ext += 1
            if (t == N) or (cond_le and t >= 0):
                n_cond += 1
                for n in range(N + 1):
                    v = traj[i, n] / Kf
                    cond_s1[n] += v
                    cond_s2[n] += v * v
            for n in range(N + 1):
                v = traj[i, n] / Kf
                all_s1[n] += v
                all_s2[n] += v * v
        done += c
    return n_ext, n_cond, cond_s1, cond_s2, all_s1, all_s2


def feller_replica_exact(st, x0, n_steps, lam_fac, b, row):
    """One replica of the square-root diffusion via its exact transition:
    per step, X' ~ Gamma(shape Poisson(x*lam_fac), scale b), zero when the
    shape is zero. Fills row with X on the grid; returns the absorption step
    index, -1 if never absorbed."""
    x = x0
    row[0] = x
    for k in range(1, n_steps + 1):
        n = rpois(st, x * lam_fac)
        if n == 0:
            for j in range(k, n_steps + 1):
                row[j] = 0.0
            return np.int64(k)
        x = b * rgamma(st, float(n))
        row[k] = x
    return np.int64(-1)


def feller_replica_euler(st, x0, n_steps, alpha, sig, h, sqh, row):
    """One replica under the full-truncation Euler scheme, absorbed at the
    first nonpositive proposal."""
    x = x0
    row[0] = x
    for k in range(1, n_steps + 1):
        z = rnorm(st)
        x = x + alpha * x * h + sig * math.sqrt(max(x, 0.0)) * sqh * z
        if x <= 0.0:
            for j in range(k, n_steps + 1):
                row[j] = 0.0
            return np.int64(k)
        row[k] = x
    return np.int64(-1)


def feller_mc_kernel(seed, x0, n_steps, use_euler, alpha, sig, h, lam_fac, b, reps):
    """Replica-parallel extinction MC for the diffusion; same chunked
    deterministic reduction as gw_mc_kernel. Sums are over X_t/x0; the
    conditional sums are over replicas absorbed by the horizon."""
    chunk = FELLER_CHUNK_DOUBLES // (n_steps + 1)
    if chunk < 1:
        chunk = 1
    if chunk > reps:
        chunk = reps
    sqh = math.sqrt(h)
    n_ext = np.int64(0)
    cond_s1 = np.zeros(n_steps + 1, dtype=np.float64)
    cond_s2 = np.zeros(n_steps + 1, dtype=np.float64)
    all_s1 = np.zeros(n_steps + 1, dtype=np.float64)
    all_s2 = np.zeros(n_steps + 1, dtype=np.float64)
    traj = np.empty((chunk, n_steps + 1), dtype=np.float64)
    tau = np.empty(chunk, dtype=np.int64)
    done = np.int64(0)
    while done < reps:
        c = reps - done
        if c > chunk:
            c = chunk
        for i in prange(c):
            st = stream_state(seed, U64(done + i))
            if use_euler:
                tau[i] = feller_replica_euler(st, x0, n_steps, alpha, sig, h, sqh, traj[i])
            else:
                tau[i] = feller_replica_exact(st, x0, n_steps, lam_fac, b, traj[i])
        for i in range(c):
            ext = tau[i] >= 0
            if ext:
                n_ext += 1
            for n in range(n_steps + 1):
                v = traj[i, n] / x0
                all_s1[n] += v
                all_s2[n] += v * v
                if ext:
                    cond_s1[n] += v
                    cond_s2[n] += v * v
        done += c
    return n_ext, cond_s1, cond_s2, all_s1, all_s2


KERNELS = (
    "_mulhi",
    "_refill",
    "stream_state",
    "next_u64",
    "next_double",
    "philox_raw",
    "rnorm",
    "rgamma",
    "rbeta",
    "rbinom",
    "rpois",
    "sample_doubles",
    "sample_normals",
    "sample_gammas",
    "sample_binomials",
    "sample_poissons",
    "g_all",
    "_tstar",
    "legendre_kernel",
    "dp_kernel",
    "gw_step",
    "gw_replica",
    "gw_mc_kernel",
    "feller_replica_exact",
    "feller_replica_euler",
    "feller_mc_kernel",
)
