"""Compiled inner loops.

All samplers take a ``numpy.random.Generator`` so that draws are reproducible
from the caller's seed.  Laws are evaluated in floating point through ratio
recurrences; the exact rational versions live in :mod:`uipt.combinatorics`
and the tests pin the two against each other.
"""

import math

import numpy as np
from numba import njit

LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
LN_2PI = math.log(2.0 * math.pi)
SQRT_PI = math.sqrt(math.pi)
ENV_COLS = 8
BUDGET_EXCEEDED = -1

# --------------------------------------------------------------------------
# discrete transition laws


@njit(cache=True)
def sample_step(rng, m):
    """Boundary increment of UIPT peeling.  Returns +1 or -k."""
    if m == 0:
        return 1
    u = rng.random()
    p_up = (2.0 * m + 3.0) / (3.0 * m + 3.0)
    if u < p_up:
        return 1
    u -= p_up
    p = m / (2.0 * (2.0 * m + 1.0))
    k = 1
    while k < m and u >= p:
        u -= p
        p *= (2.0 * k - 1.0) * (m - k) / ((k + 2.0) * (2.0 * m - 2.0 * k + 1.0))
        k += 1
    return -k


@njit(cache=True)
def sample_side(rng):
    """0: the removed arc starts at the cursor; 1: it ends at the far endpoint."""
    return 0 if rng.random() < 0.5 else 1


@njit(cache=True)
def sample_free_peel(rng, m):
    """One peeling step of a free triangulation of the (m+2)-gon.

    Returns 0 for a new vertex, -1 for gluing a 2-gon, or the split index i in
    1..m (third vertex x_i).
    """
    p_new = (2.0 * m + 1.0) / (3.0 * (m + 3.0))
    u = rng.random()
    if u < p_new:
        return 0
    if m == 0:
        return -1
    u -= p_new
    # walk over d = min(i, m+1-i); both sides share the same weight
    q = (m + 2.0) / (4.0 * (2.0 * m - 1.0))
    half = (m + 1) // 2
    d = 1
    while True:
        w = q if 2 * d == m + 1 else 2.0 * q
        if u < w or d >= half:
            break
        u -= w
        q *= (2.0 * d - 1.0) * (m - d + 2.0) / ((d + 2.0) * (2.0 * m - 2.0 * d - 1.0))
        d += 1
    if 2 * d == m + 1 or rng.random() < 0.5:
        return d
    return m + 1 - d


@njit(cache=True)
def sample_marked_peel(rng, m):
    """One peeling step of a free triangulation with a marked internal vertex.

    Returns 1 (new unmarked vertex), 2 (new vertex carrying the mark) or -k for
    a split whose unmarked hole has boundary k+1.
    """
    u = rng.random()
    p = (m + 2.0) * (2.0 * m + 3.0) / (3.0 * (m + 1.0) * (m + 3.0))
    if u < p:
        return 1
    u -= p
    p = 1.0 / ((m + 1.0) * (m + 3.0))
    if u < p or m == 0:
        return 2
    u -= p
    s = m * (m + 2.0) / (2.0 * (m + 1.0) * (2.0 * m + 1.0))
    k = 1
    while k < m and u >= s:
        u -= s
        s *= ((m - k) * (m - k + 2.0) * (2.0 * k - 1.0)
              / ((m - k + 1.0) * (2.0 * m - 2.0 * k + 1.0) * (k + 2.0)))
        k += 1
    return -k


# --------------------------------------------------------------------------
# free size law: stable log pmf


@njit(cache=True)
def _stirlerr(n):
    # log(n!) - log(sqrt(2 pi n) (n/e)^n)
    if n <= 15.0:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - LN_SQRT_2PI
    nn = n * n
    s0 = 1.0 / 12.0
    s1 = 1.0 / 360.0
    s2 = 1.0 / 1260.0
    s3 = 1.0 / 1680.0
    s4 = 1.0 / 1188.0
    if n > 500.0:
        return (s0 - s1 / nn) / n
    if n > 80.0:
        return (s0 - (s1 - s2 / nn) / nn) / n
    if n > 35.0:
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n


@njit(cache=True)
def _bd0(x, mu):
    # x log(x/mu) + mu - x without cancellation
    if abs(x - mu) < 0.1 * (x + mu):
        v = (x - mu) / (x + mu)
        s = (x - mu) * v
        ej = 2.0 * x * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / mu) + mu - x


@njit(cache=True)
def _log_dbinom_third(x, n):
    # log P(Bin(n, 1/3) = x), real arguments, 0 <= x < n
    if x == 0.0:
        return n * math.log(2.0 / 3.0)
    lc = (_stirlerr(n) - _stirlerr(x) - _stirlerr(n - x)
          - _bd0(x, n / 3.0) - _bd0(n - x, 2.0 * n / 3.0))
    lf = LN_2PI + math.log(x) + math.log1p(-x / n)
    return lc - 0.5 * lf


@njit(cache=True)
def log_free_size_pmf(n, m):
    """log P(|T| = n) for the free triangulation of the (m+2)-gon.

    Uses the representation of the size as the total progeny of a forest of
    2m+1 Galton-Watson trees with offspring 0 or 3, which turns the ratio of
    factorials into a binomial probability that can be evaluated stably.
    """
    j = 2.0 * m + 1.0
    big = j + 3.0 * n
    return (math.log(2.0 * (m + 1.0) * (m + 2.0) / 3.0) - math.log(n + m + 1.0)
            + math.log(j) - math.log(big) + _log_dbinom_third(n, big))


@njit(cache=True)
def _free_size_ratio(n, m):
    a = 2.0 * m
    return (4.0 * (a + 3 * n + 3) * (a + 3 * n + 2) * (a + 3 * n + 1)
            / (27.0 * (n + 1) * (a + 2 * n + 4) * (a + 2 * n + 3)))


@njit(cache=True)
def free_size_tail_constant(m):
    # limit of n^{5/2} P(|T| = n)
    return math.sqrt(3.0) * (2 * m + 1) * (m + 1.0) * (m + 2.0) / (9.0 * SQRT_PI)


@njit(cache=True)
def _log_g(x, b):
    return -2.5 * math.log(x) - b / x


@njit(cache=True)
def _log_ratio(x, m, b):
    return log_free_size_pmf(x, m) - min(_log_g(x, b), _log_g(x + 1.0, b))


@njit(cache=True)
def build_envelope(m, row):
    """Rejection envelope for the size law conditioned on size >= 1.

    Piece A is flat on 1..n1-1 at the height of the pmf maximum there; piece B
    is K x^{-5/2} exp(-b/x) on [n1, inf), sampled continuously and floored.
    """
    s = (m + 1.0) ** 2
    b = 0.3 * s
    n1 = max(1.0, math.floor(0.1 * s))
    # mode: first n with ratio <= 1 (the pmf is unimodal)
    lo = 0.0
    hi = 10.0 * s + 10.0
    while _free_size_ratio(lo, m) > 1.0 and hi - lo > 1.0:
        mid = math.floor(0.5 * (lo + hi))
        if _free_size_ratio(mid, m) > 1.0:
            lo = mid
        else:
            hi = mid
    mode = hi if _free_size_ratio(lo, m) > 1.0 else lo
    h1 = 0.0
    if n1 > 1.0:
        h1 = math.exp(log_free_size_pmf(max(1.0, min(n1 - 1.0, mode)), m))
    # K: sup of pmf / envelope over n >= n1 (integers first, then geometric grid)
    best = -np.inf
    for i in range(256):
        v = _log_ratio(n1 + i, m, b)
        if v > best:
            best = v
    x0 = n1 + 256.0
    ngrid = 512
    step = math.log(1e12) / (ngrid - 1)
    bi = 0
    gbest = -np.inf
    for i in range(ngrid):
        v = _log_ratio(math.floor(x0 * math.exp(i * step)), m, b)
        if v > gbest:
            gbest = v
            bi = i
    lo_x = x0 * math.exp(max(0, bi - 1) * step)
    hi_x = x0 * math.exp(min(ngrid - 1, bi + 1) * step)
    for i in range(129):
        v = _log_ratio(math.floor(lo_x + (hi_x - lo_x) * i / 128.0), m, b)
        if v > gbest:
            gbest = v
    best = max(best, gbest)
    big_k = max(math.exp(best), free_size_tail_constant(m)) * 1.02
    c = b / n1
    lower_gamma = 0.5 * SQRT_PI * math.erf(math.sqrt(c)) - math.sqrt(c) * math.exp(-c)
    row[0] = math.exp(log_free_size_pmf(0.0, m))
    row[1] = n1
    row[2] = b
    row[3] = h1
    row[4] = big_k
    row[5] = h1 * (n1 - 1.0)
    row[6] = big_k * b ** -1.5 * lower_gamma
    row[7] = 1.0


@njit(cache=True)
def _propose_tail(rng, n1, b):
    c = b / n1
    if c >= 1.0:
        while True:
            y = rng.standard_gamma(1.5)
            if 0.0 < y <= c:
                return b / y
    while True:
        x = n1 * rng.random() ** (-2.0 / 3.0)
        if rng.random() < math.exp(-b / x):
            return x


@njit(cache=True)
def sample_free_size(rng, m, env):
    """Exact draw of the number of internal vertices of a free (m+2)-gon triangulation."""
    if m < env.shape[0]:
        row = env[m]
        if row[7] == 0.0:
            build_envelope(m, row)
    else:
        row = np.zeros(ENV_COLS)
        build_envelope(m, row)
    if rng.random() < row[0]:
        return 0
    n1 = row[1]
    b = row[2]
    h1 = row[3]
    log_k = math.log(row[4])
    wa = row[5]
    wb = row[6]
    while True:
        if rng.random() * (wa + wb) < wa:
            n = 1.0 + math.floor(rng.random() * (n1 - 1.0))
            lp = log_free_size_pmf(n, m)
            if lp > math.log(h1) + 1e-9:
                raise RuntimeError("free size envelope violated (flat piece)")
            if rng.random() * h1 < math.exp(lp):
                return np.int64(n)
        else:
            x = _propose_tail(rng, n1, b)
            if x >= 4.0e18:
                raise OverflowError("free size beyond int64 range")
            n = math.floor(x)
            lg = log_k + _log_g(x, b)
            lp = log_free_size_pmf(n, m)
            if lp > lg + 1e-9:
                raise RuntimeError("free size envelope violated (tail piece)")
            if rng.random() < math.exp(lp - lg):
                return np.int64(n)


@njit(cache=True)
def sample_free_sizes(rng, m, count, env):
    out = np.empty(count, np.int64)
    for i in range(count):
        out[i] = sample_free_size(rng, m, env)
    return out


@njit(cache=True)
def sample_marked_size(rng, m, env, step_cap):
    """Size of a marked free triangulation, peeled without building it.

    The marked part is peeled with the marked law; detached unmarked holes and
    the final unmarked remainder are drawn from the free size law.  Returns
    (size, steps, censored).  A run stopped at ``step_cap`` has censored = 1
    and reports the size found so far, a lower bound for the true size.
    """
    size = 0
    steps = 0
    while True:
        if steps >= step_cap:
            return size, steps, 1
        code = sample_marked_peel(rng, m)
        steps += 1
        if code == 1:
            size += 1
            m += 1
        elif code == 2:
            # the mark is placed; the rest is a free (m+3)-gon
            return size + 1 + sample_free_size(rng, m + 1, env), steps, 0
        else:
            k = -code
            size += sample_free_size(rng, k - 1, env)
            m -= k


# --------------------------------------------------------------------------
# step-law batches


@njit(cache=True)
def sample_steps(rng, m, count):
    out = np.empty(count, np.int64)
    for i in range(count):
        out[i] = sample_step(rng, m)
    return out


@njit(cache=True)
def sample_steps_shifted(rng, m, count):
    # negative control: tail index shifted by one
    out = np.empty(count, np.int64)
    for i in range(count):
        x = sample_step(rng, m)
        if x < 0 and -x < m:
            x -= 1
        out[i] = x
    return out


# --------------------------------------------------------------------------
# boundary chain


@njit(cache=True)
def run_chain(rng, m0, horizon, checkpoints, targets, absorb, stop_above,
              visit_state, out_m, hits, trace):
    """Run M_{t+1} = M_t + X_t.

    ``out_m[j]`` receives M at step ``checkpoints[j]`` (-1 when the run ended
    earlier).  ``trace`` (possibly empty) receives X_t.  Returns
    (steps run, absorption step or -1, max M, min M, visits to visit_state,
    1 if stopped above the cap).
    """
    m = m0
    mx = m
    mn = m
    visits = 0
    absorbed_at = -1
    above = 0
    nt = targets.shape[0]
    for j in range(nt):
        if targets[j] == m:
            hits[j] = 1
    if m == visit_state:
        visits += 1
    ci = 0
    nc = checkpoints.shape[0]
    while ci < nc and checkpoints[ci] == 0:
        out_m[ci] = m
        ci += 1
    ntrace = trace.shape[0]
    t = 0
    while t < horizon:
        if m == 0 and absorb:
            absorbed_at = t
            break
        if stop_above >= 0 and m > stop_above:
            above = 1
            break
        x = sample_step(rng, m)
        if t < ntrace:
            trace[t] = x
        m += x
        t += 1
        if m > mx:
            mx = m
        if m < mn:
            mn = m
        for j in range(nt):
            if targets[j] == m:
                hits[j] = 1
        if m == visit_state:
            visits += 1
        while ci < nc and checkpoints[ci] == t:
            out_m[ci] = m
            ci += 1
    if absorbed_at < 0 and m == 0 and absorb:
        absorbed_at = t
    while ci < nc:
        out_m[ci] = -1
        ci += 1
    return t, absorbed_at, mx, mn, visits, above


# --------------------------------------------------------------------------
# skeleton growth


@njit(cache=True)
def grow_skeleton(rng, r_max, env, step_cap, layer_t, layer_m, layer_hull,
                  tr_x, tr_y, tr_m, tr_r):
    """Ordered peeling of the UIPT without building the map.

    The frontier is tracked as an old block (current layer, cursor first) and
    a new block (next layer, newest at the far endpoint of the peel edge).
    Returns the number of steps, or BUDGET_EXCEEDED.
    """
    m = 1
    old = 1
    new = 2
    r = 0
    hull = 3
    t = 0
    ntr = tr_x.shape[0]
    while r < r_max:
        if t >= step_cap:
            return BUDGET_EXCEEDED
        x = sample_step(rng, m)
        if x == 1:
            new += 1
            y = 1
        else:
            k = -x
            y = sample_free_size(rng, k - 1, env)
            if sample_side(rng) == 0:
                a = min(k, old)
                old -= a
                new -= k - a
            else:
                a = min(k, new)
                new -= a
                old -= k - a
        m += x
        hull += y
        if t < ntr:
            tr_x[t] = x
            tr_y[t] = y
            tr_m[t] = m
            tr_r[t] = r
        t += 1
        if old == 0:
            layer_t[r] = t
            layer_m[r] = m
            layer_hull[r] = hull
            r += 1
            old = new
            new = 0
    return t


# --------------------------------------------------------------------------
# percolation, reduced chain


@njit(cache=True)
def clamp(b, w):
    if b < 0:
        return 0, b + w
    if w < 0:
        return b + w, 0
    return b, w


@njit(cache=True)
def perc_initial(rng, p, all_black=False):
    # black root plus two independently coloured vertices
    if all_black:
        return 3, 0
    b = 1
    for _ in range(2):
        if rng.random() < p:
            b += 1
    return b, 3 - b


@njit(cache=True)
def run_reduced(rng, p, horizon, trace_b, all_black=False):
    """Reduced percolation chain on (M, B, W).

    Returns (death step or -1, max B).  ``trace_b`` (possibly empty) receives
    B after each step.
    """
    b, w = perc_initial(rng, p, all_black)
    m = 1
    mb = b
    nt = trace_b.shape[0]
    t = 0
    while t < horizon:
        x = sample_step(rng, m)
        if x == 1:
            if rng.random() < p:
                b += 1
            else:
                w += 1
        else:
            if sample_side(rng) == 0:
                b += x
            else:
                w += x
            b, w = clamp(b, w)
        m += x
        t += 1
        if t - 1 < nt:
            trace_b[t - 1] = b
        if b > mb:
            mb = b
        if b == 0:
            return t, mb
    return -1, mb


@njit(cache=True)
def hit_batch(rng, m0, target, replicas, absorb, stop_above, horizon):
    """Per run: 1 hit, 0 missed, 2 censored above ``stop_above``, 3 censored by horizon."""
    out = np.zeros(replicas, np.int8)
    for i in range(replicas):
        m = m0
        t = 0
        res = 3
        while t < horizon:
            if m == target:
                res = 1
                break
            if m == 0 and absorb:
                res = 0
                break
            if m > stop_above >= 0:
                res = 2
                break
            m += sample_step(rng, m)
            t += 1
        if t == horizon and m == target:
            res = 1
        out[i] = res
    return out


@njit(cache=True)
def visits_batch(rng, n, replicas, stop_above, horizon):
    """Visits to ``n`` of the non-absorbed chain started there; -1 marks runs cut by the horizon."""
    out = np.zeros(replicas, np.int64)
    for i in range(replicas):
        m = n
        v = 1
        t = 0
        while m <= stop_above:
            if t >= horizon:
                v = -v
                break
            m += sample_step(rng, m)
            t += 1
            if m == n:
                v += 1
        out[i] = v
    return out
