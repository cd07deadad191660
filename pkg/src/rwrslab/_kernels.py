"""Compiled kernels for the hot simulation paths.

Everything here is deliberately low-level: walks consume exactly one rng
word per step and sceneries one word per site, so replica streams are
reproducible independent of how work is laid out across shards.  All
reductions that leave a kernel are per-replica values or plain counts;
floating-point aggregation happens on the Python side in a fixed order.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_HALF = math.log(0.5)

FAM_SYMMETRIC = 0
FAM_CENTERED = 1
_U_FLOOR = 1e-300


@njit(cache=True, inline="always")
def scenery_quantile(fam, q, b, shift, u):
    """Upper-quantile transform: u uniform in (0,1) -> exact scenery draw."""
    if fam == FAM_SYMMETRIC:
        if u <= 0.5:
            return b * (-np.log(2.0 * u)) ** (1.0 / q)
        return -b * (-np.log(2.0 * (1.0 - u))) ** (1.0 / q)
    return b * (-np.log(u)) ** (1.0 / q) - shift


@njit(cache=True, inline="always")
def scenery_log_tail(fam, q, b, shift, t):
    """log P(Y > t), exact, safe for arbitrarily deep tails."""
    if fam == FAM_SYMMETRIC:
        e = (abs(t) / b) ** q
        if t >= 0.0:
            return LOG_HALF - e
        return np.log1p(-0.5 * np.exp(-e))
    z = t + shift
    if z <= 0.0:
        return 0.0
    return -((z / b) ** q)


@njit(cache=True, inline="always")
def _draw_u(rng):
    u = rng.random()
    if u < _U_FLOOR:
        u = _U_FLOOR
    return u


@njit(cache=True, inline="always")
def _step(rng, d):
    # one rng word per step: direction index in [0, 2d)
    k = int(rng.random() * 2 * d)
    if k >= 2 * d:
        k = 2 * d - 1
    return k


# ---------------------------------------------------------------------------
# walk kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def walk_site_codes(rng, d, n, codes):
    """Simulate n occupation epochs (S_0 .. S_{n-1}) of the simple walk.

    Fills ``codes[0:n]`` with packed lattice coordinates (base 2n+1 per
    axis, x-major), so sorting codes sorts sites lexicographically.
    """
    base = 2 * n + 1
    x = 0
    y = 0
    z = 0
    w = 0
    for k in range(n):
        code = x + n
        if d >= 2:
            code = code * base + (y + n)
        if d >= 3:
            code = code * base + (z + n)
        if d >= 4:
            code = code * base + (w + n)
        codes[k] = code
        if k == n - 1:
            break
        s = _step(rng, d)
        axis = s >> 1
        delta = 1 if (s & 1) == 1 else -1
        if axis == 0:
            x += delta
        elif axis == 1:
            y += delta
        elif axis == 2:
            z += delta
        else:
            w += delta


@njit(cache=True)
def ell0_batch(rng, d, n, reps, out):
    """Local time at the origin after n epochs, for `reps` replicas."""
    for r in range(reps):
        x = 0
        y = 0
        z = 0
        w = 0
        count = 1  # S_0 = 0
        for k in range(n - 1):
            s = _step(rng, d)
            axis = s >> 1
            delta = 1 if (s & 1) == 1 else -1
            if axis == 0:
                x += delta
            elif axis == 1:
                y += delta
            elif axis == 2:
                z += delta
            else:
                w += delta
            if x == 0 and y == 0 and z == 0 and w == 0:
                count += 1
        out[r] = count


@njit(cache=True)
def first_return_batch(rng, d, m, reps, out):
    """First return time to the origin, censored at horizon m.

    out[r] = T_1 if T_1 <= m else -1.
    """
    for r in range(reps):
        x = 0
        y = 0
        z = 0
        w = 0
        hit = -1
        for k in range(1, m + 1):
            s = _step(rng, d)
            axis = s >> 1
            delta = 1 if (s & 1) == 1 else -1
            if axis == 0:
                x += delta
            elif axis == 1:
                y += delta
            elif axis == 2:
                z += delta
            else:
                w += delta
            if x == 0 and y == 0 and z == 0 and w == 0:
                hit = k
                break
        out[r] = hit


@njit(cache=True)
def return_times_batch(rng, d, m, max_returns, reps, out):
    """Successive return times to 0 up to horizon m, -1 padded."""
    for r in range(reps):
        x = 0
        y = 0
        z = 0
        w = 0
        found = 0
        for k in range(1, m + 1):
            s = _step(rng, d)
            axis = s >> 1
            delta = 1 if (s & 1) == 1 else -1
            if axis == 0:
                x += delta
            elif axis == 1:
                y += delta
            elif axis == 2:
                z += delta
            else:
                w += delta
            if x == 0 and y == 0 and z == 0 and w == 0:
                out[r, found] = k
                found += 1
                if found == max_returns:
                    break
        for j in range(found, max_returns):
            out[r, j] = -1


# ---------------------------------------------------------------------------
# RWRS estimator kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def zn_replicas(rng, d, n, reps, fam, q, b, shift, level,
                codes, log_cond, naive_hit):
    """One walk + one scenery per replica; both estimators from shared draws.

    For each replica the walk is simulated, sites are sorted (ties for the
    maximal local time resolve to the lexicographically smallest site), the
    scenery is drawn at every visited site except the argmax z*, and

      log_cond[r]  = log P(Y ell(z*) > level - sum_{z != z*} Y_z ell(z) | ...)
      naive_hit[r] = 1 if the fully-drawn Z_n exceeds level else 0

    The conditional value is the exact tail of the remaining single site, so
    averaging exp(log_cond) is unbiased for P(Z_n > level).
    """
    for r in range(reps):
        walk_site_codes(rng, d, n, codes)
        codes[:n].sort()
        # locate argmax local time (first max in sorted order = lex smallest)
        best_len = 0
        best_start = 0
        i = 0
        while i < n:
            j = i + 1
            while j < n and codes[j] == codes[i]:
                j += 1
            if j - i > best_len:
                best_len = j - i
                best_start = i
            i = j
        rest = 0.0
        i = 0
        while i < n:
            j = i + 1
            while j < n and codes[j] == codes[i]:
                j += 1
            if i != best_start:
                y = scenery_quantile(fam, q, b, shift, _draw_u(rng))
                rest += (j - i) * y
            i = j
        resid = (level - rest) / best_len
        log_cond[r] = scenery_log_tail(fam, q, b, shift, resid)
        ystar = scenery_quantile(fam, q, b, shift, _draw_u(rng))
        naive_hit[r] = 1 if rest + best_len * ystar > level else 0


@njit(cache=True)
def weighted_sum_replicas(rng, weights, istar, level, fam, q, b, shift,
                          reps, log_cond):
    """Conditional-MC values for P(sum_i l_i Y_i > level).

    Conditions on every summand except ``istar`` (the max-weight index) and
    evaluates the exact tail of the remaining one.
    """
    r_terms = weights.shape[0]
    lmax = weights[istar]
    for rep in range(reps):
        rest = 0.0
        for i in range(r_terms):
            if i == istar:
                continue
            y = scenery_quantile(fam, q, b, shift, _draw_u(rng))
            rest += weights[i] * y
        log_cond[rep] = scenery_log_tail(fam, q, b, shift,
                                         (level - rest) / lmax)


@njit(cache=True)
def ak_weighted_sum_replicas(rng, weights, level, fam, q, b, shift,
                             reps, log_vals):
    """Conditional-mixture values for P(sum_i l_i Y_i > level).

    Decomposes the event over which summand is the largest: each replica
    draws the full scenery once and, for every index i, evaluates the exact
    conditional probability that summand i both exceeds the others and lifts
    the sum over the level, reusing the other draws.  Unbiased, and the
    relative error stays bounded for subexponential tails where plain
    single-site conditioning degenerates (flat weight profiles).
    """
    r_terms = weights.shape[0]
    terms = np.empty(r_terms)
    vals = np.empty(r_terms)
    for rep in range(reps):
        total = 0.0
        m1 = -np.inf
        m2 = -np.inf
        arg1 = -1
        for i in range(r_terms):
            y = scenery_quantile(fam, q, b, shift, _draw_u(rng))
            v = weights[i] * y
            vals[i] = v
            total += v
            if v > m1:
                m2 = m1
                m1 = v
                arg1 = i
            elif v > m2:
                m2 = v
        peak = -np.inf
        for i in range(r_terms):
            other_max = m2 if i == arg1 else m1
            thresh = level - (total - vals[i])
            if other_max > thresh:
                thresh = other_max
            terms[i] = scenery_log_tail(fam, q, b, shift, thresh / weights[i])
            if terms[i] > peak:
                peak = terms[i]
        acc = 0.0
        for i in range(r_terms):
            acc += np.exp(terms[i] - peak)
        log_vals[rep] = peak + np.log(acc)


@njit(cache=True)
def gaussian_sum_replicas(rng, n_terms, level, reps, log_cond):
    """Same conditional scheme with standard normal summands (control run)."""
    for rep in range(reps):
        rest = 0.0
        for i in range(n_terms - 1):
            rest += rng.standard_normal()
        x = level - rest
        # log of the standard normal upper tail; asymptotic form once erfc
        # would underflow
        if x < 30.0:
            log_cond[rep] = np.log(0.5 * math.erfc(x / math.sqrt(2.0)))
        else:
            log_cond[rep] = (-0.5 * x * x - np.log(x)
                             - 0.5 * np.log(2.0 * np.pi))
    return 0


@njit(cache=True)
def excursion_indicator_batch(rng, cum_f, total_mass, horizon, a, reps):
    """Count replicas whose a-th return to 0 happens by time `horizon`.

    ``cum_f`` is the cumulative first-return law on even times 2,4,...,2K.
    Valid whenever horizon <= 2K: a uniform beyond ``total_mass`` means the
    excursion exceeds 2K, which already overshoots the horizon.
    """
    kmax = cum_f.shape[0]
    hits = 0
    for rep in range(reps):
        t = 0
        ok = True
        for i in range(a):
            u = rng.random()
            if u >= total_mass:
                ok = False
                break
            k = np.searchsorted(cum_f, u, side="right") + 1
            if k > kmax:
                k = kmax
            t += 2 * k
            if t > horizon:
                ok = False
                break
        if ok:
            hits += 1
    return hits


@njit(cache=True)
def excursion_ell0_batch(rng, cum_f, total_mass, horizon, cap, reps, out):
    """Sample ell_n(0) (capped) through the excursion representation."""
    for rep in range(reps):
        t = 0
        count = 1
        while count < cap:
            u = rng.random()
            if u >= total_mass:
                break
            k = np.searchsorted(cum_f, u, side="right") + 1
            t += 2 * k
            if t > horizon:
                break
            count += 1
        out[rep] = count


# ---------------------------------------------------------------------------
# exact-arithmetic helpers (oracle module)
# ---------------------------------------------------------------------------

@njit(cache=True)
def renewal_first_return(u):
    """First-return law from the return law via u = 1 + f * u.

    u[k] = P(S_{2k} = 0) for k = 0..K (u[0] = 1); returns f with
    f[k] = P(T_1 = 2k), f[0] = 0.
    """
    kmax = u.shape[0] - 1
    f = np.zeros(kmax + 1)
    for k in range(1, kmax + 1):
        acc = u[k]
        for i in range(1, k):
            acc -= f[i] * u[k - i]
        f[k] = acc
    return f


@njit(cache=True)
def convolve_truncated(a, b, nmax):
    """(a * b)[0:nmax+1] by direct accumulation (positive sums stay exact)."""
    out = np.zeros(nmax + 1)
    la = min(a.shape[0], nmax + 1)
    for i in range(la):
        ai = a[i]
        if ai == 0.0:
            continue
        lb = min(b.shape[0], nmax + 1 - i)
        for j in range(lb):
            out[i + j] += ai * b[j]
    return out


@njit(cache=True)
def enumerate_paths_kernel(d, n, counts, occupancy, touched):
    """Exhaustive enumeration of all (2d)^(n-1) step sequences.

    Accumulates path counts into ``counts`` indexed by
    ell0 + 32*(Lmax + 32*range_size); each quantity is <= n <= 20 < 32.
    """
    steps = n - 1
    total = 1
    for _ in range(steps):
        total *= 2 * d
    base = 2 * n + 1
    origin = 0
    for _ in range(d):
        origin = origin * base + n
    digits = np.zeros(steps, dtype=np.int64)
    pos = np.zeros(4, dtype=np.int64)
    for path_id in range(total):
        m = path_id
        for s in range(steps):
            digits[s] = m % (2 * d)
            m //= 2 * d
        for ax in range(4):
            pos[ax] = 0
        ntouched = 0
        occupancy[origin] += 1
        touched[ntouched] = origin
        ntouched += 1
        for s in range(steps):
            axis = digits[s] >> 1
            delta = 1 if (digits[s] & 1) == 1 else -1
            pos[axis] += delta
            code = 0
            for ax in range(d):
                code = code * base + (pos[ax] + n)
            if occupancy[code] == 0:
                touched[ntouched] = code
                ntouched += 1
            occupancy[code] += 1
        ell0 = occupancy[origin]
        lmax = 0
        for i in range(ntouched):
            c = occupancy[touched[i]]
            if c > lmax:
                lmax = c
        counts[ell0 + 32 * (lmax + 32 * ntouched)] += 1
        for i in range(ntouched):
            occupancy[touched[i]] = 0
    return total
