"""Compiled inner loops: tail exponents and the water-filling solver.

A row of tail functions is encoded as one flat float array: ``W`` header
slots per coordinate (kind, r, scale, knot offset, knot count, bounded flag)
followed by the knot tables, each stored as its t values then its N values.
A single array keeps per-call overhead of the compiled helpers low.
"""

import math

import numpy as np
from numba import njit

EXP, POW, GAUSS, TABLE = 0, 1, 2, 3
W = 6

# coordinate domains inside a water-filling subproblem
DOM_QUAD, DOM_TAIL, DOM_WHOLE = 0, 1, 2

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_LOG_SQRT_PI = 0.5 * math.log(math.pi)
_BIG = 1e300


@njit(cache=True)
def _log_erfc(z):
    if z < 20.0:
        return math.log(math.erfc(z))
    z2 = z * z
    return -z2 - math.log(z) - _LOG_SQRT_PI + math.log1p(
        -0.5 / z2 + 0.75 / (z2 * z2) - 1.875 / (z2 * z2 * z2))


@njit(cache=True)
def _gauss_hazard(u):
    # derivative of -log P(|g| >= u)
    z = u * _INV_SQRT2
    if z < 20.0:
        return _SQRT_2_OVER_PI * math.exp(-z * z) / math.erfc(z)
    z2 = z * z
    return _SQRT_2_OVER_PI * z * math.sqrt(math.pi) / (
        1.0 - 0.5 / z2 + 0.75 / (z2 * z2) - 1.875 / (z2 * z2 * z2))


@njit(cache=True)
def tail_value(P, i, t):
    """N_i(t) for t >= 0 (may be +inf for bounded tables)."""
    h = W * i
    u = t / P[h + 2]
    k = int(P[h])
    if k == EXP:
        return u
    if k == POW:
        return u ** P[h + 1]
    if k == GAUSS:
        return -_log_erfc(u * _INV_SQRT2)
    o = int(P[h + 3])
    m = int(P[h + 4])
    last = o + m - 1
    if u >= P[last]:
        if u > P[last] and P[h + 5] != 0.0:
            return np.inf
        slope = (P[last + m] - P[last + m - 1]) / (P[last] - P[last - 1])
        return P[last + m] + slope * (u - P[last])
    j = o
    while P[j + 1] <= u:
        j += 1
    return P[j + m] + (P[j + m + 1] - P[j + m]) / (P[j + 1] - P[j]) * (u - P[j])


@njit(cache=True)
def tail_slope(P, i, t, right):
    """One-sided derivative of N_i at t (right if ``right`` else left)."""
    h = W * i
    s = P[h + 2]
    u = t / s
    k = int(P[h])
    r = P[h + 1]
    if k == EXP:
        return 1.0 / s
    if k == POW:
        if u <= 0.0:
            return (1.0 / s) if r == 1.0 else 0.0
        return r * u ** (r - 1.0) / s
    if k == GAUSS:
        return _gauss_hazard(u) / s
    o = int(P[h + 3])
    m = int(P[h + 4])
    last = o + m - 1
    if u > P[last] or (right and u == P[last]):
        if P[h + 5] != 0.0:
            return np.inf
        return (P[last + m] - P[last + m - 1]) / (P[last] - P[last - 1]) / s
    j = o
    if right:
        while P[j + 1] <= u:
            j += 1
    else:
        while j + 1 < last and P[j + 1] < u:
            j += 1
        if u <= P[o]:
            j = o
    return (P[j + m + 1] - P[j + m]) / (P[j + 1] - P[j]) / s


@njit(cache=True)
def tail_sup(P, i):
    """Right end of the support of N_i (inf unless a bounded table)."""
    h = W * i
    if int(P[h]) == TABLE and P[h + 5] != 0.0:
        return P[int(P[h + 3]) + int(P[h + 4]) - 1] * P[h + 2]
    return np.inf


@njit(cache=True)
def tail_inverse(P, i, y, lo, hi):
    """Smallest t in [lo, hi] with N_i(t) >= y, by bisection (hi may be inf)."""
    if tail_value(P, i, lo) >= y:
        return lo
    if not np.isfinite(hi):
        hi = max(2.0 * lo, 2.0)
        while tail_value(P, i, hi) < y:
            hi *= 2.0
    elif tail_value(P, i, hi) < y:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if tail_value(P, i, mid) >= y:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return hi


@njit(cache=True)
def _slope_root(P, i, s, lo, hi, right):
    # boundary between {slope < s} and {slope >= s} (right) or {slope <= s} (left)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        v = tail_slope(P, i, mid, right)
        if right:
            if v >= s:
                hi = mid
            else:
                lo = mid
        else:
            if v <= s:
                lo = mid
            else:
                hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return hi if right else lo


@njit(cache=True)
def _gauss_slope_inverse(sc, s):
    # hazard H(u) = phi(u)/Q(u) is increasing and convex with H' = H (H - u) and
    # H(u) > u, so Newton started at u = y approaches the root from the right
    y = s * sc
    u1 = 1.0 / sc
    if _gauss_hazard(u1) >= y:
        return 1.0, 1.0
    u = y
    for _ in range(100):
        h = _gauss_hazard(u)
        step = (h - y) / (h * (h - u))
        u_new = max(u - step, u1)
        if u_new >= u or u - u_new <= 1e-15 * u:
            u = min(u, u_new)
            break
        u = u_new
    t = u * sc
    return t, t


@njit(cache=True)
def slope_inverse(P, i, s):
    """Maximizer interval of ``s*t - N_i(t)`` over t >= 1.

    Returns (smallest, largest) maximizer; the largest is inf when the
    objective is unbounded above or flat to infinity.
    """
    h = W * i
    k = int(P[h])
    r = P[h + 1]
    sc = P[h + 2]
    sup = tail_sup(P, i)
    if k == EXP or (k == POW and r == 1.0):
        sl = 1.0 / sc
        if s < sl:
            return 1.0, 1.0
        if s == sl:
            return 1.0, np.inf
        return np.inf, np.inf
    if k == POW:
        t = sc * (s * sc / r) ** (1.0 / (r - 1.0))
        t = max(t, 1.0)
        return t, t
    if k == GAUSS:
        return _gauss_slope_inverse(sc, s)
    # tables: bisection on the one-sided slopes
    small = 1.0
    if tail_slope(P, i, 1.0, True) < s:
        hi = 2.0
        while hi < sup and tail_slope(P, i, hi, True) < s and hi < 1e12:
            hi *= 2.0
        if hi >= sup:
            small = _slope_root(P, i, s, 1.0, sup, True)
        elif hi >= 1e12:
            small = np.inf
        else:
            small = _slope_root(P, i, s, 1.0, hi, True)
    if tail_slope(P, i, 1.0, True) > s:
        return small, small
    hi = 2.0
    while hi < sup and tail_slope(P, i, hi, False) <= s and hi < 1e12:
        hi *= 2.0
    if hi >= sup:
        if tail_slope(P, i, sup, False) <= s:
            return small, sup
        large = _slope_root(P, i, s, 1.0, sup, False)
    elif hi >= 1e12:
        large = np.inf
    else:
        large = _slope_root(P, i, s, 1.0, hi, False)
    return small, max(small, large)


@njit(cache=True)
def _cost(P, i, t, dom):
    if dom == DOM_QUAD or (dom == DOM_WHOLE and t <= 1.0):
        return t * t
    return tail_value(P, i, t)


@njit(cache=True)
def _argmax(P, i, c, lam, dom):
    s = c / lam
    if dom == DOM_QUAD:
        t = min(1.0, 0.5 * s)
        return t, t
    if dom == DOM_WHOLE and s < 2.0:
        t = 0.5 * s
        return t, t
    return slope_inverse(P, i, s)


@njit(cache=True)
def _budget(P, c, dom, lam, tsmall, tlarge):
    ds = 0.0
    dl = 0.0
    for i in range(c.shape[0]):
        a, b = _argmax(P, i, c[i], lam, dom[i])
        tsmall[i] = a
        tlarge[i] = b
        ds += _cost(P, i, a, dom[i])
        dl += _cost(P, i, b, dom[i]) if np.isfinite(b) else np.inf
    return ds, dl


@njit(cache=True)
def _fill_inverse(P, i, dom, y, lo, hi):
    if dom == DOM_QUAD or (dom == DOM_WHOLE and hi <= 1.0):
        return min(math.sqrt(max(y, 0.0)), hi)
    if dom == DOM_WHOLE and lo < 1.0:
        if y <= 1.0:
            return min(math.sqrt(max(y, 0.0)), hi)
        lo = 1.0
    return tail_inverse(P, i, y, lo, hi)


@njit(cache=True)
def solve_branch(P, c, dom, p, t_out):
    """Exact convex water-filling with fixed coordinate domains.

    Returns (primal, dual, lambda, ok). ``t_out`` receives the maximizer.
    """
    n = c.shape[0]
    tsmall = np.empty(n)
    tlarge = np.empty(n)
    n_tail = 0
    n_quad = 0
    cmax = 0.0
    for i in range(n):
        if dom[i] == DOM_TAIL:
            n_tail += 1
        elif dom[i] == DOM_QUAD and c[i] > 0.0:
            n_quad += 1
        cmax = max(cmax, c[i])
    if n_tail > p + 1e-12:
        return -1.0, -1.0, 0.0, False
    if cmax <= 0.0:
        for i in range(n):
            t_out[i] = 1.0 if dom[i] == DOM_TAIL else 0.0
        return 0.0, 0.0, 0.0, True
    if n_tail == 0 and n_quad <= p and np.all(dom == DOM_QUAD):
        # every active coordinate fits at the top of its quadratic piece
        val = 0.0
        for i in range(n):
            t_out[i] = 1.0 if c[i] > 0.0 else 0.0
            val += c[i] * t_out[i]
        return val, val, 0.0, True
    if n_tail >= p - 1e-12:
        val = 0.0
        for i in range(n):
            t_out[i] = 1.0 if dom[i] == DOM_TAIL else 0.0
            val += c[i] * t_out[i]
        return val, val, np.inf, True

    lam_hi = cmax
    ds, dl = _budget(P, c, dom, lam_hi, tsmall, tlarge)
    it = 0
    while ds > p and it < 2000:
        lam_hi *= 2.0
        ds, dl = _budget(P, c, dom, lam_hi, tsmall, tlarge)
        it += 1
    lam_lo = 0.5 * lam_hi
    ds, dl = _budget(P, c, dom, lam_lo, tsmall, tlarge)
    it = 0
    while dl < p and lam_lo > 1e-300:
        lam_hi = lam_lo
        lam_lo *= 0.5
        ds, dl = _budget(P, c, dom, lam_lo, tsmall, tlarge)
        it += 1
    if dl < p:
        # budget cannot be exhausted: every coordinate at its domain maximum
        val = 0.0
        for i in range(n):
            t_out[i] = tlarge[i]
            val += c[i] * tlarge[i]
        return val, val, 0.0, True
    exact = False
    if ds <= p:
        lam_hi = lam_lo
        exact = True
    # Illinois steps on log(lambda) with the excess budget ds - p (geometric
    # bisection while an end is infinite); stop once lam_hi nearly spends the budget
    g_lo = ds - p
    ds_hi, dl_hi = _budget(P, c, dom, lam_hi, tsmall, tlarge)
    g_hi = ds_hi - p
    side = 0
    while not exact:
        if lam_hi - lam_lo <= 1e-16 * lam_hi or g_hi >= -1e-13 * p:
            break
        lam = math.sqrt(lam_lo * lam_hi)
        if np.isfinite(g_lo) and np.isfinite(g_hi):
            frac = g_lo / (g_lo - g_hi)
            x_lo = math.log(lam_lo)
            lam = math.exp(x_lo + frac * (math.log(lam_hi) - x_lo))
        if lam <= lam_lo or lam >= lam_hi:
            lam = math.sqrt(lam_lo * lam_hi)
            if lam <= lam_lo or lam >= lam_hi:
                break
        ds, dl = _budget(P, c, dom, lam, tsmall, tlarge)
        if ds > p:
            lam_lo = lam
            g_lo = ds - p
            if side == -1:
                g_hi *= 0.5
            side = -1
        elif dl < p:
            lam_hi = lam
            g_hi = ds - p
            if side == 1:
                g_lo *= 0.5
            side = 1
        else:
            lam_lo = lam
            lam_hi = lam
            exact = True
    # largest maximizers just below the multiplier bound the slack fill
    ds, dl = _budget(P, c, dom, lam_lo, tsmall, tlarge)
    caps = tlarge.copy()
    ds, dl = _budget(P, c, dom, lam_hi, tsmall, tlarge)
    dual = lam_hi * p
    for i in range(n):
        dual += c[i] * tsmall[i] - lam_hi * _cost(P, i, tsmall[i], dom[i])
        t_out[i] = tsmall[i]
    slack = p - ds
    for i in range(n):
        if slack <= 0.0:
            break
        cap = max(caps[i], tlarge[i])
        if cap > t_out[i] and c[i] > 0.0:
            base = _cost(P, i, t_out[i], dom[i])
            if np.isfinite(cap) and _cost(P, i, cap, dom[i]) - base <= slack:
                slack -= _cost(P, i, cap, dom[i]) - base
                t_out[i] = cap
            else:
                t_new = _fill_inverse(P, i, dom[i], base + slack, t_out[i], cap)
                used = _cost(P, i, t_new, dom[i]) - base
                if used > slack:
                    # bisection returned the upper end; step back inside the budget
                    lo = t_out[i]
                    hi = t_new
                    for _ in range(200):
                        mid = 0.5 * (lo + hi)
                        if mid <= lo or mid >= hi:
                            break
                        if _cost(P, i, mid, dom[i]) - base <= slack:
                            lo = mid
                        else:
                            hi = mid
                    t_new = lo
                    used = _cost(P, i, t_new, dom[i]) - base
                t_out[i] = t_new
                slack -= used
    primal = 0.0
    for i in range(n):
        primal += c[i] * t_out[i]
    return primal, max(dual, primal), lam_hi, True


@njit(cache=True)
def waterfill(P, c, group, gmode, p, t_out):
    """max sum c_i t_i subject to sum Nhat_i(t_i) <= p, t >= 0.

    Coordinates sharing a tail function share a ``group`` id. Per group the
    tail-branch coordinates (t > 1) form a prefix in decreasing c, so the
    nonconvex problem splits into convex branches indexed by prefix lengths.
    ``gmode[g]``: 0 = convex Nhat (no branching), 1 = linear tail (prefix
    length <= 1 suffices), 2 = general kink.

    Returns (value, dual gap of the winning branch, multiplier, branches tried).
    """
    n = c.shape[0]
    G = gmode.shape[0]
    order = np.argsort(-c, kind="mergesort")
    gsize = np.zeros(G, dtype=np.int64)
    for i in range(n):
        gsize[group[i]] += 1
    budget_cap = int(math.floor(p + 1e-12))
    mmax = np.zeros(G, dtype=np.int64)
    for g in range(G):
        if gmode[g] == 1:
            mmax[g] = min(1, gsize[g])
        elif gmode[g] == 2:
            mmax[g] = min(gsize[g], budget_cap)
    m = np.zeros(G, dtype=np.int64)
    dom = np.empty(n, dtype=np.int64)
    t_try = np.empty(n)
    cnt = np.zeros(G, dtype=np.int64)
    best = -1.0
    best_gap = 0.0
    best_lam = 0.0
    tried = 0
    while True:
        total = 0
        for g in range(G):
            total += m[g]
        if total <= budget_cap:
            for g in range(G):
                cnt[g] = 0
            for k in range(n):
                i = order[k]
                g = group[i]
                if gmode[g] == 0:
                    dom[i] = DOM_WHOLE
                elif cnt[g] < m[g]:
                    dom[i] = DOM_TAIL
                    cnt[g] += 1
                else:
                    dom[i] = DOM_QUAD
            primal, dual, lam, ok = solve_branch(P, c, dom, p, t_try)
            tried += 1
            if ok and primal > best * (1.0 + 1e-14) + 1e-300:
                best = primal
                best_gap = dual - primal
                best_lam = lam
                for i in range(n):
                    t_out[i] = t_try[i]
        # odometer
        g = 0
        while g < G:
            if m[g] < mmax[g]:
                m[g] += 1
                break
            m[g] = 0
            g += 1
        if g == G:
            break
    return best, best_gap, best_lam, tried


@njit(cache=True)
def constraint_level(P, norms, rho):
    """sum_i Nhat_i(rho * norms_i)."""
    total = 0.0
    for i in range(norms.shape[0]):
        t = rho * norms[i]
        total += t * t if t <= 1.0 else tail_value(P, i, t)
    return total


@njit(cache=True)
def scale_to_level(P, norms, p):
    """rho > 0 with sum_i Nhat_i(rho * norms_i) = p (largest feasible rho)."""
    nmax = 0.0
    for i in range(norms.shape[0]):
        nmax = max(nmax, norms[i])
    if nmax <= 0.0:
        return 0.0
    lo = 0.0
    hi = 1.0 / nmax
    while constraint_level(P, norms, hi) <= p:
        lo = hi
        hi *= 2.0
        if hi > _BIG:
            return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if constraint_level(P, norms, mid) <= p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo
