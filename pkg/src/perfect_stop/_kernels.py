"""Compiled inner loops: drawdown/forecast crossings and Monte Carlo passes.

Forecasts are passed as ``(kind, coef, table_t, table_v)``:

* ``AFFINE``: psi(t) = coef * (T - t)
* ``SQRT``:   psi(t) = coef * sqrt(T - t)
* ``TABLE``:  psi is the linear interpolant of ``(table_t, table_v)``

On any stretch where the running maximum does not move, the drawdown is
linear in t, so the first crossing of a linear piece solves either a linear
equation (affine / tabulated psi) or a quadratic in w = sqrt(T - t).
"""

import math

import numpy as np
from numba import njit

from .rng import exponential, normal_pair, stream_key, uniform

AFFINE = 0
SQRT = 1
TABLE = 2

NO_CROSSING = -1.0


@njit(cache=True, inline="always")
def psi_eval(kind, coef, T, table_t, table_v, t):
    if kind == AFFINE:
        return coef * (T - t)
    if kind == SQRT:
        r = T - t
        return coef * math.sqrt(r) if r > 0.0 else 0.0
    return np.interp(t, table_t, table_v)


@njit(cache=True)
def _bisect(a, b, d_a, slope, kind, coef, T, table_t, table_v, tol):
    # invariant: g(a) < 0 <= g(b)
    while b - a > tol:
        m = 0.5 * (a + b)
        if d_a + slope * (m - a) - psi_eval(kind, coef, T, table_t, table_v, m) >= 0.0:
            b = m
        else:
            a = m
    return b


@njit(cache=True)
def _linear_psi_root(a, b, d_a, slope, psi_a, psi_b):
    # D and psi both linear on [a, b]; g(a) < 0 <= g(b)
    g_a = d_a - psi_a
    g_b = d_a + slope * (b - a) - psi_b
    t = a + (b - a) * (-g_a) / (g_b - g_a)
    if t < a:
        t = a
    elif t > b:
        t = b
    return t


@njit(cache=True)
def piece_crossing(a, b, d_a, slope, kind, coef, T, table_t, table_v, tol):
    """First t in [a, b] with d_a + slope*(t - a) >= psi(t), or NO_CROSSING."""
    if d_a - psi_eval(kind, coef, T, table_t, table_v, a) >= 0.0:
        return a
    if kind == TABLE:
        # split at the table's interior knots; psi is linear in between
        lo = a
        j = np.searchsorted(table_t, a, side="right")
        while lo < b:
            hi = b
            if j < table_t.size and table_t[j] < b:
                hi = table_t[j]
            d_hi = d_a + slope * (hi - a)
            psi_hi = psi_eval(kind, coef, T, table_t, table_v, hi)
            if d_hi - psi_hi >= 0.0:
                d_lo = d_a + slope * (lo - a)
                psi_lo = psi_eval(kind, coef, T, table_t, table_v, lo)
                return _linear_psi_root(lo, hi, d_lo, slope, psi_lo, psi_hi)
            lo = hi
            j += 1
        return NO_CROSSING
    d_b = d_a + slope * (b - a)
    if d_b - psi_eval(kind, coef, T, table_t, table_v, b) < 0.0:
        # g is convex (linear minus concave), negative at both ends
        return NO_CROSSING
    if kind == AFFINE:
        return _linear_psi_root(a, b, d_a, slope, coef * (T - a), coef * (T - b))
    # SQRT: with w = sqrt(T - t) the crossing solves slope*w^2 + coef*w - r = 0
    r = d_a + slope * (T - a)
    w_a = math.sqrt(T - a)
    w_b = math.sqrt(max(T - b, 0.0))
    best = -1.0
    if slope == 0.0:
        best = r / coef
    else:
        disc = coef * coef + 4.0 * slope * r
        if disc >= 0.0:
            qq = -0.5 * (coef + math.sqrt(disc))
            roots = (qq / slope, -r / qq if qq != 0.0 else -1.0)
            slack = 1e-12 * (1.0 + w_a)
            for w in roots:
                if w_b - slack <= w <= w_a + slack and w > best:
                    best = w
    if best < 0.0:
        return _bisect(a, b, d_a, slope, kind, coef, T, table_t, table_v, tol)
    t = T - best * best
    if t < a:
        t = a
    elif t > b:
        t = b
    return t


@njit(cache=True)
def segment_crossing(t0, x0, t1, x1, m0, kind, coef, T, table_t, table_v, tol):
    """First crossing on the path segment (t0, x0) -> (t1, x1) given running max m0.

    Assumes no crossing at t0 (the caller checked the previous segment).
    """
    if kind != TABLE:
        # drawdown minus psi is convex on each stretch and negative at t0, so a
        # negative value at t1 rules out a crossing on the segment
        m1 = m0 if x1 <= m0 else x1
        if m1 - x1 < psi_eval(kind, coef, T, table_t, table_v, t1):
            return NO_CROSSING
    s = (x1 - x0) / (t1 - t0)
    d0 = m0 - x0
    if s > 0.0 and x1 > m0:
        tb = t0 + d0 / s
        if tb > t1:
            tb = t1
        t = piece_crossing(t0, tb, d0, -s, kind, coef, T, table_t, table_v, tol)
        if t >= 0.0:
            return t
        return piece_crossing(tb, t1, 0.0, 0.0, kind, coef, T, table_t, table_v, tol)
    return piece_crossing(t0, t1, d0, -s, kind, coef, T, table_t, table_v, tol)


@njit(cache=True)
def first_crossing(times, prices, kind, coef, table_t, table_v, tol):
    """Return (stop_time, stop_price, running_max_at_stop) of the perfect rule."""
    T = times[-1]
    m = prices[0]
    for i in range(times.size - 1):
        t0, x0, t1, x1 = times[i], prices[i], times[i + 1], prices[i + 1]
        t = segment_crossing(t0, x0, t1, x1, m, kind, coef, T, table_t, table_v, tol)
        if t >= 0.0:
            x = x0 + (x1 - x0) * (t - t0) / (t1 - t0)
            if t == t1:
                x = x1
            return t, x, max(m, x)
        if x1 > m:
            m = x1
    return T, prices[-1], m


# --------------------------------------------------------------------------
# Monte Carlo passes. Rules are encoded as parallel arrays:
#   rule_perfect[r] (bool), rule_u[r] (deterministic time),
#   rule_kind[r], rule_coef[r] (forecast of a perfect rule).
# Per-path state per rule: stop time, stop price, running max at stop.

_EMPTY = np.zeros(0)


@njit(cache=True)
def _may_stop(t1, x1, m0, T, rule_perfect, rule_u, rule_kind, rule_coef, done):
    """Cheap screen: can any pending rule stop on a segment ending at (t1, x1)?

    For affine and square-root forecasts drawdown minus psi is convex on a
    segment, so a negative value at its end rules out a crossing inside.
    """
    dd = (x1 if x1 > m0 else m0) - x1
    for r in range(rule_u.size):
        if done[r]:
            continue
        if rule_perfect[r]:
            c = rule_coef[r]
            psi = c * (T - t1) if rule_kind[r] == AFFINE else c * math.sqrt(max(T - t1, 0.0))
            if dd >= psi:
                return True
        elif rule_u[r] <= t1:
            return True
    return False


@njit(cache=True, inline="always")
def _visit_segment(t0, x0, t1, x1, m0, T, rule_perfect, rule_u, rule_kind, rule_coef,
                   done, st, sx, sm, tol, empty):
    for r in range(rule_u.size):
        if done[r]:
            continue
        if rule_perfect[r]:
            t = segment_crossing(t0, x0, t1, x1, m0, rule_kind[r], rule_coef[r], T,
                                 empty, empty, tol)
            if t < 0.0:
                continue
        else:
            t = rule_u[r]
            if t > t1:
                continue
        x = x1 if t == t1 else x0 + (x1 - x0) * (t - t0) / (t1 - t0)
        done[r] = True
        st[r] = t
        sx[r] = x
        sm[r] = max(m0, x)


@njit(cache=True)
def _finish_path(i, m_T, T, st, sx, sm, est_kind, est_coef, out_real, out_est, out_time):
    for r in range(st.size):
        out_real[r, i] = m_T - sx[r]
        psi = psi_eval(est_kind, est_coef, T, _EMPTY, _EMPTY, st[r])
        dd = sm[r] - sx[r]
        out_est[r, i] = dd if dd > psi else psi
        out_time[r, i] = st[r]


@njit(cache=True)
def poisson_knots(x0, T, lam, p, L1, L2, key):
    """Knots of one slope-switching path: slope then holding time, per segment."""
    times = [0.0]
    prices = [x0]
    t = 0.0
    x = x0
    k = 0
    while t < T:
        slope = L2 if uniform(key, k) < p else -L1
        dur = exponential(key, k + 1, lam)
        k += 2
        t1 = t + dur
        if t1 >= T:
            t1 = T
        if t1 == t:
            # holding time below the spacing of doubles at t
            continue
        x = x + slope * (t1 - t)
        t = t1
        times.append(t)
        prices.append(x)
    return np.array(times), np.array(prices)


@njit(cache=True, nogil=True)
def poisson_pass(seed, start, stop, x0, T, lam, p, L1, L2, rule_perfect, rule_u, rule_kind,
                 rule_coef, est_kind, est_coef, tol):
    n = stop - start
    n_rules = rule_u.size
    out_real = np.empty((n_rules, n))
    out_est = np.empty((n_rules, n))
    out_time = np.empty((n_rules, n))
    done = np.zeros(n_rules, dtype=np.bool_)
    st = np.empty(n_rules)
    sx = np.empty(n_rules)
    sm = np.empty(n_rules)
    empty = np.zeros(0)
    for i in range(n):
        key = stream_key(seed, start + i)
        done[:] = False
        t = 0.0
        x = x0
        m = x0
        k = 0
        while t < T:
            slope = L2 if uniform(key, k) < p else -L1
            dur = exponential(key, k + 1, lam)
            k += 2
            t1 = t + dur
            if t1 >= T:
                t1 = T
            if t1 == t:
                continue
            x1 = x + slope * (t1 - t)
            if _may_stop(t1, x1, m, T, rule_perfect, rule_u, rule_kind, rule_coef, done):
                _visit_segment(t, x, t1, x1, m, T, rule_perfect, rule_u, rule_kind, rule_coef,
                               done, st, sx, sm, tol, empty)
            if x1 > m:
                m = x1
            t = t1
            x = x1
        _finish_path(i, m, T, st, sx, sm, est_kind, est_coef, out_real, out_est, out_time)
    return out_real, out_est, out_time


@njit(cache=True)
def bachelier_knots(x0, sigma, T, n_steps, key):
    times = np.empty(n_steps + 1)
    prices = np.empty(n_steps + 1)
    dt = T / n_steps
    scale = sigma * math.sqrt(dt)
    times[0] = 0.0
    prices[0] = x0
    z2 = 0.0
    for j in range(n_steps):
        if j % 2 == 0:
            z, z2 = normal_pair(key, j)
        else:
            z = z2
        times[j + 1] = T if j == n_steps - 1 else (j + 1) * dt
        prices[j + 1] = prices[j] + scale * z
    return times, prices


@njit(cache=True, nogil=True)
def bachelier_pass(seed, start, stop, x0, sigma, T, n_steps, rule_perfect, rule_u, rule_kind,
                   rule_coef, est_kind, est_coef, tol):
    n = stop - start
    n_rules = rule_u.size
    out_real = np.empty((n_rules, n))
    out_est = np.empty((n_rules, n))
    out_time = np.empty((n_rules, n))
    done = np.zeros(n_rules, dtype=np.bool_)
    st = np.empty(n_rules)
    sx = np.empty(n_rules)
    sm = np.empty(n_rules)
    empty = np.zeros(0)
    dt = T / n_steps
    scale = sigma * math.sqrt(dt)
    for i in range(n):
        key = stream_key(seed, start + i)
        done[:] = False
        x = x0
        m = x0
        z2 = 0.0
        for j in range(n_steps):
            if j % 2 == 0:
                z, z2 = normal_pair(key, j)
            else:
                z = z2
            t0 = j * dt
            t1 = T if j == n_steps - 1 else (j + 1) * dt
            x1 = x + scale * z
            if _may_stop(t1, x1, m, T, rule_perfect, rule_u, rule_kind, rule_coef, done):
                _visit_segment(t0, x, t1, x1, m, T, rule_perfect, rule_u, rule_kind, rule_coef,
                               done, st, sx, sm, tol, empty)
            if x1 > m:
                m = x1
            x = x1
        _finish_path(i, m, T, st, sx, sm, est_kind, est_coef, out_real, out_est, out_time)
    return out_real, out_est, out_time


@njit(cache=True, nogil=True)
def bachelier_future_max(seed, start, stop, sigma, T, n_steps, t_index):
    """Per path: max_{s >= t} X_s - X_t on the grid, with t = t_index * dt."""
    n = stop - start
    out = np.empty(n)
    scale = sigma * math.sqrt(T / n_steps)
    for i in range(n):
        key = stream_key(seed, start + i)
        x = 0.0
        x_t = 0.0
        best = 0.0
        z2 = 0.0
        for j in range(n_steps):
            if j % 2 == 0:
                z, z2 = normal_pair(key, j)
            else:
                z = z2
            x += scale * z
            if j + 1 > t_index and x - x_t > best:
                best = x - x_t
            if j + 1 == t_index:
                x_t = x
                best = 0.0
        out[i] = best
    return out
