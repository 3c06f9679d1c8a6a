"""Compiled inner loops shared by the online and offline detectors.

Everything here is numerically identical to the pure-Python formulas in
``seqstats`` and ``costs``; the compiled versions exist only so that the
per-observation dynamic-programme scan stays cheap at large maximum segment
lengths.  ``fastmath`` stays off: reordering float arithmetic would break the
exact agreement between the online engine, the offline solver and the tests.

Label codes: 0 typical, 1 point anomaly, 2 collective anomaly (must match
``detector.Label``).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Scalar-parameter vector layout for the programme kernels.
P_MV = 0       # 1.0 for the mean-variance model
P_GAMMA = 1    # point-cost regulariser
P_BETA_O = 2   # point-anomaly penalty
P_V_FLOOR = 3  # within-segment variance floor
P_RENORM = 4   # renormalisation threshold
N_PARAMS = 5

# Sequential-baseline state vector: three quantile trackers of
# (alpha, xi, d, d0, f_hat, i) followed by mu, sigma, crossed count.
B_MU = 18
B_SIGMA = 19
B_CROSSED = 20
N_BASELINE = 21


@njit(cache=True)
def _sa_update_one(xi, d, d0, f_hat, i, alpha, x):
    """One quantile-tracker update; ``i`` is the pre-update counter as float."""
    xi = xi - (d / (i + 1.0)) * ((1.0 if x <= xi else 0.0) - alpha)
    ind = 1.0 if abs(xi - x) <= 1.0 / math.sqrt(i + 1.0) else 0.0
    f_hat = (i * f_hat + (math.sqrt(i + 1.0) / 2.0) * ind) / (i + 1.0)
    clamp = d0 * (i + 1.0) ** 0.25
    if f_hat > 0.0:
        inv = 1.0 / f_hat
        d = inv if inv < clamp else clamp
    else:
        d = clamp
    return xi, d, f_hat


@njit(cache=True)
def sa_quantile_updates(xi, d, f_hat, i, d0, alpha, xs):
    """Run the quantile-tracker update once per element of ``xs``."""
    fi = float(i)
    for n in range(xs.shape[0]):
        xi, d, f_hat = _sa_update_one(xi, d, d0, f_hat, fi, alpha, xs[n])
        fi += 1.0
    return xi, d, f_hat, int(fi)


@njit(cache=True)
def _baseline_step(bl, x):
    """Update the packed sequential baseline with one raw observation."""
    for q in range(3):
        o = 6 * q
        xi, d, f_hat = _sa_update_one(
            bl[o + 1], bl[o + 2], bl[o + 3], bl[o + 4], bl[o + 5], bl[o], x
        )
        bl[o + 1] = xi
        bl[o + 2] = d
        bl[o + 4] = f_hat
        bl[o + 5] += 1.0
    bl[B_MU] = bl[7]  # median tracker's xi
    iqr = bl[13] - bl[1]
    if iqr > 0.0:
        bl[B_SIGMA] = iqr / (2.0 * 0.674489750196)
    else:
        bl[B_CROSSED] += 1.0


@njit(cache=True)
def scan_collective(
    cost, s1, s2, cap, t, lo, hi, s1_t, s2_t,
    mean_variance, v_floor, l, beta_by_len,
):
    """Best collective-anomaly candidate ending at time ``t``.

    Evaluates ``C(k) + segment_cost((k, t]) + beta_C(t - k)`` for
    ``k = hi .. lo`` using prefix-sum differences; ``beta_by_len[a - l]``
    holds the collective penalty for segment length ``a``.  Buffers are
    addressed modulo ``cap``, so a ring buffer (online) and a flat array with
    ``cap > t`` (offline) share this code path.  Iteration is descending with
    a strict comparison, so cost ties resolve to the largest ``k``
    (shortest segment).

    Returns ``(best_candidate_cost, best_k)``; ``(inf, -1)`` if the range is
    empty.
    """
    best = np.inf
    best_k = -1
    j = hi % cap
    if mean_variance:
        for k in range(hi, lo - 1, -1):
            a = t - k
            seg_sum = s1_t - s1[j]
            v = (s2_t - s2[j] - seg_sum * seg_sum / a) / a
            if v < v_floor:
                v = v_floor
            cand = cost[j] + a * (math.log(v) + 1.0) + beta_by_len[a - l]
            if cand < best:
                best = cand
                best_k = k
            j -= 1
            if j < 0:
                j = cap - 1
    else:
        for k in range(hi, lo - 1, -1):
            a = t - k
            seg_sum = s1_t - s1[j]
            cand = (
                cost[j]
                + (s2_t - s2[j] - seg_sum * seg_sum / a)
                + beta_by_len[a - l]
            )
            if cand < best:
                best = cand
                best_k = k
            j -= 1
            if j < 0:
                j = cap - 1
    return best, best_k


@njit(cache=True)
def dp_step(cost, s1, s2, case, start, offset, cap, l, m, params, beta_by_len, t_prev, z):
    """One programme step on a standardised value.

    Advances the ring buffers to time ``t = t_prev + 1`` and returns
    ``(case, k, seg_mean, seg_var)`` where ``k`` is the collective start
    index (-1 otherwise).  Ties resolve typical over point over collective,
    then shortest segment.  Window costs renormalise (into ``offset[0]``)
    once the optimum exceeds the configured threshold.
    """
    t = t_prev + 1
    prev = (t - 1) % cap
    c_prev = cost[prev]
    s1_t = s1[prev] + z
    s2_t = s2[prev] + z * z
    c1 = c_prev + z * z
    if params[P_MV] > 0.5:
        arg = params[P_GAMMA] + z * z
        if arg <= 0.0:
            arg = 1e-12
        c2 = c_prev + 1.0 + math.log(arg) + params[P_BETA_O]
    else:
        c2 = c_prev + params[P_BETA_O]
    lo = t - m
    if lo < 0:
        lo = 0
    hi = t - l
    if hi >= lo:
        c3, k3 = scan_collective(
            cost, s1, s2, cap, t, lo, hi, s1_t, s2_t,
            params[P_MV] > 0.5, params[P_V_FLOOR], l, beta_by_len,
        )
    else:
        c3, k3 = np.inf, -1
    seg_mean = 0.0
    seg_var = 0.0
    if c1 <= c2 and c1 <= c3:
        case_t, c_min, k = 0, c1, -1
    elif c2 <= c3:
        case_t, c_min, k = 1, c2, -1
    else:
        case_t, c_min, k = 2, c3, k3
        a = t - k3
        seg_sum = s1_t - s1[k3 % cap]
        seg_mean = seg_sum / a
        seg_var = (s2_t - s2[k3 % cap] - seg_sum * seg_mean) / a
    j = t % cap
    cost[j] = c_min
    s1[j] = s1_t
    s2[j] = s2_t
    case[j] = case_t
    start[j] = k
    if c_min > params[P_RENORM]:
        n_valid = cap if t >= cap - 1 else t + 1
        w_min = cost[0]
        for idx in range(1, n_valid):
            if cost[idx] < w_min:
                w_min = cost[idx]
        for idx in range(n_valid):
            cost[idx] -= w_min
        offset[0] += w_min
    return case_t, k, seg_mean, seg_var


@njit(cache=True)
def dp_run(
    cost, s1, s2, case, start, offset, cap, l, m, params, beta_by_len,
    t_prev, xs, mu0, sigma0, baseline,
    out_case, out_k, out_mean, out_var, stop_on_alarm,
):
    """Process a batch of raw observations.

    With ``baseline.size == 0`` values standardise against the fixed
    ``(mu0, sigma0)``; otherwise the packed sequential baseline is updated
    first and supplies the standardisation.  Per-step decisions land in the
    ``out_*`` arrays.  With ``stop_on_alarm`` the loop exits at the first
    non-typical label.  Returns the index of the last processed element
    (-1 if none), which is short of ``xs.size - 1`` only when stopping early.
    """
    sequential = baseline.size > 0
    last = -1
    for n in range(xs.shape[0]):
        x = xs[n]
        if sequential:
            _baseline_step(baseline, x)
            z = (x - baseline[B_MU]) / baseline[B_SIGMA]
        else:
            z = (x - mu0) / sigma0
        case_t, k, seg_mean, seg_var = dp_step(
            cost, s1, s2, case, start, offset, cap, l, m, params, beta_by_len,
            t_prev + n, z,
        )
        out_case[n] = case_t
        out_k[n] = k
        out_mean[n] = seg_mean
        out_var[n] = seg_var
        last = n
        if stop_on_alarm and case_t != 0:
            break
    return last
