"""Offline reference detector, exact brute-force oracle, and CUSUM mode.

The offline solver runs the full dynamic programme over a complete series
with a robust whole-series baseline (median and IQR), sharing the
per-step cost/penalty/tie-break code with the online engine.  The
brute-force oracle enumerates every admissible labelling of a short series
and evaluates costs by direct summation; it exists to verify the programme's
minimisation independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import dp_step
from .costs import VARIANCE_FLOOR, beta_table, pack_params
from .detector import (
    COLLECTIVE,
    POINT,
    RENORM_THRESHOLD,
    AnomalyEvent,
    DetectorConfig,
    Label,
)
from .seqstats import PHI_INV_75

BRUTE_FORCE_MAX_LEN = 14
CUSUM_POINT_PENALTY = 1e12


@dataclass(frozen=True)
class OfflineResult:
    """Exact minimiser of the penalised cost over a full series."""

    events: tuple[AnomalyEvent, ...]
    total_cost: float
    baseline_used: tuple[float, float]


def _offline_baseline(x: np.ndarray) -> tuple[float, float]:
    mu = float(np.median(x))
    iqr = float(np.quantile(x, 0.75) - np.quantile(x, 0.25))
    if iqr <= 0.0:
        raise ValueError("constant series: IQR is zero")
    return mu, iqr / (2.0 * PHI_INV_75)


def capa_offline(series, config: DetectorConfig) -> OfflineResult:
    """Minimise the penalised cost over a complete series.

    The baseline comes from ``config.known_baseline`` when given, otherwise
    from the whole-series median and IQR.  ``config.max_seg_len`` bounds the
    collective-anomaly length; pass ``max_seg_len >= len(series)`` for the
    unconstrained programme.  Costs, penalties and tie-breaking are identical
    to the online engine's (the per-step kernel is shared).
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("series must be a non-empty 1-d array")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    if config.known_baseline is not None:
        mu, sigma = config.known_baseline
    else:
        mu, sigma = _offline_baseline(x)
    z = (x - mu) / sigma
    n = z.size
    l, m = config.min_seg_len, config.max_seg_len
    params = pack_params(config.model, config.penalties, RENORM_THRESHOLD)
    betas = beta_table(config.penalties, l, m)

    cap = n + 1  # flat arrays; the kernel indexes modulo cap
    cost = np.zeros(cap, dtype=np.float64)
    s1 = np.zeros(cap, dtype=np.float64)
    s2 = np.zeros(cap, dtype=np.float64)
    case = np.zeros(cap, dtype=np.int8)
    start = np.full(cap, -1, dtype=np.int64)
    offset = np.zeros(1, dtype=np.float64)

    for t in range(1, n + 1):
        dp_step(
            cost, s1, s2, case, start, offset, cap, l, m, params, betas,
            t - 1, z[t - 1],
        )

    events: list[AnomalyEvent] = []
    cur = n
    while cur > 0:
        if case[cur] == Label.TYPICAL:
            cur -= 1
        elif case[cur] == Label.POINT:
            events.append(AnomalyEvent(POINT, cur, cur, cur))
            cur -= 1
        else:
            k = int(start[cur])
            a = cur - k
            seg_sum = s1[cur] - s1[k]
            seg_mean = seg_sum / a
            seg_var = (s2[cur] - s2[k] - seg_sum * seg_mean) / a
            events.append(
                AnomalyEvent(
                    COLLECTIVE, k + 1, cur, cur,
                    seg_mean=seg_mean, seg_var=seg_var,
                )
            )
            cur = k
    events.reverse()
    return OfflineResult(
        events=tuple(events),
        total_cost=float(cost[n]) + float(offset[0]),
        baseline_used=(mu, sigma),
    )


def brute_force_oracle(series, config: DetectorConfig) -> OfflineResult:
    """Exhaustive minimiser over all admissible labellings of a short series.

    Independent of the dynamic programme: every labelling's cost is evaluated
    by direct summation over its blocks.  Ties (within 1e-12) resolve exactly
    as the programme's backtracking would: walking blocks from the end,
    typical beats point beats collective, and shorter collective segments
    beat longer ones.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size > BRUTE_FORCE_MAX_LEN:
        raise ValueError(
            f"series too long for brute force ({x.size} > {BRUTE_FORCE_MAX_LEN})"
        )
    if config.known_baseline is None:
        raise ValueError("brute-force oracle requires a known baseline")
    mu, sigma = config.known_baseline
    z = [(v - mu) / sigma for v in x.tolist()]
    n = len(z)
    l, m = config.min_seg_len, config.max_seg_len
    model, pen = config.model, config.penalties
    mv, gamma = model.is_mean_variance, model.gamma

    def point_block_cost(v: float) -> float:
        if mv:
            arg = gamma + v * v
            if arg <= 0.0:
                arg = 1e-12
            return 1.0 + math.log(arg) + pen.beta_point
        return pen.beta_point

    def segment_block_cost(i: int, j: int) -> float:
        seg = z[i:j]
        a = len(seg)
        mean = math.fsum(seg) / a
        ss = math.fsum((v - mean) ** 2 for v in seg)
        if mv:
            return a * (math.log(max(ss / a, VARIANCE_FLOOR)) + 1.0) + pen.beta_collective(a)
        return ss + pen.beta_collective(a)

    best: list[tuple[float, tuple]] = []
    blocks: list[tuple] = []

    def rec(pos: int, total: float):
        if pos == n:
            best.append((total, tuple(blocks)))
            return
        blocks.append((0, 1))  # typical
        rec(pos + 1, total + z[pos] * z[pos])
        blocks.pop()
        blocks.append((1, 1))  # point anomaly
        rec(pos + 1, total + point_block_cost(z[pos]))
        blocks.pop()
        for a in range(l, min(m, n - pos) + 1):
            blocks.append((2, a))
            rec(pos + a, total + segment_block_cost(pos, pos + a))
            blocks.pop()

    rec(0, 0.0)

    min_cost = min(c for c, _ in best)
    tol = 1e-12 * max(1.0, abs(min_cost))
    ties = [b for c, b in best if c <= min_cost + tol]
    # Backtracking order: compare block descriptors from the end.
    chosen = min(ties, key=lambda b: tuple(reversed(b)))

    events: list[AnomalyEvent] = []
    pos = 1
    for kind, a in chosen:
        if kind == 1:
            events.append(AnomalyEvent(POINT, pos, pos, pos))
        elif kind == 2:
            seg = z[pos - 1 : pos - 1 + a]
            mean = math.fsum(seg) / a
            var = math.fsum((v - mean) ** 2 for v in seg) / a
            events.append(
                AnomalyEvent(
                    COLLECTIVE, pos, pos + a - 1, pos + a - 1,
                    seg_mean=mean, seg_var=var,
                )
            )
        pos += a
    return OfflineResult(
        events=tuple(events), total_cost=min_cost, baseline_used=(mu, sigma)
    )


def cusum_mode(config: DetectorConfig) -> DetectorConfig:
    """Disable point anomalies by overriding their penalty.

    With the point penalty forced to an arbitrarily large value the programme
    only ever fits collective anomalies, which mimics a CUSUM-style detector.
    Inflation continues to apply to the collective penalty only.
    """
    return replace(
        config,
        penalties=config.penalties.with_point_override(CUSUM_POINT_PENALTY),
    )
