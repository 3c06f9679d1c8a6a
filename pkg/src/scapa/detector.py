"""Online detection engine: a bounded-memory penalised-cost programme.

Each incoming observation is standardised (by sequentially estimated or known
baseline parameters), then a finite-horizon dynamic programme decides whether
the stream is best explained by extending the typical regime, flagging a
point anomaly, or closing a collective anomaly of length between the
configured minimum and maximum.  State is O(window): ring buffers hold the
last ``window_len`` optimal costs, standardised prefix sums and per-step
decisions.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterable

import numpy as np

from ._kernels import B_CROSSED, B_MU, B_SIGMA, N_BASELINE, dp_run
from .costs import CostModel, PenaltyScheme, beta_table, pack_params
from .seqstats import Baseline, QuantileState

# Window costs are shifted down once they exceed this; only within-window
# differences matter, so a common shift is exact.
RENORM_THRESHOLD = 1e9

POINT = "point"
COLLECTIVE = "collective"

_EMPTY_BASELINE = np.empty(0, dtype=np.float64)


class Label(IntEnum):
    TYPICAL = 0
    POINT = 1
    COLLECTIVE = 2


@dataclass(frozen=True)
class AnomalyEvent:
    """A classified anomaly.

    ``start``/``end`` are 1-based observation indices (inclusive);
    ``detected_at`` is the index of the step that first emitted the event.
    ``revised`` marks emissions that supersede earlier ones: a collective
    event absorbing previously emitted point anomalies, or an open collective
    event whose end has been extended.
    """

    kind: str
    start: int
    end: int
    detected_at: int
    seg_mean: float | None = None
    seg_var: float | None = None
    revised: bool = False

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def span_key(self):
        return (self.kind, self.start, self.end)


@dataclass(frozen=True)
class StepOutput:
    """Result of processing one observation."""

    t: int
    label: Label
    collective_start: int | None
    new_events: tuple[AnomalyEvent, ...]
    revised: bool


@dataclass(frozen=True)
class DetectionDelay:
    delay: int
    censored: bool


@dataclass(frozen=True)
class DetectorConfig:
    """Static configuration of the online engine.

    ``known_baseline=(mu0, sigma0)`` fixes the standardisation; ``None``
    estimates it sequentially from the burn-in onwards.  ``window_len``
    controls how much history the engine retains (costs, prefix sums and
    decisions); it defaults to ``max_seg_len + 1``, the minimum needed by the
    programme, but can be raised so that ``resolve_window_events`` can
    backtrack further.
    """

    model: CostModel
    penalties: PenaltyScheme
    min_seg_len: int = 2
    max_seg_len: int = 1000
    burn_in_len: int = 1000
    known_baseline: tuple[float, float] | None = None
    window_len: int | None = None

    def __post_init__(self):
        l, m = self.min_seg_len, self.max_seg_len
        if l < self.model.min_collective_len:
            raise ValueError(
                f"min_seg_len must be >= {self.model.min_collective_len} "
                f"for the {self.model.kind} model"
            )
        if self.penalties.collective_mode == "length_dependent" and l < 2:
            raise ValueError("length-dependent penalties need min_seg_len >= 2")
        if m < l:
            raise ValueError("max_seg_len must be >= min_seg_len")
        if self.window_len is not None and self.window_len < m + 1:
            raise ValueError("window_len must be at least max_seg_len + 1")
        if self.known_baseline is not None:
            mu0, sigma0 = self.known_baseline
            if not (math.isfinite(mu0) and math.isfinite(sigma0) and sigma0 > 0):
                raise ValueError("known baseline needs finite mu0 and sigma0 > 0")
        if self.burn_in_len < 0:
            raise ValueError("burn_in_len must be >= 0")

    @property
    def capacity(self) -> int:
        return self.window_len or self.max_seg_len + 1


def _pack_baseline(b: Baseline) -> np.ndarray:
    arr = np.empty(N_BASELINE, dtype=np.float64)
    for qi, q in enumerate((b.q25, b.q50, b.q75)):
        o = 6 * qi
        arr[o : o + 6] = (q.alpha, q.xi, q.d, q.d0, q.f_hat, float(q.i))
    arr[B_MU] = b.mu_hat
    arr[B_SIGMA] = b.sigma_hat
    arr[B_CROSSED] = float(b.crossed_count)
    return arr


def _unpack_baseline(arr: np.ndarray) -> Baseline:
    states = []
    for qi in range(3):
        o = 6 * qi
        states.append(
            QuantileState(
                alpha=float(arr[o]),
                xi=float(arr[o + 1]),
                d=float(arr[o + 2]),
                d0=float(arr[o + 3]),
                f_hat=float(arr[o + 4]),
                i=int(arr[o + 5]),
            )
        )
    return Baseline(
        q25=states[0],
        q50=states[1],
        q75=states[2],
        mu_hat=float(arr[B_MU]),
        sigma_hat=float(arr[B_SIGMA]),
        crossed_count=int(arr[B_CROSSED]),
    )


class OnlineDetector:
    """Streaming detector over a univariate series.

    One instance per stream; ``step``/``run`` calls are strictly sequential.
    The burn-in is allocated to the typical regime: it seeds the baseline
    estimators (sequential mode) and the cumulative typical costs, but emits
    no events.

    Args:
        config: static configuration.
        burn_in: exactly ``config.burn_in_len`` raw values.
    """

    def __init__(self, config: DetectorConfig, burn_in=()):
        burn = np.asarray(burn_in, dtype=np.float64)
        if burn.size != config.burn_in_len:
            raise ValueError(
                f"burn-in length {burn.size} != configured {config.burn_in_len}"
            )
        if config.known_baseline is None and (
            burn.size <= config.min_seg_len or burn.size < 4
        ):
            raise ValueError(
                "sequential baseline needs burn_in_len > min_seg_len and >= 4"
            )
        self.config = config
        self._params = pack_params(config.model, config.penalties, RENORM_THRESHOLD)
        self._beta_by_len = beta_table(
            config.penalties, config.min_seg_len, config.max_seg_len
        )
        self._l = config.min_seg_len
        self._m = config.max_seg_len
        cap = config.capacity
        self._cap = cap
        self._cost = np.zeros(cap, dtype=np.float64)
        self._s1 = np.zeros(cap, dtype=np.float64)
        self._s2 = np.zeros(cap, dtype=np.float64)
        self._case = np.zeros(cap, dtype=np.int8)
        self._start = np.full(cap, -1, dtype=np.int64)
        self._offset = np.zeros(1, dtype=np.float64)
        self.t = 0

        if config.known_baseline is not None:
            self._mu0, self._sigma0 = config.known_baseline
            self._bl = _EMPTY_BASELINE
        else:
            self._mu0 = self._sigma0 = 0.0
            self._bl = _pack_baseline(Baseline.from_burn_in(burn))

        # Scratch buffers reused by step(); run() allocates per batch.
        self._one = np.empty(1, dtype=np.float64)
        self._oc1 = np.empty(1, dtype=np.int8)
        self._ok1 = np.empty(1, dtype=np.int64)
        self._om1 = np.empty(1, dtype=np.float64)
        self._ov1 = np.empty(1, dtype=np.float64)

        # Emission bookkeeping (bounded: pruned to the reachable window).
        self._open_event: AnomalyEvent | None = None
        self._recent_points: deque[int] = deque()

        # Seed cumulative typical costs over the standardised burn-in.
        if self._bl.size:
            mu, sigma = self._bl[B_MU], self._bl[B_SIGMA]
        else:
            mu, sigma = self._mu0, self._sigma0
        c = 0.0
        s1 = 0.0
        s2 = 0.0
        for k in range(1, burn.size + 1):
            z = (burn[k - 1] - mu) / sigma
            c += z * z
            s1 += z
            s2 += z * z
            j = k % cap
            self._cost[j] = c
            self._s1[j] = s1
            self._s2[j] = s2
            self._case[j] = Label.TYPICAL
            self._start[j] = -1
        self.t = burn.size

    @property
    def baseline(self) -> Baseline | None:
        """Current sequential baseline estimate (None with a known baseline)."""
        return _unpack_baseline(self._bl) if self._bl.size else None

    # -- stepping ------------------------------------------------------------

    def _dp_batch(self, values: np.ndarray, outs, stop_on_alarm: bool) -> int:
        out_case, out_k, out_mean, out_var = outs
        last = dp_run(
            self._cost, self._s1, self._s2, self._case, self._start,
            self._offset, self._cap, self._l, self._m, self._params,
            self._beta_by_len, self.t, values, self._mu0, self._sigma0, self._bl,
            out_case, out_k, out_mean, out_var, stop_on_alarm,
        )
        self.t += last + 1
        return last

    def step(self, x_raw: float) -> StepOutput:
        """Process one raw observation and return the labelling decision.

        Raises ValueError on non-finite input, leaving the state unchanged.
        """
        x = float(x_raw)
        if not math.isfinite(x):
            raise ValueError(f"non-finite observation at t={self.t + 1}: {x_raw!r}")
        self._one[0] = x
        outs = (self._oc1, self._ok1, self._om1, self._ov1)
        self._dp_batch(self._one, outs, False)
        case = int(self._oc1[0])
        k = int(self._ok1[0])
        events, revised = self._emit_at(
            self.t, case, k, float(self._om1[0]), float(self._ov1[0])
        )
        return StepOutput(
            t=self.t,
            label=Label(case),
            collective_start=k + 1 if case == Label.COLLECTIVE else None,
            new_events=events,
            revised=revised,
        )

    def run(self, values, record_labels: bool = False) -> "RunResult":
        """Process a batch of observations.

        Emitted events are folded into their final form (extensions collapse,
        superseded emissions drop).  With ``record_labels`` the per-step
        argmin labels are returned as an int8 array.
        """
        values = np.ascontiguousarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite observation at offset {bad}")
        n = values.size
        out_case = np.empty(n, dtype=np.int8)
        out_k = np.empty(n, dtype=np.int64)
        out_mean = np.empty(n, dtype=np.float64)
        out_var = np.empty(n, dtype=np.float64)
        first_t = self.t + 1
        self._dp_batch(values, (out_case, out_k, out_mean, out_var), False)
        collector = EventCollector()
        n_emitted = 0
        for idx in np.flatnonzero(out_case):
            t = first_t + int(idx)
            events, _ = self._emit_at(
                t, int(out_case[idx]), int(out_k[idx]),
                float(out_mean[idx]), float(out_var[idx]),
            )
            for ev in events:
                collector.add(ev)
                n_emitted += 1
        return RunResult(
            events=collector.events(),
            n_steps=n,
            first_t=first_t,
            labels=out_case if record_labels else None,
            n_emitted=n_emitted,
        )

    def first_alarm(self, values) -> int | None:
        """Time index of the first non-typical label in ``values``, if any.

        Fast path for run-length experiments: skips event bookkeeping, so the
        incremental emission state does not advance.
        """
        values = np.ascontiguousarray(values, dtype=np.float64)
        n = values.size
        out_case = np.empty(n, dtype=np.int8)
        out_k = np.empty(n, dtype=np.int64)
        out_mean = np.empty(n, dtype=np.float64)
        out_var = np.empty(n, dtype=np.float64)
        last = self._dp_batch(values, (out_case, out_k, out_mean, out_var), True)
        if last >= 0 and out_case[last] != Label.TYPICAL:
            return self.t
        return None

    # -- event emission --------------------------------------------------

    def _emit_at(
        self, t: int, case: int, k: int, seg_mean: float, seg_var: float
    ) -> tuple[tuple[AnomalyEvent, ...], bool]:
        reach = t - self._m + 1  # earliest start a future collective can have
        while self._recent_points and self._recent_points[0] < reach:
            self._recent_points.popleft()
        if self._open_event is not None and self._open_event.start < reach:
            self._open_event = None

        if case == Label.POINT:
            ev = AnomalyEvent(POINT, t, t, t)
            self._recent_points.append(t)
            return (ev,), False

        if case == Label.COLLECTIVE:
            start = k + 1
            revised = False
            if self._recent_points and self._recent_points[-1] >= start:
                revised = True
                self._recent_points = deque(
                    p for p in self._recent_points if p < start
                )
            open_ev = self._open_event
            if open_ev is not None and open_ev.start == start:
                revised = True
                ev = replace(
                    open_ev, end=t, seg_mean=seg_mean, seg_var=seg_var, revised=True
                )
            else:
                if (
                    open_ev is not None
                    and start <= open_ev.start
                    and open_ev.end <= t
                ):
                    revised = True
                ev = AnomalyEvent(
                    COLLECTIVE, start, t, t,
                    seg_mean=seg_mean, seg_var=seg_var, revised=revised,
                )
            self._open_event = ev
            return (ev,), revised

        return (), False

    # -- retrospective resolution -----------------------------------------

    def resolve_window_events(self) -> list[AnomalyEvent]:
        """Exact optimal labelling recovered by backtracking stored decisions.

        Walks the decision chain from the current time towards zero.  Raises
        ValueError if the chain leaves the retained window (configure a larger
        ``window_len`` to backtrack further); with ``window_len > t`` the
        result is the exact minimiser over the whole stream.  ``detected_at``
        is set to each event's end, since resolution is retrospective.
        """
        cap = self._cap
        lo = max(0, self.t - cap + 1)
        events: list[AnomalyEvent] = []
        cur = self.t
        while cur > 0:
            if cur < lo:
                raise ValueError(
                    "decision chain left the retained window; "
                    "increase window_len for full backtracking"
                )
            j = cur % cap
            case = self._case[j]
            if case == Label.TYPICAL:
                cur -= 1
            elif case == Label.POINT:
                events.append(AnomalyEvent(POINT, cur, cur, cur))
                cur -= 1
            else:
                k = int(self._start[j])
                if k < lo:
                    raise ValueError(
                        "decision chain left the retained window; "
                        "increase window_len for full backtracking"
                    )
                a = cur - k
                seg_sum = self._s1[j] - self._s1[k % cap]
                seg_mean = seg_sum / a
                seg_var = (self._s2[j] - self._s2[k % cap] - seg_sum * seg_mean) / a
                events.append(
                    AnomalyEvent(
                        COLLECTIVE, k + 1, cur, cur,
                        seg_mean=seg_mean, seg_var=seg_var,
                    )
                )
                cur = k
        events.reverse()
        return events

    @property
    def cost_offset(self) -> float:
        return float(self._offset[0])

    @property
    def total_cost(self) -> float:
        """Optimal penalised cost at the current time (offset restored)."""
        return float(self._cost[self.t % self._cap]) + self.cost_offset


@dataclass
class RunResult:
    events: list[AnomalyEvent]
    n_steps: int
    first_t: int
    labels: np.ndarray | None = None
    n_emitted: int = 0


class EventCollector:
    """Folds an incremental emission stream into a final event list.

    A re-emission with the same start replaces the open collective event; a
    collective emission also drops any earlier event whose span it covers
    (the superseded point anomalies of the point-to-collective transition).
    """

    def __init__(self):
        self._events: list[AnomalyEvent] = []

    def add(self, ev: AnomalyEvent):
        if ev.kind == COLLECTIVE:
            self._events = [
                e
                for e in self._events
                if not (e.kind == COLLECTIVE and e.start == ev.start)
                and not (ev.start <= e.start and e.end <= ev.end)
            ]
        self._events.append(ev)

    def events(self) -> list[AnomalyEvent]:
        return sorted(self._events, key=lambda e: (e.start, e.end))


def detection_time(outputs: Iterable[StepOutput], change_at: int) -> DetectionDelay:
    """Delay from ``change_at`` to the first non-typical label after it.

    If the stream ends undetected the delay is censored at the last observed
    time.
    """
    last_t = change_at
    for out in outputs:
        last_t = out.t
        if out.t > change_at and out.label != Label.TYPICAL:
            return DetectionDelay(delay=out.t - change_at, censored=False)
    return DetectionDelay(delay=last_t - change_at, censored=True)


def recommended_max_segment(lam: float, mu_min: float, eps: float) -> int:
    """Smallest maximum segment length that keeps the detection delay intact.

    For a smallest mean shift of interest ``mu_min``, a maximum segment
    length of ``ceil((lam / mu_min^2) * (1 + eps))`` leaves the detection
    delay within o(1) of the unconstrained programme.
    """
    if mu_min == 0.0:
        raise ValueError("mu_min must be non-zero")
    if eps < 0.0:
        raise ValueError("eps must be non-negative")
    return math.ceil((lam / (mu_min * mu_min)) * (1.0 + eps))


def collect_events(outputs: Iterable[StepOutput]) -> list[AnomalyEvent]:
    """Final event list from a sequence of step outputs."""
    collector = EventCollector()
    for out in outputs:
        for ev in out.new_events:
            collector.add(ev)
    return collector.events()
