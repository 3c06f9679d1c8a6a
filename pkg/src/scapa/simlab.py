"""Seeded Monte-Carlo laboratory: generators, run-length and delay studies.

All generators and estimators are pure functions of (configuration, seed).
Each replication derives its own generator from the experiment seed and the
replication index, so results do not depend on execution order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import lfilter

from .costs import CostModel, PenaltyScheme, inflation_factor
from .detector import COLLECTIVE, DetectorConfig, OnlineDetector
from .reference import capa_offline, cusum_mode

_STREAM_BLOCK = 4096
CENSOR_WARN_FRACTION = 0.01


# -- signal strength -----------------------------------------------------


def mu_from_strength(delta: float) -> float:
    """Mean shift giving signal strength ``delta`` (variance unchanged)."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    return 2.0 * math.sqrt(math.expm1(delta))


def strength_from_mu(mu: float) -> float:
    """Signal strength ``log(1 + mu^2 / 4)`` of a pure mean shift."""
    if mu == 0.0:
        raise ValueError("mu must be non-zero")
    return math.log1p(mu * mu / 4.0)


@dataclass(frozen=True)
class StrengthSpec:
    delta: float

    @property
    def mu(self) -> float:
        return mu_from_strength(self.delta)


# -- generators ----------------------------------------------------------


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(list(keys))


def gen_gaussian(n: int, seed, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
    return rng.normal(mu, sigma, n)


def gen_ar1(phi: float, n: int, seed) -> np.ndarray:
    """Stationary AR(1) with standard-normal innovations.

    ``x[0] ~ N(0, 1 / (1 - phi^2))`` and ``x[t] = phi x[t-1] + e[t]``.
    """
    if not -1.0 < phi < 1.0:
        raise ValueError("phi must be in (-1, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
    e = rng.standard_normal(n)
    if n == 0:
        return e
    e[0] /= math.sqrt(1.0 - phi * phi)
    return lfilter([1.0], [1.0, -phi], e)


class _Ar1Stream:
    """Blockwise AR(1) source that carries state across blocks."""

    def __init__(self, phi: float, rng: np.random.Generator):
        self.phi = phi
        self.rng = rng
        self._zi = None

    def draw(self, n: int) -> np.ndarray:
        e = self.rng.standard_normal(n)
        if self.phi == 0.0 or n == 0:
            return e
        if self._zi is None:
            e[0] /= math.sqrt(1.0 - self.phi * self.phi)
            out, self._zi = lfilter([1.0], [1.0, -self.phi], e, zi=np.zeros(1))
        else:
            out, self._zi = lfilter([1.0], [1.0, -self.phi], e, zi=self._zi)
        return out

    @property
    def marginal_sd(self) -> float:
        return 1.0 / math.sqrt(1.0 - self.phi * self.phi)


@dataclass(frozen=True)
class MultiAnomalyConfig:
    """Generator for streams that alternate typical and anomalous regimes.

    Regime lengths are negative binomial (number of failures before the r-th
    success).  Each collective anomaly draws its own mean and standard
    deviation; point anomalies replace typical draws with Student-t values at
    rate ``point_prob``.
    """

    typical_len_r: int = 5
    typical_len_p: float = 0.01
    anomaly_len_r: int = 5
    anomaly_len_p: float = 0.03
    mean_shift_sd: float = 2.0
    scale_shape: float = 1.0
    scale_scale: float = 1.0
    point_prob: float = 0.01
    point_t_dof: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.point_prob <= 1.0:
            raise ValueError("point_prob must be in [0, 1]")
        if self.point_t_dof <= 0.0:
            raise ValueError("point_t_dof must be positive")


@dataclass(frozen=True)
class GroundTruth:
    """True anomaly positions, 1-based inclusive indices."""

    collectives: tuple[tuple[int, int], ...]
    points: tuple[int, ...]

    def typical_mask(self, n: int) -> np.ndarray:
        mask = np.ones(n, dtype=bool)
        for s, e in self.collectives:
            mask[s - 1 : e] = False
        for p in self.points:
            mask[p - 1] = False
        return mask


def gen_multi(
    config: MultiAnomalyConfig, n: int, seed
) -> tuple[np.ndarray, GroundTruth]:
    """Simulate a stream with multiple collective and point anomalies."""
    if n <= 0:
        raise ValueError("n must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
    x = np.empty(n, dtype=np.float64)
    collectives: list[tuple[int, int]] = []
    points: list[int] = []
    pos = 0
    typical = True
    while pos < n:
        if typical:
            length = int(rng.negative_binomial(config.typical_len_r, config.typical_len_p))
            take = min(length, n - pos)
            if take > 0:
                vals = rng.standard_normal(take)
                if config.point_prob > 0.0:
                    mask = rng.random(take) < config.point_prob
                    n_pts = int(mask.sum())
                    if n_pts:
                        vals[mask] = rng.standard_t(config.point_t_dof, n_pts)
                        points.extend((pos + 1 + off) for off in np.flatnonzero(mask))
                x[pos : pos + take] = vals
                pos += take
        else:
            length = int(rng.negative_binomial(config.anomaly_len_r, config.anomaly_len_p))
            mu_k = rng.normal(0.0, config.mean_shift_sd)
            sigma_k = rng.gamma(config.scale_shape, config.scale_scale)
            take = min(length, n - pos)
            if take > 0:
                x[pos : pos + take] = rng.normal(mu_k, sigma_k, take)
                collectives.append((pos + 1, pos + take))
                pos += take
        typical = not typical
    return x, GroundTruth(tuple(collectives), tuple(points))


# -- experiment scaffolding ------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Detector settings shared across the replications of one study.

    ``penalty_form`` selects how a grid value lambda maps to penalties:
    "threshold" uses equal point/collective penalties of ``inflation * lambda``
    (the parametrisation of the run-length asymptotics), "capa" uses the
    standard scheme (point ``2 lambda``, collective per ``collective_mode``).
    """

    model: CostModel = field(default_factory=CostModel.mean_only)
    min_seg_len: int = 2
    max_seg_len: int = 1000
    burn_in_len: int = 1000
    known_baseline: tuple[float, float] | None = (0.0, 1.0)
    penalty_form: str = "threshold"
    collective_mode: str = "length_dependent"
    inflation: float = 1.0
    max_steps: int = 10_000_000

    def scheme(self, lam: float) -> PenaltyScheme:
        if self.penalty_form == "threshold":
            return PenaltyScheme.from_threshold(lam, inflation=self.inflation)
        if self.penalty_form == "capa":
            return PenaltyScheme(
                lam=lam,
                inflation=self.inflation,
                collective_mode=self.collective_mode,
            )
        raise ValueError(f"unknown penalty form: {self.penalty_form!r}")

    def detector_config(self, lam: float) -> DetectorConfig:
        return DetectorConfig(
            model=self.model,
            penalties=self.scheme(lam),
            min_seg_len=self.min_seg_len,
            max_seg_len=self.max_seg_len,
            burn_in_len=self.burn_in_len,
            known_baseline=self.known_baseline,
        )


@dataclass(frozen=True)
class ArlRow:
    lam: float
    phi: float
    mean_rl: float
    ci_lo: float
    ci_hi: float
    n_censored: int


@dataclass(frozen=True)
class AddRow:
    lam: float
    delta: float
    phi: float
    m: int
    mean_delay: float
    ci_lo: float
    ci_hi: float
    n_censored: int


@dataclass(frozen=True)
class RocPoint:
    lam: float
    tpr: float
    fpr: float

    def __post_init__(self):
        if not (0.0 <= self.tpr <= 1.0 and 0.0 <= self.fpr <= 1.0):
            raise ValueError("rates must lie in [0, 1]")


def _bootstrap_ci(values: np.ndarray, seed_keys, n_boot: int = 1000) -> tuple[float, float]:
    rng = _rng(*seed_keys)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    means = values[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float(lo), float(hi)


def _warn_censoring(n_censored: int, reps: int, context: str):
    if n_censored > CENSOR_WARN_FRACTION * reps:
        warnings.warn(
            f"{context}: {n_censored}/{reps} replications censored; "
            "statistics for this configuration are unreliable",
            stacklevel=3,
        )


def _first_alarm_after(
    det: OnlineDetector, stream: _Ar1Stream | None, rng, mu: float, cap: int
) -> tuple[int, bool]:
    """Run until the first non-typical label; returns (run length, censored).

    The run length counts observations after the detector's current time.
    ``mu`` shifts the generated values (zero for anomaly-free runs).
    """
    t0 = det.t
    consumed = 0
    while consumed < cap:
        take = min(_STREAM_BLOCK, cap - consumed)
        block = stream.draw(take) if stream is not None else rng.standard_normal(take)
        if mu != 0.0:
            block = block + mu
        hit = det.first_alarm(block)
        if hit is not None:
            return hit - t0, False
        consumed += take
    return cap, True


def _run_lengths(
    cfg: ExperimentConfig,
    lam: float,
    reps: int,
    seed_keys: tuple,
    phi: float = 0.0,
    mu: float = 0.0,
) -> tuple[np.ndarray, int]:
    dconf = cfg.detector_config(lam)
    lengths = np.empty(reps, dtype=np.float64)
    n_censored = 0
    for rep in range(reps):
        rng = _rng(*seed_keys, rep)
        stream = _Ar1Stream(phi, rng) if phi != 0.0 else None
        burn = (
            stream.draw(cfg.burn_in_len)
            if stream is not None
            else rng.standard_normal(cfg.burn_in_len)
        )
        det = OnlineDetector(dconf, burn)
        rl, censored = _first_alarm_after(det, stream, rng, mu, cfg.max_steps)
        lengths[rep] = rl
        n_censored += censored
    return lengths, n_censored


def estimate_arl(
    cfg: ExperimentConfig, lambda_grid: Sequence[float], reps: int, seed: int
) -> list[ArlRow]:
    """Average run length to false alarm on anomaly-free data, per lambda."""
    if reps < 1:
        raise ValueError("reps must be positive")
    rows = []
    for li, lam in enumerate(lambda_grid):
        lengths, n_cens = _run_lengths(cfg, lam, reps, (seed, 1, li))
        _warn_censoring(n_cens, reps, f"ARL at lambda={lam}")
        lo, hi = _bootstrap_ci(lengths, (seed, 2, li))
        rows.append(
            ArlRow(
                lam=float(lam), phi=0.0, mean_rl=float(lengths.mean()),
                ci_lo=lo, ci_hi=hi, n_censored=n_cens,
            )
        )
    return rows


def estimate_add(
    cfg: ExperimentConfig,
    lambda_grid: Sequence[float],
    strength_grid: Sequence[float],
    reps: int,
    seed: int,
) -> list[AddRow]:
    """Average detection delay after a mean shift of strength delta."""
    if reps < 1:
        raise ValueError("reps must be positive")
    rows = []
    for li, lam in enumerate(lambda_grid):
        for di, delta in enumerate(strength_grid):
            mu = mu_from_strength(delta)
            delays, n_cens = _run_lengths(cfg, lam, reps, (seed, 3, li, di), mu=mu)
            _warn_censoring(n_cens, reps, f"ADD at lambda={lam}, delta={delta}")
            lo, hi = _bootstrap_ci(delays, (seed, 4, li, di))
            rows.append(
                AddRow(
                    lam=float(lam), delta=float(delta), phi=0.0,
                    m=cfg.max_seg_len, mean_delay=float(delays.mean()),
                    ci_lo=lo, ci_hi=hi, n_censored=n_cens,
                )
            )
    return rows


def arl_with_inflation(
    phi_grid: Sequence[float],
    lambda_grid: Sequence[float],
    inflate: bool,
    reps: int,
    seed: int,
    cfg: ExperimentConfig | None = None,
) -> list[ArlRow]:
    """ARL curves under AR(1) noise, with or without penalty inflation.

    In known-baseline mode the AR(1) stream is standardised at the innovation
    scale (sigma0 = 1): the inflation factor is the sum of autocorrelations,
    i.e. the long-run variance correction, and is calibrated against that
    scale.  phi=0 coincides with the i.i.d. study either way.
    """
    base = cfg or ExperimentConfig()
    rows = []
    for pi, phi in enumerate(phi_grid):
        kappa = inflation_factor(phi) if inflate else 1.0
        known = None if base.known_baseline is None else (0.0, 1.0)
        cfg_phi = replace(base, known_baseline=known, inflation=kappa)
        for li, lam in enumerate(lambda_grid):
            lengths, n_cens = _run_lengths(
                cfg_phi, lam, reps, (seed, 5, pi, li), phi=phi
            )
            _warn_censoring(n_cens, reps, f"ARL at phi={phi}, lambda={lam}")
            lo, hi = _bootstrap_ci(lengths, (seed, 6, pi, li))
            rows.append(
                ArlRow(
                    lam=float(lam), phi=float(phi), mean_rl=float(lengths.mean()),
                    ci_lo=lo, ci_hi=hi, n_censored=n_cens,
                )
            )
    return rows


# -- ROC studies -----------------------------------------------------------


def _collective_events(detector_kind: str, cfg_roc: "RocConfig", series, lam: float):
    model = CostModel.mean_variance(cfg_roc.gamma)
    pen = PenaltyScheme(lam=lam, collective_mode=cfg_roc.collective_mode)
    if detector_kind == "capa":
        dconf = DetectorConfig(
            model=model, penalties=pen,
            min_seg_len=cfg_roc.min_seg_len, max_seg_len=cfg_roc.max_seg_len,
            burn_in_len=0, known_baseline=None,
        )
        return [e for e in capa_offline(series, dconf).events if e.kind == COLLECTIVE]
    dconf = DetectorConfig(
        model=model, penalties=pen,
        min_seg_len=cfg_roc.min_seg_len, max_seg_len=cfg_roc.max_seg_len,
        burn_in_len=cfg_roc.scapa_burn_in, known_baseline=None,
    )
    if detector_kind == "cusum":
        dconf = cusum_mode(dconf)
    elif detector_kind != "scapa":
        raise ValueError(f"unknown detector kind: {detector_kind!r}")
    det = OnlineDetector(dconf, series[: cfg_roc.scapa_burn_in])
    result = det.run(series[cfg_roc.scapa_burn_in :])
    return [e for e in result.events if e.kind == COLLECTIVE]


@dataclass(frozen=True)
class RocConfig:
    """Settings for the multi-anomaly ROC studies."""

    gen: MultiAnomalyConfig = field(default_factory=MultiAnomalyConfig)
    n: int = 10_000
    min_seg_len: int = 2
    max_seg_len: int = 1000
    scapa_burn_in: int = 200
    gamma: float = 1e-4
    collective_mode: str = "length_dependent"


def roc_curve(
    detector_kind: str,
    cfg: RocConfig,
    lambda_grid: Sequence[float],
    reps: int,
    seed: int,
) -> list[RocPoint]:
    """Segment-level TPR and observation-level FPR per penalty value.

    A detected collective event is a true positive when it overlaps a true
    anomalous segment by at least one index.  TPR is the fraction of true
    segments overlapped by at least one detection; FPR is the fraction of
    typical-regime observations covered by detected collective events.  Rates
    are averaged over replications.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    tprs = np.zeros((len(lambda_grid), reps))
    fprs = np.zeros((len(lambda_grid), reps))
    tpr_valid = np.zeros((len(lambda_grid), reps), dtype=bool)
    for rep in range(reps):
        series, truth = gen_multi(cfg.gen, cfg.n, _rng(seed, 7, rep))
        typical = truth.typical_mask(cfg.n)
        n_typical = int(typical.sum())
        for li, lam in enumerate(lambda_grid):
            events = _collective_events(detector_kind, cfg, series, lam)
            covered = np.zeros(cfg.n, dtype=bool)
            for ev in events:
                covered[ev.start - 1 : ev.end] = True
            if truth.collectives:
                hits = sum(
                    1
                    for s, e in truth.collectives
                    if covered[s - 1 : e].any()
                )
                tprs[li, rep] = hits / len(truth.collectives)
                tpr_valid[li, rep] = True
            if n_typical:
                fprs[li, rep] = (covered & typical).sum() / n_typical
    points = []
    for li, lam in enumerate(lambda_grid):
        valid = tpr_valid[li]
        tpr = float(tprs[li, valid].mean()) if valid.any() else 0.0
        points.append(RocPoint(lam=float(lam), tpr=tpr, fpr=float(fprs[li].mean())))
    return points


def roc_auc(points: Iterable[RocPoint]) -> float:
    """Trapezoidal area under a ROC curve, anchored at (0,0) and (1,1)."""
    pts = sorted({(p.fpr, p.tpr) for p in points})
    fpr = np.array([0.0] + [p[0] for p in pts] + [1.0])
    tpr = np.array([0.0] + [p[1] for p in pts] + [1.0])
    return float(np.trapezoid(tpr, fpr))


def fpr_at_tpr(points: Iterable[RocPoint], target_tpr: float) -> float:
    """FPR of a curve at a matched TPR, linearly interpolated."""
    pts = sorted({(p.tpr, p.fpr) for p in points})
    tpr = np.array([p[0] for p in pts])
    fpr = np.array([p[1] for p in pts])
    if target_tpr <= tpr[0]:
        return float(fpr[0])
    if target_tpr >= tpr[-1]:
        return float(fpr[-1])
    return float(np.interp(target_tpr, tpr, fpr))


# -- CSV emission ----------------------------------------------------------


def write_arl_csv(rows: Iterable[ArlRow], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "phi", "mean_rl", "ci_lo", "ci_hi", "censored"])
        for r in rows:
            w.writerow([r.lam, r.phi, r.mean_rl, r.ci_lo, r.ci_hi, r.n_censored])


def write_add_csv(rows: Iterable[AddRow], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "delta", "phi", "m", "mean_delay", "ci_lo", "ci_hi"])
        for r in rows:
            w.writerow([r.lam, r.delta, r.phi, r.m, r.mean_delay, r.ci_lo, r.ci_hi])


def write_roc_csv(curves: dict[str, list[RocPoint]], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "lambda", "tpr", "fpr"])
        for method, points in curves.items():
            for p in points:
                w.writerow([method, p.lam, p.tpr, p.fpr])
