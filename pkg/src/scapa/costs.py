"""Cost models and penalty schemes for the penalised-cost programme.

Two cost models are supported on standardised data: a joint mean-and-variance
model (Gaussian likelihood cost, the default) and a mean-only model used for
run-length and detection-delay analysis.  Penalties for point and collective
anomalies are indexed by a single parameter ``lam`` and can be inflated by a
multiplicative factor to compensate for serial dependence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

MEAN_VARIANCE = "mean_variance"
MEAN_ONLY = "mean_only"

GAMMA_DEFAULT = 1e-4
# Floor on the within-segment variance: log(0) would make the programme
# unbounded on exactly-repeated values.
VARIANCE_FLOOR = 1e-8
# Fallback for log(gamma + x^2) when gamma == 0 and x == 0.
GAMMA_GUARD = 1e-12

LENGTH_DEPENDENT = "length_dependent"
CONSTANT = "constant"


@dataclass(frozen=True)
class CostModel:
    """Which per-segment likelihood cost the programme minimises.

    ``gamma`` regularises the point-anomaly cost ``1 + log(gamma + x^2)`` in
    the mean-variance model; it is unused in the mean-only model.
    """

    kind: Literal["mean_variance", "mean_only"] = MEAN_VARIANCE
    gamma: float = GAMMA_DEFAULT

    def __post_init__(self):
        if self.kind not in (MEAN_VARIANCE, MEAN_ONLY):
            raise ValueError(f"unknown cost model kind: {self.kind!r}")
        if self.gamma < 0.0:
            raise ValueError("gamma must be non-negative")

    @classmethod
    def mean_variance(cls, gamma: float = GAMMA_DEFAULT) -> "CostModel":
        return cls(kind=MEAN_VARIANCE, gamma=gamma)

    @classmethod
    def mean_only(cls) -> "CostModel":
        return cls(kind=MEAN_ONLY, gamma=0.0)

    @property
    def is_mean_variance(self) -> bool:
        return self.kind == MEAN_VARIANCE

    @property
    def min_collective_len(self) -> int:
        # Variance of a single point is undefined.
        return 2 if self.kind == MEAN_VARIANCE else 1


@dataclass(frozen=True)
class PenaltyScheme:
    """Point and collective penalties indexed by a single parameter.

    beta_point = inflation * 2 * lam, and beta_collective(a) is either the
    length-dependent form ``inflation * 2 * (a/(a-1)) * (1 + lam + sqrt(2 lam))``
    or the constant ``inflation * 2 * lam``.  ``point_override`` replaces
    beta_point outright (used to disable point anomalies in CUSUM mode);
    inflation still applies to the collective penalty only.
    """

    lam: float
    inflation: float = 1.0
    collective_mode: Literal["length_dependent", "constant"] = LENGTH_DEPENDENT
    point_override: float | None = None

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("lam must be non-negative")
        if self.inflation <= 0.0:
            raise ValueError("inflation must be positive")
        if self.collective_mode not in (LENGTH_DEPENDENT, CONSTANT):
            raise ValueError(f"unknown collective mode: {self.collective_mode!r}")

    @classmethod
    def from_threshold(cls, threshold: float, inflation: float = 1.0) -> "PenaltyScheme":
        """Scheme whose effective penalties both equal ``inflation * threshold``.

        This is the parametrisation under which the run-length and detection
        delay asymptotics hold: an anomaly is declared once the relevant
        mean-only statistic crosses ``threshold``.
        """
        return cls(lam=threshold / 2.0, inflation=inflation, collective_mode=CONSTANT)

    @property
    def beta_point(self) -> float:
        if self.point_override is not None:
            return self.point_override
        return self.inflation * 2.0 * self.lam

    def beta_collective(self, a: int) -> float:
        return beta_collective(a, self)

    def with_point_override(self, value: float) -> "PenaltyScheme":
        return replace(self, point_override=value)


@dataclass(frozen=True)
class SegmentSummary:
    """Sufficient statistics (length, sum, sum of squares) of a segment."""

    len: int
    sum: float
    sumsq: float

    @classmethod
    def from_values(cls, values) -> "SegmentSummary":
        values = [float(v) for v in values]
        return cls(
            len=len(values),
            sum=math.fsum(values),
            sumsq=math.fsum(v * v for v in values),
        )

    def __add__(self, other: "SegmentSummary") -> "SegmentSummary":
        return SegmentSummary(
            len=self.len + other.len,
            sum=self.sum + other.sum,
            sumsq=self.sumsq + other.sumsq,
        )

    @property
    def mean(self) -> float:
        return self.sum / self.len

    @property
    def variance(self) -> float:
        """Population variance about the segment mean."""
        return (self.sumsq - self.sum * self.sum / self.len) / self.len


def typical_cost(x: float, model: CostModel) -> float:
    """Cost of one standardised observation under the typical regime."""
    return x * x


def point_cost(x: float, model: CostModel, pen: PenaltyScheme) -> float:
    """Cost plus penalty of labelling one observation a point anomaly."""
    if model.is_mean_variance:
        arg = model.gamma + x * x
        if arg <= 0.0:
            warnings.warn(
                "point cost with gamma=0 at x=0: flooring log argument; "
                "configure a positive gamma",
                stacklevel=2,
            )
            arg = GAMMA_GUARD
        return 1.0 + math.log(arg) + pen.beta_point
    return pen.beta_point


def segment_cost(s: SegmentSummary, model: CostModel) -> float:
    """Minimised cost of a candidate collective-anomaly segment (no penalty)."""
    if model.is_mean_variance and s.len < 2:
        raise ValueError("segment too short for variance")
    v = s.variance
    if model.is_mean_variance:
        return s.len * (math.log(max(v, VARIANCE_FLOOR)) + 1.0)
    return s.len * v


def beta_collective(a: int, pen: PenaltyScheme) -> float:
    """Penalty for introducing a collective anomaly of length ``a``."""
    if pen.collective_mode == LENGTH_DEPENDENT:
        if a < 2:
            raise ValueError("length-dependent penalty needs segment length >= 2")
        return pen.inflation * 2.0 * (a / (a - 1.0)) * (
            1.0 + pen.lam + math.sqrt(2.0 * pen.lam)
        )
    return pen.inflation * 2.0 * pen.lam


def inflation_factor(phi: float, allow_below_one: bool = False) -> float:
    """Penalty inflation ``(1 + phi) / (1 - phi)`` for AR(1) dependence.

    Clamped below at 1 unless ``allow_below_one`` is set, since negative
    autocorrelation is not normally corrected for.
    """
    if not -1.0 < phi < 1.0:
        raise ValueError("phi must be in (-1, 1)")
    kappa = (1.0 + phi) / (1.0 - phi)
    if not allow_below_one:
        kappa = max(kappa, 1.0)
    return kappa


def pack_params(model: CostModel, pen: PenaltyScheme, renorm_threshold: float):
    """Scalar-parameter vector consumed by the compiled programme step.

    Layout must match ``_kernels``: mean-variance flag, gamma, point penalty,
    variance floor, renormalisation threshold.
    """
    return np.array(
        [
            1.0 if model.is_mean_variance else 0.0,
            model.gamma,
            pen.beta_point,
            VARIANCE_FLOOR,
            renorm_threshold,
        ],
        dtype=np.float64,
    )


def beta_table(pen: PenaltyScheme, min_len: int, max_len: int):
    """Collective penalties for every admissible segment length.

    Entry ``a - min_len`` holds ``beta_collective(a, pen)``.
    """
    return np.array(
        [beta_collective(a, pen) for a in range(min_len, max_len + 1)],
        dtype=np.float64,
    )
