"""Sequential robust estimation of baseline parameters.

The detector standardises every incoming observation by a robust estimate of
the typical mean and standard deviation.  Both are derived from three
stochastic-approximation quantile trackers (lower quartile, median, upper
quartile) that are seeded on a burn-in window and then updated in O(1) per
observation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._kernels import sa_quantile_updates

# Standard normal quantile at 0.75; IQR / (2 * PHI_INV_75) estimates sigma.
PHI_INV_75 = 0.674489750196


@dataclass
class QuantileState:
    """Stochastic-approximation tracker for one quantile.

    Attributes:
        alpha: target quantile level in (0, 1).
        xi: current quantile estimate, in data units.
        d: current step-size scale.
        d0: initial scale, one over the burn-in IQR.
        f_hat: running density estimate at ``xi``.
        i: number of updates applied since initialisation.
    """

    alpha: float
    xi: float
    d: float
    d0: float
    f_hat: float
    i: int

    def update(self, x: float) -> "QuantileState":
        return update_quantile(self, x)

    def update_many(self, xs: np.ndarray) -> "QuantileState":
        """Apply ``update`` once per element of ``xs`` (compiled loop)."""
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        self.xi, self.d, self.f_hat, self.i = sa_quantile_updates(
            self.xi, self.d, self.f_hat, self.i, self.d0, self.alpha, xs
        )
        return self


def initial_quantile(burn_in, alpha: float) -> QuantileState:
    """Seed a quantile tracker from a burn-in sample.

    The estimate starts at the empirical ``alpha``-quantile (linear
    interpolation between order statistics).  The initial step scale is the
    reciprocal of the burn-in IQR and the density estimate counts burn-in
    points within a shrinking bandwidth around the quantile.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    x = np.asarray(burn_in, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("burn-in must be one-dimensional")
    m = x.size
    if m < 4:
        raise ValueError(f"burn-in needs at least 4 values, got {m}")
    xi = float(np.quantile(x, alpha))
    iqr = float(np.quantile(x, 0.75) - np.quantile(x, 0.25))
    if iqr <= 0.0:
        raise ValueError("constant burn-in: IQR is zero, step scale undefined")
    d0 = 1.0 / iqr
    c = (d0 / m) * float(np.sum(1.0 / np.sqrt(np.arange(1, m + 1))))
    n_close = int(np.count_nonzero(np.abs(x - xi) <= c))
    f_hat = max(n_close, 1) / (2.0 * c * m)
    return QuantileState(alpha=alpha, xi=xi, d=d0, d0=d0, f_hat=f_hat, i=0)


def update_quantile(state: QuantileState, x: float) -> QuantileState:
    """Advance a quantile tracker by one observation (mutates ``state``).

    The density indicator is evaluated against the post-update quantile
    estimate, and the step scale is clamped at ``d0 * (i + 1) ** 0.25``.
    """
    i = state.i
    xi = state.xi - (state.d / (i + 1.0)) * (
        (1.0 if x <= state.xi else 0.0) - state.alpha
    )
    ind = 1.0 if abs(xi - x) <= 1.0 / math.sqrt(i + 1.0) else 0.0
    f_hat = (i * state.f_hat + (math.sqrt(i + 1.0) / 2.0) * ind) / (i + 1.0)
    clamp = state.d0 * (i + 1.0) ** 0.25
    if f_hat > 0.0:
        inv = 1.0 / f_hat
        d = inv if inv < clamp else clamp
    else:
        d = clamp
    state.xi = xi
    state.f_hat = f_hat
    state.d = d
    state.i = i + 1
    return state


@dataclass
class Baseline:
    """Robust location/scale estimate assembled from three quantile trackers.

    ``sigma_hat`` is held at its last positive value whenever the quartile
    estimates transiently cross (``crossed_count`` records how often).
    """

    q25: QuantileState
    q50: QuantileState
    q75: QuantileState
    mu_hat: float
    sigma_hat: float
    crossed_count: int = 0

    @classmethod
    def from_burn_in(cls, burn_in) -> "Baseline":
        q25 = initial_quantile(burn_in, 0.25)
        q50 = initial_quantile(burn_in, 0.50)
        q75 = initial_quantile(burn_in, 0.75)
        mu = q50.xi
        sigma = (q75.xi - q25.xi) / (2.0 * PHI_INV_75)
        if sigma <= 0.0:
            raise ValueError("constant burn-in: IQR is zero")
        return cls(q25=q25, q50=q50, q75=q75, mu_hat=mu, sigma_hat=sigma)

    def update(self, x: float) -> "Baseline":
        return baseline_update(self, x)


def baseline_update(baseline: Baseline, x: float) -> Baseline:
    """Update all three quantile trackers with ``x`` and refresh mu/sigma."""
    update_quantile(baseline.q25, x)
    update_quantile(baseline.q50, x)
    update_quantile(baseline.q75, x)
    baseline.mu_hat = baseline.q50.xi
    iqr = baseline.q75.xi - baseline.q25.xi
    if iqr > 0.0:
        baseline.sigma_hat = iqr / (2.0 * PHI_INV_75)
    else:
        baseline.crossed_count += 1
    return baseline


@dataclass(frozen=True)
class Ar1Estimate:
    """Lag-1 autocorrelation estimate, always inside (-1, 1)."""

    phi_hat: float


def estimate_ar1(values, lower: float = 0.025, upper: float = 0.975) -> Ar1Estimate:
    """Robust lag-1 autocorrelation of a (standardised) sequence.

    The sample autocorrelation is computed on values winsorised at their
    empirical ``lower``/``upper`` quantiles, which keeps isolated outliers
    from wrecking the estimate, and the result is clamped to [-0.99, 0.99].
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("input must be one-dimensional")
    if x.size < 30:
        raise ValueError(f"need at least 30 values, got {x.size}")
    lo, hi = np.quantile(x, [lower, upper])
    w = np.clip(x, lo, hi)
    w = w - w.mean()
    denom = float(np.dot(w, w))
    if denom <= 0.0:
        warnings.warn("constant input: lag-1 autocorrelation set to 0", stacklevel=2)
        return Ar1Estimate(0.0)
    phi = float(np.dot(w[1:], w[:-1]) / denom)
    return Ar1Estimate(max(-0.99, min(0.99, phi)))
