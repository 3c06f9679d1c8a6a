"""Scikit-learn style estimator facades over the detection engines.

``ScapaDetector`` wraps the online engine: ``fit`` consumes the burn-in,
``predict`` consumes stream values and returns per-observation labels
(0 typical, 1 point anomaly, 2 collective anomaly).  ``CapaDetector`` wraps
the offline solver with the usual ``fit`` / ``fit_predict`` surface.  Both
expose their settings through ``get_params`` / ``set_params`` so they compose
with model-selection tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .costs import CostModel, PenaltyScheme
from .detector import (
    DetectorConfig,
    EventCollector,
    OnlineDetector,
    StepOutput,
)
from .reference import capa_offline
from .validation import check_baseline, check_series


def _build_model(model: str, gamma: float) -> CostModel:
    if model == "mean_variance":
        return CostModel.mean_variance(gamma)
    if model == "mean_only":
        return CostModel.mean_only()
    raise ValueError(f"model must be 'mean_variance' or 'mean_only', got {model!r}")


class ScapaDetector(BaseEstimator):
    """Streaming anomaly detector with an estimator interface.

    Parameters
    ----------
    lam : penalty parameter.
    min_seg_len, max_seg_len : admissible collective-anomaly lengths.
    model : "mean_variance" or "mean_only".
    gamma : point-cost regulariser for the mean-variance model.
    penalty_mode : "length_dependent" or "constant" collective penalty.
    inflation : multiplicative penalty inflation (serial dependence).
    known_baseline : optional (mu0, sigma0); otherwise estimated from the
        burn-in and updated sequentially.
    window_len : retained history, >= max_seg_len + 1 (default exactly that).
    """

    def __init__(
        self,
        lam: float = 8.0,
        min_seg_len: int = 2,
        max_seg_len: int = 1000,
        model: str = "mean_variance",
        gamma: float = 1e-4,
        penalty_mode: str = "length_dependent",
        inflation: float = 1.0,
        known_baseline=None,
        window_len=None,
    ):
        self.lam = lam
        self.min_seg_len = min_seg_len
        self.max_seg_len = max_seg_len
        self.model = model
        self.gamma = gamma
        self.penalty_mode = penalty_mode
        self.inflation = inflation
        self.known_baseline = known_baseline
        self.window_len = window_len

    def _config(self, burn_in_len: int) -> DetectorConfig:
        return DetectorConfig(
            model=_build_model(self.model, self.gamma),
            penalties=PenaltyScheme(
                lam=self.lam,
                inflation=self.inflation,
                collective_mode=self.penalty_mode,
            ),
            min_seg_len=self.min_seg_len,
            max_seg_len=self.max_seg_len,
            burn_in_len=burn_in_len,
            known_baseline=check_baseline(self.known_baseline),
            window_len=self.window_len,
        )

    def fit(self, X, y=None):
        """Initialise the engine; ``X`` is the burn-in segment."""
        burn = check_series(X, name="burn-in")
        self.engine_ = OnlineDetector(self._config(burn.size), burn)
        self._collector = EventCollector()
        self.n_burn_in_ = burn.size
        return self

    def update(self, x: float) -> StepOutput:
        """Process a single streamed observation."""
        check_is_fitted(self, "engine_")
        out = self.engine_.step(x)
        for ev in out.new_events:
            self._collector.add(ev)
        return out

    def predict(self, X) -> np.ndarray:
        """Consume stream values, returning one label code per value.

        Note this advances the online state: predicting the same block twice
        analyses it as two consecutive stretches of the stream.
        """
        check_is_fitted(self, "engine_")
        values = check_series(X, name="X")
        result = self.engine_.run(values, record_labels=True)
        for ev in result.events:
            self._collector.add(ev)
        return result.labels.astype(np.int64)

    @property
    def events_(self):
        check_is_fitted(self, "engine_")
        return self._collector.events()


class CapaDetector(BaseEstimator):
    """Offline collective/point anomaly detector (estimator interface).

    ``lam=None`` uses log(len(X)), the usual false-positive-controlling
    choice.  ``max_seg_len=None`` leaves the segment length unconstrained.
    ``known_baseline=None`` estimates a robust baseline (median, IQR) from
    the whole series.
    """

    def __init__(
        self,
        lam=None,
        min_seg_len: int = 2,
        max_seg_len=None,
        model: str = "mean_variance",
        gamma: float = 1e-4,
        penalty_mode: str = "length_dependent",
        inflation: float = 1.0,
        known_baseline=None,
    ):
        self.lam = lam
        self.min_seg_len = min_seg_len
        self.max_seg_len = max_seg_len
        self.model = model
        self.gamma = gamma
        self.penalty_mode = penalty_mode
        self.inflation = inflation
        self.known_baseline = known_baseline

    def fit(self, X, y=None):
        x = check_series(X, min_len=1, name="X")
        n = x.size
        lam = float(np.log(n)) if self.lam is None else float(self.lam)
        config = DetectorConfig(
            model=_build_model(self.model, self.gamma),
            penalties=PenaltyScheme(
                lam=lam,
                inflation=self.inflation,
                collective_mode=self.penalty_mode,
            ),
            min_seg_len=self.min_seg_len,
            max_seg_len=n if self.max_seg_len is None else self.max_seg_len,
            burn_in_len=0,
            known_baseline=check_baseline(self.known_baseline),
        )
        result = capa_offline(x, config)
        self.result_ = result
        self.events_ = list(result.events)
        self.total_cost_ = result.total_cost
        self.baseline_ = result.baseline_used
        labels = np.zeros(n, dtype=np.int64)
        for ev in result.events:
            labels[ev.start - 1 : ev.end] = 1 if ev.kind == "point" else 2
        self.labels_ = labels
        return self

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_

    def predict(self, X) -> np.ndarray:
        """Segment ``X`` from scratch and return its label codes."""
        return self.fit_predict(X)
