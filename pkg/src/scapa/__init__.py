"""Streaming detection and classification of point and collective anomalies.

The online engine standardises each observation with sequentially estimated
robust baseline parameters and runs a bounded-memory penalised-cost dynamic
programme that labels every time step as typical, a point anomaly, or part of
a collective anomaly.  An offline solver, an exact brute-force oracle, and a
seeded Monte-Carlo laboratory support calibration and verification.
"""

from .costs import (
    CostModel,
    PenaltyScheme,
    SegmentSummary,
    beta_collective,
    inflation_factor,
    point_cost,
    segment_cost,
    typical_cost,
)
from .detector import (
    AnomalyEvent,
    DetectionDelay,
    DetectorConfig,
    EventCollector,
    Label,
    OnlineDetector,
    RunResult,
    StepOutput,
    collect_events,
    detection_time,
    recommended_max_segment,
)
from .estimators import CapaDetector, ScapaDetector
from .reference import OfflineResult, brute_force_oracle, capa_offline, cusum_mode
from .seqstats import (
    Ar1Estimate,
    Baseline,
    QuantileState,
    baseline_update,
    estimate_ar1,
    initial_quantile,
    update_quantile,
)
from .simlab import (
    ExperimentConfig,
    GroundTruth,
    MultiAnomalyConfig,
    RocConfig,
    RocPoint,
    StrengthSpec,
    arl_with_inflation,
    estimate_add,
    estimate_arl,
    fpr_at_tpr,
    gen_ar1,
    gen_multi,
    mu_from_strength,
    roc_auc,
    roc_curve,
    strength_from_mu,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyEvent",
    "Ar1Estimate",
    "Baseline",
    "CapaDetector",
    "CostModel",
    "DetectionDelay",
    "DetectorConfig",
    "EventCollector",
    "ExperimentConfig",
    "GroundTruth",
    "Label",
    "MultiAnomalyConfig",
    "OfflineResult",
    "OnlineDetector",
    "PenaltyScheme",
    "QuantileState",
    "RocConfig",
    "RocPoint",
    "RunResult",
    "ScapaDetector",
    "SegmentSummary",
    "StepOutput",
    "StrengthSpec",
    "arl_with_inflation",
    "baseline_update",
    "beta_collective",
    "brute_force_oracle",
    "capa_offline",
    "collect_events",
    "cusum_mode",
    "detection_time",
    "estimate_add",
    "estimate_ar1",
    "estimate_arl",
    "fpr_at_tpr",
    "gen_ar1",
    "gen_multi",
    "inflation_factor",
    "initial_quantile",
    "mu_from_strength",
    "point_cost",
    "recommended_max_segment",
    "roc_auc",
    "roc_curve",
    "segment_cost",
    "strength_from_mu",
    "typical_cost",
    "update_quantile",
]
