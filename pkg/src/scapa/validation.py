"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np


def check_series(x, min_len: int = 0, name: str = "X") -> np.ndarray:
    """Coerce input to a contiguous 1-d float64 array.

    Accepts sequences, 1-d arrays, and single-column 2-d arrays (the usual
    estimator convention).  Rejects non-finite values.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"{name} contains a non-finite value at position {bad}")
    if arr.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} values, got {arr.size}")
    return np.ascontiguousarray(arr)


def check_baseline(known_baseline) -> tuple[float, float] | None:
    if known_baseline is None:
        return None
    mu0, sigma0 = known_baseline
    mu0, sigma0 = float(mu0), float(sigma0)
    if not np.isfinite(mu0) or not np.isfinite(sigma0) or sigma0 <= 0:
        raise ValueError("known_baseline must be (finite mu0, sigma0 > 0)")
    return (mu0, sigma0)
