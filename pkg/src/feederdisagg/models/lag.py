"""Lag and window selection by cross-correlation with temperature."""

from __future__ import annotations

import enum

import numpy as np

from .._base import as_series


class LagMode(str, enum.Enum):
    LAGGED = "LAGGED"
    MOVING_AVG = "MOVING_AVG"


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if denom == 0:
        raise ValueError("correlation undefined for a constant signal")
    return float(np.dot(a, b) / denom)


def trailing_mean(temp: np.ndarray, window: int) -> np.ndarray:
    """Mean of ``temp[t-window : t]`` at each t; shorter prefix while warming up.

    Step 0 has no past samples and falls back to ``temp[0]``.
    """
    temp = np.asarray(temp, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(temp)])
    t = np.arange(temp.shape[0])
    lo = np.maximum(t - window, 0)
    count = t - lo
    out = np.empty_like(temp)
    has = count > 0
    out[has] = (csum[t[has]] - csum[lo[has]]) / count[has]
    out[~has] = temp[~has]
    return out


def estimate_lag(demand, temp, max_lag: int, mode: LagMode | str = LagMode.LAGGED) -> int:
    """Lag (or trailing window length) maximizing correlation with demand.

    Every candidate is scored on the same sample range ``t >= max_lag`` so
    scores are comparable. Ties resolve to the smaller value.
    """
    mode = LagMode(mode)
    y = as_series(demand, "demand")
    x = as_series(temp, "temp", length=y.shape[0])
    n = y.shape[0]
    if max_lag < 0 or n <= max_lag + 1:
        raise ValueError("history must be longer than max_lag")
    if np.ptp(y) == 0 or np.ptp(x) == 0:
        raise ValueError("correlation undefined for a constant signal")
    target = y[max_lag:]
    if mode is LagMode.LAGGED:
        candidates = range(0, max_lag + 1)
        scores = [_pearson(target, x[max_lag - lag:n - lag]) for lag in candidates]
    else:
        candidates = range(1, max(max_lag, 1) + 1)
        csum = np.concatenate([[0.0], np.cumsum(x)])
        t = np.arange(max_lag, n)
        scores = []
        for w in candidates:
            ma = (csum[t] - csum[t - w]) / w
            scores.append(_pearson(target, ma) if np.ptp(ma) > 0 else -np.inf)
    best = int(np.argmax(scores))
    return list(candidates)[best]
