"""Error metrics and their per-day aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def rmse(estimate, truth) -> float:
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {tru.shape}")
    if est.size == 0:
        raise ValueError("rmse needs at least one sample")
    return float(np.sqrt(np.mean((est - tru) ** 2)))


@dataclass(frozen=True)
class DayMetrics:
    day: int
    rmse_total: float
    rmse_ac: float
    rmse_ol: float


@dataclass(frozen=True)
class Summary:
    mean: float
    min: float
    max: float


@dataclass(frozen=True)
class Metrics:
    per_day: tuple

    def _summary(self, attr: str) -> Summary:
        v = np.array([getattr(d, attr) for d in self.per_day])
        return Summary(float(v.mean()), float(v.min()), float(v.max()))

    @property
    def total(self) -> Summary:
        return self._summary("rmse_total")

    @property
    def ac(self) -> Summary:
        return self._summary("rmse_ac")

    @property
    def ol(self) -> Summary:
        return self._summary("rmse_ol")

    @property
    def days(self) -> list:
        return [d.day for d in self.per_day]
