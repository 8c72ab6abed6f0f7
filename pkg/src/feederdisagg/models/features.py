"""Time-of-week and weather regressors for the MLR load models."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

from .._base import (
    MINUTES_PER_WEEK,
    STEPS_PER_DAY,
    InsufficientHistoryError,
    Weekday,
    as_series,
)


class FeatureKind(str, enum.Enum):
    OL_RES = "OL_RES"
    OL_COM = "OL_COM"
    AC = "AC"


@dataclass(frozen=True)
class FeatureSpec:
    kind: FeatureKind
    bin_minutes: int = 15
    lag: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        if self.bin_minutes < 1 or MINUTES_PER_WEEK % self.bin_minutes:
            raise ValueError("bin_minutes must divide the minutes in a week")
        if self.lag < 0:
            raise ValueError("lag must be non-negative")

    @property
    def n_bins(self) -> int:
        return MINUTES_PER_WEEK // self.bin_minutes

    @property
    def dim(self) -> int:
        if self.kind is FeatureKind.OL_RES:
            return self.n_bins + 2
        if self.kind is FeatureKind.OL_COM:
            return 2 * self.n_bins
        return self.n_bins + 4


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    spec: FeatureSpec


@dataclass(frozen=True)
class DayContext:
    """Inputs visible to a predictor on one day.

    Each array holds ``history`` samples from preceding days followed by the
    1440 samples of the day itself. ``y_total`` is the measured feeder
    demand; predictors only ever read it at lags of one step or more.
    """

    weekday: Weekday
    temp_res: np.ndarray
    temp_com: np.ndarray
    y_total: np.ndarray
    history: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weekday", Weekday.parse(self.weekday))
        n = self.history + STEPS_PER_DAY
        for name in ("temp_res", "temp_com", "y_total"):
            object.__setattr__(self, name, as_series(getattr(self, name), name, length=n))

    def lagged(self, name: str, t: int, lag: int) -> float:
        idx = self.history + t - lag
        if idx < 0:
            raise InsufficientHistoryError(
                f"{name} at lag {lag} needs {lag - t} samples of history, have {self.history}")
        return float(getattr(self, name)[idx])

    def day(self, name: str) -> np.ndarray:
        return getattr(self, name)[self.history:]

    def lagged_day(self, name: str, lag: int) -> np.ndarray:
        """``x[t - lag]`` for t = 0..1439, NaN where history runs out."""
        arr = getattr(self, name)
        out = np.full(STEPS_PER_DAY, np.nan)
        start = self.history - lag
        lo = max(0, -start)
        out[lo:] = arr[start + lo:start + STEPS_PER_DAY]
        return out


def tow_bin(weekday, minute, bin_minutes: int):
    return (int(weekday) * STEPS_PER_DAY + np.asarray(minute)) // bin_minutes


def build_features(spec: FeatureSpec, t: int, ctx: DayContext) -> FeatureVector:
    if not 0 <= t < STEPS_PER_DAY:
        raise ValueError("t must index a minute of the day")
    x = np.zeros(spec.dim)
    b = int(tow_bin(ctx.weekday, t, spec.bin_minutes))
    x[b] = 1.0
    if spec.kind is FeatureKind.OL_RES:
        x[spec.n_bins] = ctx.lagged("temp_res", t, 0)
        x[spec.n_bins + 1] = ctx.lagged("y_total", t, 1)
    elif spec.kind is FeatureKind.OL_COM:
        x[spec.n_bins + b] = ctx.lagged("temp_com", t, 0)
    else:
        temp = ctx.lagged("temp_res", t, spec.lag)
        x[spec.n_bins:] = [temp, temp ** 2, temp ** 3, temp ** 4]
    return FeatureVector(x, spec)


def _day_block(spec: FeatureSpec, ctx: DayContext):
    """Sparse rows for one day plus a mask of rows with full history."""
    n = STEPS_PER_DAY
    rows = np.arange(n)
    bins = tow_bin(ctx.weekday, rows, spec.bin_minutes)
    if spec.kind is FeatureKind.OL_RES:
        extra = np.column_stack([ctx.day("temp_res"), ctx.lagged_day("y_total", 1)])
        data = np.column_stack([np.ones(n), extra]).ravel()
        cols = np.column_stack([bins, np.full(n, spec.n_bins), np.full(n, spec.n_bins + 1)]).ravel()
        width = 3
    elif spec.kind is FeatureKind.OL_COM:
        data = np.column_stack([np.ones(n), ctx.day("temp_com")]).ravel()
        cols = np.column_stack([bins, spec.n_bins + bins]).ravel()
        width = 2
    else:
        temp = ctx.lagged_day("temp_res", spec.lag)
        data = np.column_stack([np.ones(n), temp, temp ** 2, temp ** 3, temp ** 4]).ravel()
        cols = np.column_stack([bins] + [np.full(n, spec.n_bins + k) for k in range(4)]).ravel()
        width = 5
    valid = ~np.isnan(data.reshape(n, width)).any(axis=1)
    indptr = np.arange(0, n * width + 1, width)
    mat = sp.csr_matrix((np.nan_to_num(data), cols, indptr), shape=(n, spec.dim))
    return mat, valid


def design_matrix(spec: FeatureSpec, contexts, skip_insufficient: bool = False):
    """Stack the feature rows of several days.

    Returns ``(X, mask)`` where ``mask`` flags kept rows over the
    concatenated days. Without ``skip_insufficient`` a row lacking history
    raises :class:`InsufficientHistoryError`.
    """
    blocks, masks = [], []
    for ctx in contexts:
        mat, valid = _day_block(spec, ctx)
        if not valid.all() and not skip_insufficient:
            raise InsufficientHistoryError(
                f"{spec.kind.value} features need history before step {int(np.argmin(valid))}")
        blocks.append(mat[valid])
        masks.append(valid)
    return sp.vstack(blocks, format="csr"), np.concatenate(masks)


class LoadFeatures(BaseEstimator, TransformerMixin):
    """Transformer from a list of :class:`DayContext` to a sparse design matrix.

    Rows lacking lag history are dropped; ``mask_`` records which survived.
    """

    def __init__(self, kind="OL_RES", bin_minutes=15, lag=0):
        self.kind = kind
        self.bin_minutes = bin_minutes
        self.lag = lag

    @property
    def spec(self) -> FeatureSpec:
        return FeatureSpec(FeatureKind(self.kind), self.bin_minutes, self.lag)

    def fit(self, X, y=None):
        self.n_features_out_ = self.spec.dim
        return self

    def transform(self, X):
        mat, self.mask_ = design_matrix(self.spec, X, skip_insufficient=True)
        return mat
