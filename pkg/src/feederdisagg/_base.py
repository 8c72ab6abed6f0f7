"""Shared value types, exceptions and input validation helpers."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

STEPS_PER_DAY = 1440
STEP_SECONDS = 60
MINUTES_PER_WEEK = 7 * STEPS_PER_DAY


class InsufficientHistoryError(ValueError):
    """A lagged feature reaches further back than the supplied history."""


class CalibrationError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


class DegenerateModelError(ValueError):
    pass


class FilterDivergenceError(ArithmeticError):
    pass


class ConfigError(ValueError):
    pass


class Weekday(enum.IntEnum):
    MON = 0
    TUE = 1
    WED = 2
    THU = 3
    FRI = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, value) -> "Weekday":
        if isinstance(value, Weekday):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().upper()[:3]
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown weekday {value!r}") from None


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar signal with a 60 s step.

    ``start`` is the index of the first sample on the global step axis.
    """

    values: np.ndarray
    start: int = 0
    step_seconds: int = STEP_SECONDS

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("TimeSeries values must be one-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __getitem__(self, item):
        return self.values[item]


def as_series(x, name: str = "signal", length: int | None = None,
              allow_nan: bool = False) -> np.ndarray:
    """Return ``x`` as a 1-d float array, validating shape and finiteness."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not allow_nan and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return arr
