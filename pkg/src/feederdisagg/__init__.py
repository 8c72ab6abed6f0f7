"""Real-time disaggregation of feeder demand into air-conditioning and other load."""

from ._base import (
    CalibrationError,
    ConfigError,
    DegenerateModelError,
    FilterDivergenceError,
    InsufficientHistoryError,
    SingularSystemError,
    TimeSeries,
    Weekday,
)
from .dfs import DayResult, DfsConfig, ModelSet, PreparedDay, UpdateMethod, run_day
from .kalman import KfState, NoiseEstimates, estimate_Q, estimate_R, kf_step, run_kf_bank

__version__ = "0.1.0"
