"""Two-state Markov aggregate AC models: LTI bins, LTV interpolation, identification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._base import STEPS_PER_DAY, DegenerateModelError, as_series
from .features import DayContext
from .lag import LagMode, trailing_mean

# state order: 0 = off, 1 = on. A[dest, origin]; columns sum to one.


def stationary_state(A: np.ndarray) -> np.ndarray:
    """Stationary distribution of a 2x2 column-stochastic matrix."""
    p_on = A[1, 0]      # off -> on
    p_off = A[0, 1]     # on -> off
    total = p_on + p_off
    if total <= 0:
        return np.array([0.5, 0.5])
    return np.array([p_off / total, p_on / total])


@dataclass(frozen=True)
class LtiModel:
    A: np.ndarray
    p_bar: float
    bin_temp: float
    n_ac: int

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.shape != (2, 2):
            raise ValueError("A must be 2x2")
        if np.any(A < 0) or np.any(A > 1) or not np.allclose(A.sum(axis=0), 1.0, atol=1e-12):
            raise ValueError("A must be column-stochastic with entries in [0, 1]")
        if self.p_bar < 0 or self.n_ac < 0:
            raise ValueError("p_bar and n_ac must be non-negative")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def C(self) -> np.ndarray:
        return np.array([0.0, self.n_ac * self.p_bar])

    @property
    def name(self) -> str:
        return f"LTI{self.bin_temp:g}"

    def initial_state(self, ctx: DayContext | None = None) -> np.ndarray:
        return stationary_state(self.A)

    def dynamics(self, ctx: DayContext | None = None):
        A_seq = np.broadcast_to(self.A, (STEPS_PER_DAY, 2, 2))
        c_seq = np.full(STEPS_PER_DAY, self.n_ac * self.p_bar)
        return A_seq, c_seq


@dataclass(frozen=True)
class LtiBank:
    models: tuple
    t_min: float
    t_max: float
    delta_t: float

    def __post_init__(self):
        models = tuple(sorted(self.models, key=lambda m: m.bin_temp))
        if not models:
            raise ValueError("bank must contain at least one model")
        temps = np.array([m.bin_temp for m in models])
        if len(models) > 1 and not np.allclose(np.diff(temps), self.delta_t):
            raise ValueError("bin temperatures must be evenly spaced by delta_t")
        object.__setattr__(self, "models", models)

    @property
    def temps(self) -> np.ndarray:
        return np.array([m.bin_temp for m in self.models])

    @property
    def A_stack(self) -> np.ndarray:
        return np.stack([m.A for m in self.models])

    @property
    def p_bars(self) -> np.ndarray:
        return np.array([m.p_bar for m in self.models])

    @property
    def n_ac(self) -> int:
        return self.models[0].n_ac

    def closest(self, temp: float) -> LtiModel:
        """Model whose bin temperature is nearest (ties go to the lower bin)."""
        idx = int(np.argmin(np.abs(self.temps - temp)))
        return self.models[idx]


def interpolate_bank(bank: LtiBank, temps) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized LTV matrices: ``(A (n,2,2), p_bar (n,))`` at each temperature.

    Inside the grid: elementwise linear interpolation between bracketing
    bins. Beyond either end: linear extrapolation from the two end bins,
    then A entries are clamped to [0, 1] and columns renormalized.
    """
    temps = np.atleast_1d(np.asarray(temps, dtype=float))
    A_all, p_all = bank.A_stack, bank.p_bars
    m = len(bank.models)
    if m == 1:
        return np.repeat(A_all, temps.shape[0], axis=0), np.repeat(p_all, temps.shape[0])
    pos = (temps - bank.models[0].bin_temp) / bank.delta_t
    idx = np.clip(np.floor(pos).astype(int), 0, m - 2)
    frac = pos - idx
    f3 = frac[:, None, None]
    A = (1.0 - f3) * A_all[idx] + f3 * A_all[idx + 1]
    p_bar = (1.0 - frac) * p_all[idx] + frac * p_all[idx + 1]
    outside = (pos < 0) | (pos > m - 1)
    if outside.any():
        Ao = np.clip(A[outside], 0.0, 1.0)
        A[outside] = Ao / Ao.sum(axis=1, keepdims=True)
        p_bar[outside] = np.maximum(p_bar[outside], 0.0)
    return A, p_bar


def ltv_matrices(bank: LtiBank, effective_temp: float) -> tuple[np.ndarray, np.ndarray]:
    A, p_bar = interpolate_bank(bank, [effective_temp])
    return A[0], np.array([0.0, bank.n_ac * p_bar[0]])


@dataclass(frozen=True)
class LtvModel:
    bank: LtiBank
    mode: LagMode
    tau: int
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mode", LagMode(self.mode))
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not self.name:
            object.__setattr__(self, "name", "LTV1" if self.mode is LagMode.LAGGED else "LTV2")

    def effective_temps(self, ctx: DayContext) -> np.ndarray:
        if self.mode is LagMode.LAGGED:
            eff = ctx.lagged_day("temp_res", self.tau)
            if np.isnan(eff).any():
                # no history: hold the earliest available sample
                eff = np.where(np.isnan(eff), ctx.temp_res[0], eff)
            return eff
        return trailing_mean(ctx.temp_res, self.tau)[ctx.history:]

    def dynamics(self, ctx: DayContext):
        A_seq, p_bar = interpolate_bank(self.bank, self.effective_temps(ctx))
        return A_seq, self.bank.n_ac * p_bar

    def initial_state(self, ctx: DayContext) -> np.ndarray:
        A_seq, _ = interpolate_bank(self.bank, self.effective_temps(ctx)[:1])
        return stationary_state(A_seq[0])


# ------------------------------------------------------------------ identification

@dataclass(frozen=True)
class StepTally:
    """Device-aggregated counts per step.

    ``transitions[t, dest, origin]`` counts devices moving from ``origin``
    at ``t - 1`` to ``dest`` at ``t`` (zero at ``t = 0`` without a carried
    state). ``power_sum``/``power_count`` cover on-samples that pass the
    anomaly filter.
    """

    transitions: np.ndarray
    power_sum: np.ndarray
    power_count: np.ndarray
    last_on: np.ndarray

    @property
    def steps(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_devices(self) -> int:
        return self.last_on.shape[0]

    @classmethod
    def concatenate(cls, tallies) -> "StepTally":
        tallies = list(tallies)
        return cls(np.concatenate([t.transitions for t in tallies]),
                   np.concatenate([t.power_sum for t in tallies]),
                   np.concatenate([t.power_count for t in tallies]),
                   tallies[-1].last_on)


def tally_transitions(on, power_kw, prev_on=None, min_on_power_kw: float = 0.2,
                      max_power_ratio: float = 3.0) -> StepTally:
    on = np.asarray(on, dtype=bool)
    if on.ndim != 2 or on.shape[0] == 0:
        raise ValueError("need an (n_devices, n_steps) on matrix with at least one device")
    power = np.asarray(power_kw, dtype=float)
    if power.shape != on.shape:
        raise ValueError("power_kw must match on in shape")
    steps = on.shape[1]
    trans = np.zeros((steps, 2, 2))
    if prev_on is not None:
        prev_on = np.asarray(prev_on, dtype=bool)
        if prev_on.shape[0] != on.shape[0]:
            raise ValueError("device count changed between chunks")
        a, b = np.concatenate([prev_on[:, None], on[:, :-1]], axis=1), on
        sl = slice(0, steps)
    else:
        a, b = on[:, :-1], on[:, 1:]
        sl = slice(1, steps)
    trans[sl, 0, 0] = (~a & ~b).sum(axis=0)
    trans[sl, 1, 0] = (~a & b).sum(axis=0)     # off -> on
    trans[sl, 0, 1] = (a & ~b).sum(axis=0)     # on -> off
    trans[sl, 1, 1] = (a & b).sum(axis=0)

    masked = np.where(on, power, np.nan)
    with np.errstate(all="ignore"):
        median = np.nanmedian(np.where(on.any(axis=1)[:, None], masked, 0.0), axis=1)
    good = on & (power >= min_on_power_kw) & (power <= max_power_ratio * median[:, None])
    return StepTally(trans, np.where(good, power, 0.0).sum(axis=0), good.sum(axis=0).astype(float),
                     on[:, -1].copy())


class MarkovBankEstimator(BaseEstimator):
    """Counts on/off transitions per lagged-temperature bin across devices.

    Feed device on/off matrices chunk by chunk through :meth:`partial_fit`;
    consecutive chunks are treated as contiguous in time. ``bank_`` holds
    the identified :class:`LtiBank`.

    Parameters
    ----------
    t_min, t_max, delta_t : float
        Bin grid; bin ``m`` collects steps whose lagged temperature lies in
        ``[T_m - delta_t/2, T_m + delta_t/2)``.
    n_ac : int
        Device count used in the output row.
    min_on_power_kw, max_power_ratio : float
        On-samples below ``min_on_power_kw`` or above ``max_power_ratio``
        times the device's median on-power are excluded from ``p_bar``.
    """

    def __init__(self, t_min=74.0, t_max=99.0, delta_t=1.0, n_ac=None,
                 min_on_power_kw=0.2, max_power_ratio=3.0):
        self.t_min = t_min
        self.t_max = t_max
        self.delta_t = delta_t
        self.n_ac = n_ac
        self.min_on_power_kw = min_on_power_kw
        self.max_power_ratio = max_power_ratio

    @property
    def grid(self) -> np.ndarray:
        n = int(round((self.t_max - self.t_min) / self.delta_t)) + 1
        return self.t_min + self.delta_t * np.arange(n)

    def _bins(self, lagged_temp: np.ndarray) -> np.ndarray:
        grid = self.grid
        pos = np.floor((lagged_temp - grid[0] + self.delta_t / 2) / self.delta_t)
        pos = np.where(np.isfinite(pos), pos, -1).astype(int)
        return np.where((pos >= 0) & (pos < grid.shape[0]), pos, -1)

    def _reset(self):
        n = self.grid.shape[0]
        self.counts_ = np.zeros((n, 2, 2))       # [bin, dest, origin]
        self.power_sum_ = np.zeros(n)
        self.power_count_ = np.zeros(n)
        self._last_on = None
        self._last_bin = -1

    def partial_fit(self, on, power_kw, lagged_temp):
        """Accumulate one chunk.

        ``on`` and ``power_kw`` are (n_devices, n_steps); ``lagged_temp[t]``
        is the lagged outdoor temperature that bins step ``t`` (NaN drops
        the step).
        """
        if not hasattr(self, "counts_"):
            self._reset()
        tally = tally_transitions(on, power_kw, self._last_on,
                                  self.min_on_power_kw, self.max_power_ratio)
        return self.add_tally(tally, lagged_temp)

    def add_tally(self, tally: "StepTally", lagged_temp):
        """Accumulate pre-aggregated per-step counts (see :func:`tally_transitions`).

        Transitions into step ``t`` are binned by the origin step ``t - 1``.
        """
        lagged = as_series(lagged_temp, "lagged_temp", length=tally.steps, allow_nan=True)
        if not hasattr(self, "counts_"):
            self._reset()
        n_bins = self.grid.shape[0]
        bins = self._bins(lagged)
        origin = np.concatenate([[self._last_bin], bins[:-1]])
        keep = origin >= 0
        for dest in (0, 1):
            for org in (0, 1):
                self.counts_[:, dest, org] += np.bincount(
                    origin[keep], weights=tally.transitions[keep, dest, org], minlength=n_bins)
        step_keep = bins >= 0
        self.power_sum_ += np.bincount(bins[step_keep], weights=tally.power_sum[step_keep],
                                       minlength=n_bins)
        self.power_count_ += np.bincount(bins[step_keep], weights=tally.power_count[step_keep],
                                         minlength=n_bins)
        self._last_on = tally.last_on
        self._last_bin = int(bins[-1])
        if self.n_ac is None:
            self.n_ac = tally.n_devices
        self._finalize()
        return self

    def fit(self, on, power_kw, lagged_temp):
        self._reset()
        return self.partial_fit(on, power_kw, lagged_temp)

    def _finalize(self):
        grid = self.grid
        col = self.counts_.sum(axis=1)                    # [bin, origin]
        populated = col.sum(axis=1) > 0
        has_power = self.power_count_ > 0
        if not populated.any():
            raise DegenerateModelError("no transitions fell inside the temperature grid")
        A = np.empty_like(self.counts_)
        for m in range(grid.shape[0]):
            for origin in (0, 1):
                if col[m, origin] > 0:
                    A[m, :, origin] = self.counts_[m, :, origin] / col[m, origin]
                else:
                    A[m, :, origin] = np.eye(2)[:, origin]
        p_bar = np.divide(self.power_sum_, self.power_count_,
                          out=np.zeros_like(self.power_sum_), where=has_power)
        pop_idx = np.flatnonzero(populated)
        pow_idx = np.flatnonzero(has_power)
        models = []
        for m in range(grid.shape[0]):
            src = m if populated[m] else pop_idx[np.argmin(np.abs(pop_idx - m))]
            if has_power[m]:
                pb = p_bar[m]
            elif pow_idx.size:
                pb = p_bar[pow_idx[np.argmin(np.abs(pow_idx - m))]]
            else:
                pb = 0.0
            models.append(LtiModel(A[src], float(pb), float(grid[m]), int(self.n_ac)))
        self.bank_ = LtiBank(tuple(models), float(grid[0]), float(grid[-1]), float(self.delta_t))

    def get_bank(self) -> LtiBank:
        check_is_fitted(self, "bank_")
        return self.bank_


def identify_lti_bank(traces, temp, lag: int, t_min: float = 74.0, t_max: float = 99.0,
                      delta_t: float = 1.0, n_ac: int | None = None,
                      temp_history=None) -> LtiBank:
    """Identify the LTI bank from per-device traces aligned with ``temp``.

    ``traces`` is a sequence of :class:`~feederdisagg.plant.DeviceTrace` (or
    anything with ``on`` and ``power_kw``). ``temp_history`` optionally
    supplies earlier temperature samples so early steps can be binned.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("at least one device trace is required")
    on = np.stack([np.asarray(tr.on, dtype=bool) for tr in traces])
    power = np.stack([np.asarray(tr.power_kw, dtype=float) for tr in traces])
    temp = as_series(temp, "temp", length=on.shape[1])
    prefix = np.asarray([] if temp_history is None else temp_history, dtype=float)
    full = np.concatenate([prefix, temp])
    idx = prefix.shape[0] + np.arange(on.shape[1]) - lag
    lagged = np.where(idx >= 0, full[np.maximum(idx, 0)], np.nan)
    est = MarkovBankEstimator(t_min, t_max, delta_t, n_ac if n_ac is not None else on.shape[0])
    return est.fit(on, power, lagged).get_bank()
