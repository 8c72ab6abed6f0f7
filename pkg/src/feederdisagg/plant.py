"""Synthetic ground-truth feeder: air-conditioner population, other loads, weather.

The generator stands in for metered household, commercial and weather data.
Every signal is one-minute resolution with step 0 at midnight, and every
random draw is keyed on ``(seed, stream, day)`` so any day can be regenerated
bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy.signal import lfilter

from ._base import (
    STEPS_PER_DAY,
    CalibrationError,
    TimeSeries,
    Weekday,
    as_series,
)

DT_HOURS = 1.0 / 60.0

# stream identifiers for independent seeded generators
_S_DEVICES = 1
_S_WEATHER_RES = 2
_S_WEATHER_COM = 3
_S_OL = 4
_S_SOLAR = 5


def _rng(seed: int, stream: int, day: int = 0, extra: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, stream, int(day) + 1_000_000, extra])


# ---------------------------------------------------------------- parameters

@dataclass(frozen=True)
class TclParams:
    """First-order thermal model of one air-conditioned house.

    ``cooling_capacity`` is thermal kW removed while the compressor runs; it is
    kept separate from ``rated_electric_power`` so rescaling the electrical
    draw never changes the switching behaviour. ``setback`` raises the
    setpoint during the population's setback window.
    """

    thermal_resistance: float
    thermal_capacitance: float
    rated_electric_power: float
    setpoint: float
    deadband: float
    initial_air_temp: float
    initial_on: bool
    cooling_capacity: float
    setback: float = 0.0
    solar_gain: float = 0.0

    def __post_init__(self):
        for name in ("thermal_resistance", "thermal_capacitance",
                     "rated_electric_power", "setpoint", "deadband",
                     "cooling_capacity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.setback < 0 or self.solar_gain < 0:
            raise ValueError("setback and solar_gain must be non-negative")
        half = self.deadband / 2
        if not (self.setpoint - half <= self.initial_air_temp <= self.setpoint + half):
            raise ValueError("initial_air_temp must lie within the deadband")

    @property
    def time_constant_hours(self) -> float:
        return self.thermal_resistance * self.thermal_capacitance


@dataclass(frozen=True)
class PopulationSpec:
    n_houses: int = 2499
    n_ac: int = 2269
    target_res_mean_kw: float = 5800.0
    target_com_mean_kw: float = 2100.0
    seed: int = 0
    resistance_range: tuple[float, float] = (1.5, 2.5)
    # nominal 8-12 kWh/F, scaled down so R*C falls in 1.5-3.75 h
    capacitance_range: tuple[float, float] = (8.0, 12.0)
    capacitance_scale: float = 0.125
    setpoint_range: tuple[float, float] = (70.0, 78.0)
    deadband_range: tuple[float, float] = (1.0, 2.0)
    rated_power_range: tuple[float, float] = (2.5, 4.5)
    power_offset_kw: float = 0.1
    cop: float = 5.0
    setback_fraction: float = 0.35
    setback_range: tuple[float, float] = (3.0, 6.0)
    setback_window: tuple[int, int] = (8 * 60, 17 * 60)
    solar_gain_range: tuple[float, float] = (2.0, 8.0)   # F of indoor heating at full sun

    def __post_init__(self):
        if self.n_ac < 0 or self.n_houses < 0:
            raise ValueError("population counts must be non-negative")
        if self.n_ac > self.n_houses:
            raise ValueError("n_ac must not exceed n_houses")
        if not (self.target_res_mean_kw > 0 and self.target_com_mean_kw > 0):
            raise ValueError("demand targets must be positive")
        if not 0.0 <= self.setback_fraction <= 1.0:
            raise ValueError("setback_fraction must be in [0, 1]")

    def downscaled(self, factor: float) -> "PopulationSpec":
        """Shrink device counts and demand targets together (fast test plants)."""
        if not 0 < factor <= 1:
            raise ValueError("downscale factor must be in (0, 1]")
        return replace(
            self,
            n_houses=max(1, round(self.n_houses * factor)),
            n_ac=max(1, round(self.n_ac * factor)),
            target_res_mean_kw=self.target_res_mean_kw * factor,
            target_com_mean_kw=self.target_com_mean_kw * factor,
        )


@dataclass(frozen=True)
class WeatherParams:
    mean_f: float
    amplitude_f: float
    day_offset_sd: float = 3.0
    hourly_noise_sd: float = 0.6
    trough_hour: float = 5.0
    peak_hour: float = 16.0


RES_WEATHER = WeatherParams(mean_f=87.0, amplitude_f=11.0, day_offset_sd=1.0)
COM_WEATHER = WeatherParams(mean_f=76.0, amplitude_f=13.0, day_offset_sd=2.5)


@dataclass(frozen=True)
class OlParams:
    """Shape and noise settings for the synthetic other-load signals.

    Residential quantities are per house; commercial ones describe the
    uncalibrated two-building aggregate.
    """

    res_base_kw: float = 0.85
    res_temp_coef_kw: float = 0.012      # per house per F above res_temp_ref
    res_temp_ref_f: float = 78.0
    res_noise_kw: float = 45.0
    res_noise_phi: float = 0.985
    res_day_scale_sd: float = 0.04
    res_weekday_factor: tuple[float, ...] = (1.0, 0.98, 0.99, 1.0, 1.04)
    com_base_kw: float = 330.0
    com_peak_kw: float = 520.0
    com_temp_coef_kw: float = 9.0        # per F above com_temp_ref, occupancy weighted
    com_temp_ref_f: float = 65.0
    com_noise_kw: float = 25.0
    com_noise_phi: float = 0.9
    com_day_scale_sd: float = 0.05
    com_weekday_factor: tuple[float, ...] = (1.0, 1.02, 1.0, 0.98, 0.92)

    def noiseless(self) -> "OlParams":
        return replace(self, res_noise_kw=0.0, com_noise_kw=0.0,
                       res_day_scale_sd=0.0, com_day_scale_sd=0.0)


@dataclass(frozen=True)
class CalibrationFactors:
    res_ol_scale: float = 1.0
    com_scale: float = 1.0
    ac_power_scale: float = 1.0


# ---------------------------------------------------------------- TCL population

@dataclass
class DeviceTrace:
    device_id: int
    on: np.ndarray
    power_kw: np.ndarray
    air_temp: np.ndarray | None = None

    def __post_init__(self):
        self.on = np.asarray(self.on, dtype=bool)
        self.power_kw = np.asarray(self.power_kw, dtype=float)
        if self.on.shape != self.power_kw.shape:
            raise ValueError("on and power_kw must have equal lengths")
        if np.any(self.power_kw[~self.on] != 0) or np.any(self.power_kw < 0):
            raise ValueError("power must be zero while off and never negative")


@dataclass
class DayTraces:
    """Compact per-day device record: on matrix plus per-device draw."""

    on: np.ndarray                 # (n_ac, steps) bool
    device_power_kw: np.ndarray    # (n_ac,)
    air_temp: np.ndarray | None = None

    @property
    def power_kw(self) -> np.ndarray:
        return self.on * self.device_power_kw[:, None]

    def device_traces(self) -> list[DeviceTrace]:
        power = self.power_kw
        return [
            DeviceTrace(i, self.on[i], power[i],
                        None if self.air_temp is None else self.air_temp[i])
            for i in range(self.on.shape[0])
        ]


class TclPopulation:
    """Vectorized hysteretic thermal simulation of an AC population.

    Mode at step ``t`` is chosen from the air temperature at ``t`` and the
    previous mode; the air temperature then relaxes toward outdoor
    temperature, offset by ``R * cooling_capacity`` while on. State carries
    over between successive :meth:`simulate` calls.
    """

    def __init__(self, params: list[TclParams], setback_window=(8 * 60, 17 * 60),
                 power_scale: float = 1.0):
        if len(params) == 0:
            raise ValueError("population needs at least one device")
        self.params = list(params)
        col = lambda name: np.array([getattr(p, name) for p in self.params], dtype=float)
        self.R = col("thermal_resistance")
        self.C = col("thermal_capacitance")
        self.power = col("rated_electric_power") * power_scale
        self.setpoint = col("setpoint")
        self.half_band = col("deadband") / 2
        self.gain = self.R * col("cooling_capacity")
        self.setback = col("setback")
        self.solar_gain = col("solar_gain")
        self.decay = np.exp(-DT_HOURS / (self.R * self.C))
        self.setback_window = tuple(setback_window)
        self.air_temp = col("initial_air_temp")
        self.on = np.array([p.initial_on for p in self.params], dtype=bool)
        self.minute = 0

    @classmethod
    def sample(cls, spec: PopulationSpec, power_scale: float = 1.0) -> "TclPopulation":
        return cls(sample_tcl_params(spec), spec.setback_window, power_scale)

    def __len__(self):
        return len(self.params)

    def effective_setpoint(self, minute_of_day: int) -> np.ndarray:
        start, end = self.setback_window
        if start <= minute_of_day % STEPS_PER_DAY < end:
            return self.setpoint + self.setback
        return self.setpoint

    def burn_in(self, outdoor_f: float, steps: int) -> None:
        if steps > 0:
            self.simulate(np.full(steps, float(outdoor_f)), advance_clock=False)

    def simulate(self, temp, keep_air_temp: bool = False, advance_clock: bool = True,
                 solar=None) -> tuple[np.ndarray, DayTraces]:
        """Advance the population; ``solar`` is a clear-sky fraction in [0, 1] per step."""
        temp = as_series(temp, "outdoor temperature")
        n, steps = len(self), temp.shape[0]
        solar = np.zeros(steps) if solar is None else as_series(solar, "solar", length=steps)
        on_mat = np.empty((n, steps), dtype=bool)
        air = np.empty((n, steps)) if keep_air_temp else None
        theta, on = self.air_temp.copy(), self.on.copy()
        one_minus = 1.0 - self.decay
        minute = self.minute
        for t in range(steps):
            sp = self.effective_setpoint(minute + t) if advance_clock else self.setpoint
            on = np.where(on, theta > sp - self.half_band, theta >= sp + self.half_band)
            on_mat[:, t] = on
            if air is not None:
                air[:, t] = theta
            ambient = temp[t] + solar[t] * self.solar_gain
            theta = self.decay * theta + one_minus * (ambient - on * self.gain)
        self.air_temp, self.on = theta, on
        if advance_clock:
            self.minute = (minute + steps) % STEPS_PER_DAY
        traces = DayTraces(on_mat, self.power.copy(), air)
        y_ac = (on_mat * self.power[:, None]).sum(axis=0)
        return y_ac, traces


def sample_tcl_params(spec: PopulationSpec) -> list[TclParams]:
    rng = _rng(spec.seed, _S_DEVICES)
    n = spec.n_ac
    u = lambda r: rng.uniform(r[0], r[1], n)
    R = u(spec.resistance_range)
    C = u(spec.capacitance_range) * spec.capacitance_scale
    sp = u(spec.setpoint_range)
    db = u(spec.deadband_range)
    rated = u(spec.rated_power_range)
    power = rated + rng.uniform(-spec.power_offset_kw, spec.power_offset_kw, n)
    air0 = sp + (rng.uniform(size=n) - 0.5) * db
    on0 = rng.uniform(size=n) < 0.5
    has_setback = rng.uniform(size=n) < spec.setback_fraction
    setback = np.where(has_setback, u(spec.setback_range), 0.0)
    solar = u(spec.solar_gain_range)
    return [
        TclParams(R[i], C[i], power[i], sp[i], db[i], air0[i], bool(on0[i]),
                  spec.cop * rated[i], setback[i], solar[i])
        for i in range(n)
    ]


def simulate_tcl_population(spec: PopulationSpec, temp,
                            keep_air_temp: bool = False,
                            burn_in_steps: int = 0) -> tuple[TimeSeries, list[DeviceTrace]]:
    """Simulate a freshly sampled population over one day of outdoor temperature."""
    temp = as_series(temp, "temp", length=STEPS_PER_DAY)
    pop = TclPopulation.sample(spec)
    pop.burn_in(temp[0], burn_in_steps)
    y_ac, traces = pop.simulate(temp, keep_air_temp=keep_air_temp)
    return TimeSeries(y_ac), traces.device_traces()


# ---------------------------------------------------------------- weather

def _diurnal_shape(hours: np.ndarray, trough: float, peak: float) -> np.ndarray:
    """Asymmetric cosine: -1 at ``trough``, +1 at ``peak``, period 24 h."""
    h = np.mod(hours - trough, 24.0)
    rise = peak - trough
    return np.where(
        h <= rise,
        -np.cos(np.pi * h / rise),
        np.cos(np.pi * (h - rise) / (24.0 - rise)),
    )


def _hourly_temps(day: int, seed: int, params: WeatherParams, stream: int) -> np.ndarray:
    offsets = [params.day_offset_sd * _rng(seed, stream, d).standard_normal()
               for d in (day, day + 1)]
    hours = np.arange(25, dtype=float)
    drift = offsets[0] + (offsets[1] - offsets[0]) * hours / 24.0
    noise = _rng(seed, stream, day, 1).normal(0.0, params.hourly_noise_sd, 25)
    # hour 24 is hour 0 of the following day
    noise[24] = _rng(seed, stream, day + 1, 1).normal(0.0, params.hourly_noise_sd, 25)[0]
    base = params.mean_f + params.amplitude_f * _diurnal_shape(
        hours, params.trough_hour, params.peak_hour)
    return base + drift + noise


def interpolate_hourly(hourly) -> np.ndarray:
    """Linear interpolation of 25 hourly samples (hours 0..24) to 1440 minutes."""
    hourly = as_series(hourly, "hourly", length=25)
    return np.interp(np.arange(STEPS_PER_DAY) / 60.0, np.arange(25.0), hourly)


def synth_weather(day_index: int, seed: int, res: WeatherParams = RES_WEATHER,
                  com: WeatherParams = COM_WEATHER) -> tuple[TimeSeries, TimeSeries]:
    start = day_index * STEPS_PER_DAY
    t_res = interpolate_hourly(_hourly_temps(day_index, seed, res, _S_WEATHER_RES))
    t_com = interpolate_hourly(_hourly_temps(day_index, seed, com, _S_WEATHER_COM))
    return TimeSeries(t_res, start), TimeSeries(t_com, start)


def synth_solar(day_index: int, seed: int, clearness_range=(0.2, 1.0),
                cloud_sd: float = 0.15) -> np.ndarray:
    """Unmetered solar driver in [0, 1]: daylight bell times a cloudy-sky factor.

    Each day draws a mean clearness; hourly clouds perturb it. Models never
    see this signal, so it shows up as day-to-day AC error.
    """
    rng = _rng(seed, _S_SOLAR, day_index)
    clear = rng.uniform(*clearness_range)
    hourly = np.clip(clear + rng.normal(0.0, cloud_sd, 25), 0.0, 1.0)
    h = np.arange(STEPS_PER_DAY) / 60.0
    daylight = np.clip(np.sin(np.pi * (h - 6.0) / 14.0), 0.0, None)
    return daylight * interpolate_hourly(hourly)


# ---------------------------------------------------------------- other loads

@lru_cache(maxsize=None)
def _residential_shape() -> np.ndarray:
    """Double-peak daily shape (mean 1) truncated to four daily harmonics."""
    h = np.arange(STEPS_PER_DAY) / 60.0
    vm = lambda mu, kappa: np.exp(kappa * (np.cos(2 * np.pi * (h - mu) / 24.0) - 1))
    raw = 0.55 + 0.35 * vm(7.5, 6.0) + 0.75 * vm(19.5, 4.0) - 0.15 * vm(3.5, 3.0)
    spec = np.fft.rfft(raw)
    spec[5:] = 0.0
    shape = np.fft.irfft(spec, STEPS_PER_DAY)
    shape.setflags(write=False)
    return shape / shape.mean()


def occupancy_trapezoid(minutes: np.ndarray | None = None) -> np.ndarray:
    """0 before 06:00, ramps to 1 by 09:00, plateau, ramps to 0 from 17:00 to 21:00."""
    if minutes is None:
        minutes = np.arange(STEPS_PER_DAY)
    h = np.asarray(minutes, dtype=float) / 60.0
    return np.interp(h, [0, 6, 9, 17, 21, 24], [0, 0, 1, 1, 0, 0])


def _ar1(rng: np.random.Generator, n: int, sd: float, phi: float) -> np.ndarray:
    if sd == 0:
        return np.zeros(n)
    innov = rng.standard_normal(n) * sd * np.sqrt(1 - phi * phi)
    prev = rng.standard_normal() * sd
    out, _ = lfilter([1.0], [1.0, -phi], innov, zi=[phi * prev])
    return out


def base_ol_profiles(spec: PopulationSpec, day_of_week, params: OlParams = OlParams()
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic residential and commercial profiles with no noise or weather."""
    wd = Weekday.parse(day_of_week)
    res = spec.n_houses * params.res_base_kw * params.res_weekday_factor[wd] * _residential_shape()
    occ = occupancy_trapezoid()
    com = params.com_base_kw + params.com_peak_kw * params.com_weekday_factor[wd] * occ
    return res, com


def synth_ol(spec: PopulationSpec, temp_res, temp_com, day_of_week, seed: int,
             params: OlParams = OlParams(), res_scale: float = 1.0,
             com_scale: float = 1.0) -> tuple[TimeSeries, TimeSeries]:
    t_res = as_series(temp_res, "temp_res", length=STEPS_PER_DAY)
    t_com = as_series(temp_com, "temp_com", length=STEPS_PER_DAY)
    wd = Weekday.parse(day_of_week)
    rng = _rng(seed, _S_OL)
    res_day = 1.0 + params.res_day_scale_sd * rng.standard_normal()
    com_day = 1.0 + params.com_day_scale_sd * rng.standard_normal()
    base_res, _ = base_ol_profiles(spec, wd, params)
    occ = occupancy_trapezoid()

    res = base_res * res_day
    res = res + spec.n_houses * params.res_temp_coef_kw * np.maximum(t_res - params.res_temp_ref_f, 0.0)
    res = res + _ar1(rng, STEPS_PER_DAY, params.res_noise_kw, params.res_noise_phi)

    com = (params.com_base_kw
           + params.com_peak_kw * params.com_weekday_factor[wd] * occ) * com_day
    com = com + params.com_temp_coef_kw * (0.3 + occ) * np.maximum(t_com - params.com_temp_ref_f, 0.0)
    com = com + _ar1(rng, STEPS_PER_DAY, params.com_noise_kw, params.com_noise_phi)

    res = np.maximum(res, 0.0) * res_scale
    com = np.maximum(com, 0.0) * com_scale
    return TimeSeries(res), TimeSeries(com)


# ---------------------------------------------------------------- plant days

@dataclass(frozen=True)
class PlantDay:
    day_index: int
    day_of_week: Weekday
    y_total: TimeSeries
    y_ac: TimeSeries
    y_ol_res: TimeSeries
    y_ol_com: TimeSeries
    temp_res: TimeSeries
    temp_com: TimeSeries

    @classmethod
    def assemble(cls, day_index, y_ac, y_ol_res, y_ol_com, temp_res, temp_com):
        start = day_index * STEPS_PER_DAY
        ac, res, com = (as_series(v, length=STEPS_PER_DAY) for v in (y_ac, y_ol_res, y_ol_com))
        total = ac + res + com
        ts = lambda v: TimeSeries(v, start)
        return cls(day_index, Weekday(day_index % 5), ts(total), ts(ac), ts(res), ts(com),
                   ts(np.asarray(temp_res)), ts(np.asarray(temp_com)))

    @property
    def y_ol(self) -> np.ndarray:
        return self.y_ol_res.values + self.y_ol_com.values


def calibrate_plant(spec: PopulationSpec, days: list[PlantDay]) -> CalibrationFactors:
    """Mean-matching scale factors for residential other load and commercial load.

    AC power is left unscaled; the residential other-load factor absorbs the
    gap between the residential target and the simulated AC mean.
    """
    if len(days) == 0:
        raise CalibrationError("calibration needs at least one day")
    mean_ac = float(np.mean([d.y_ac.values.mean() for d in days]))
    mean_res = float(np.mean([d.y_ol_res.values.mean() for d in days]))
    mean_com = float(np.mean([d.y_ol_com.values.mean() for d in days]))
    if mean_res <= 0 or mean_com <= 0:
        raise CalibrationError("uncalibrated other-load mean is zero")
    gap = spec.target_res_mean_kw - mean_ac
    if gap <= 0:
        raise CalibrationError(
            f"AC mean {mean_ac:.1f} kW already exceeds the residential target")
    return CalibrationFactors(gap / mean_res, spec.target_com_mean_kw / mean_com, 1.0)


@dataclass
class PlantGenerator:
    """Sequential day generator; TCL state carries across consecutive days.

    The first ``calibration_days`` days are generated unscaled, used to fit
    :class:`CalibrationFactors`, then rescaled before being yielded.
    """

    spec: PopulationSpec = field(default_factory=PopulationSpec)
    ol_params: OlParams = field(default_factory=OlParams)
    res_weather: WeatherParams = RES_WEATHER
    com_weather: WeatherParams = COM_WEATHER
    calibration_days: int = 5
    burn_in_steps: int = 360
    factors: CalibrationFactors | None = None

    def _raw_day(self, pop: TclPopulation, d: int, keep_air_temp: bool):
        t_res, t_com = synth_weather(d, self.spec.seed, self.res_weather, self.com_weather)
        if d == 0:
            pop.burn_in(t_res.values[0], self.burn_in_steps)
        solar = synth_solar(d, self.spec.seed)
        y_ac, traces = pop.simulate(t_res.values, keep_air_temp=keep_air_temp, solar=solar)
        ol_seed = int(_rng(self.spec.seed, _S_OL, d).integers(2**31))
        res, com = synth_ol(self.spec, t_res, t_com, d % 5, ol_seed, self.ol_params)
        day = PlantDay.assemble(d, y_ac, res.values, com.values, t_res.values, t_com.values)
        return day, traces

    def _scaled(self, day: PlantDay) -> PlantDay:
        f = self.factors
        return PlantDay.assemble(day.day_index, day.y_ac.values * f.ac_power_scale,
                                 day.y_ol_res.values * f.res_ol_scale,
                                 day.y_ol_com.values * f.com_scale,
                                 day.temp_res.values, day.temp_com.values)

    def iter_days(self, n_days: int, keep_air_temp: bool = False
                  ) -> Iterator[tuple[PlantDay, DayTraces]]:
        """Yield ``(day, traces)`` for days ``0..n_days-1``.

        Calibration always uses the first ``calibration_days`` days, even if
        fewer are requested, so a day's values never depend on ``n_days``.
        """
        pop = TclPopulation.sample(self.spec)
        buffered = []
        n_cal = self.calibration_days if self.factors is None else 0
        for d in range(n_cal):
            buffered.append(self._raw_day(pop, d, keep_air_temp and d < n_days))
        if self.factors is None:
            if not buffered:
                raise CalibrationError("calibration needs at least one day")
            self.factors = calibrate_plant(self.spec, [b[0] for b in buffered])
        for day, traces in buffered[:n_days]:
            yield self._scaled(day), traces
        if n_cal > n_days:
            return
        for d in range(n_cal, n_days):
            day, traces = self._raw_day(pop, d, keep_air_temp)
            yield self._scaled(day), traces

    def generate(self, n_days: int) -> list[PlantDay]:
        return [day for day, _ in self.iter_days(n_days)]
