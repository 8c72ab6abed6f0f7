"""Plant generation, model fitting and scenario runs for one configuration."""

from __future__ import annotations

import itertools
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._base import STEPS_PER_DAY, Weekday
from ..dfs import DayResult, DfsConfig, ModelSet, PreparedDay, run_day
from ..kalman import NoiseEstimates, estimate_Q, estimate_R, run_kf_bank
from ..models import (
    AcMlrModel,
    DayContext,
    FeatureKind,
    FeatureSpec,
    LagMode,
    LtvModel,
    MarkovBankEstimator,
    ModelBundle,
    OlMlrModel,
    StepTally,
    estimate_lag,
    fit_mlr,
    fit_tod,
    tally_transitions,
)
from ..plant import PlantDay, PlantGenerator
from . import io
from .config import ScenarioConfig
from .metrics import DayMetrics, Metrics, rmse

MAX_LAG_STEPS = 360
MAX_WINDOW_STEPS = 480


@dataclass
class Study:
    """Generated plant days plus everything derived from them.

    ``days[d]`` is synthetic day ``d``; ``tally`` aggregates device
    transitions over the LTI training window when it was collected.
    """

    config: ScenarioConfig
    days: list
    tally: StepTally | None = None
    bundle: ModelBundle | None = None
    _contexts: dict = field(default_factory=dict, repr=False)
    _prepared: dict = field(default_factory=dict, repr=False)
    _noise: dict = field(default_factory=dict, repr=False)

    @property
    def lti_window(self) -> range:
        start = self.config.test_start
        return range(max(0, start - self.config.lti_days), start)

    @property
    def mlr_window(self) -> range:
        start = self.config.test_start
        return range(max(1, start - self.config.mlr_days), start)

    @property
    def noise_window(self) -> range:
        start = self.config.test_start
        return range(max(1, start - self.config.noise_days), start)

    def context(self, d: int) -> DayContext:
        if d not in self._contexts:
            day = self.days[d]
            parts = [self.days[d - 1], day] if d > 0 else [day]
            cat = lambda attr: np.concatenate([getattr(p, attr).values for p in parts])
            self._contexts[d] = DayContext(day.day_of_week, cat("temp_res"), cat("temp_com"),
                                           cat("y_total"), history=STEPS_PER_DAY * (len(parts) - 1))
        return self._contexts[d]

    def model_sets(self) -> dict:
        return build_model_sets(self.require_bundle())

    def require_bundle(self) -> ModelBundle:
        if self.bundle is None:
            raise RuntimeError("no model bundle; call fit_bundle first")
        return self.bundle

    def prepared(self, model_set: ModelSet, d: int) -> PreparedDay:
        key = (ModelSet(model_set), d)
        if key not in self._prepared:
            pairs = self.model_sets()[key[0]]
            self._prepared[key] = PreparedDay.build(pairs, self.context(d))
        return self._prepared[key]

    def noise(self) -> dict:
        if not self._noise:
            self._noise = estimate_noise(self, self.model_sets()[ModelSet.KF])
        return self._noise


def generate_study(config: ScenarioConfig, collect_tally: bool = True, on_traces=None,
                   generator: PlantGenerator | None = None) -> Study:
    """Generate plant days ``0..max(config.days)``.

    ``on_traces(day_index, traces)`` is called for every generated day.
    ``generator`` overrides the default plant built from ``config``.
    """
    gen = generator if generator is not None else PlantGenerator(config.population_spec())
    n_days = config.days[-1] + 1
    start = config.test_start
    lti = range(max(0, start - config.lti_days), start)
    days, tallies = [], []
    prev_on = None
    for day, traces in gen.iter_days(n_days):
        days.append(day)
        if collect_tally and day.day_index in lti:
            tallies.append(tally_transitions(traces.on, traces.power_kw,
                                             prev_on if day.day_index > lti.start else None))
        prev_on = traces.on[:, -1].copy()
        if on_traces is not None:
            on_traces(day.day_index, traces)
    tally = StepTally.concatenate(tallies) if tallies else None
    return Study(config, days, tally)


# ------------------------------------------------------------------ fitting

def _concat(days, attr):
    return np.concatenate([getattr(d, attr).values if attr != "y_ol" else d.y_ol for d in days])


def fit_bundle(study: Study) -> ModelBundle:
    cfg = study.config
    if study.tally is None:
        raise RuntimeError("study was generated without device-transition tallies")
    start = cfg.test_start
    days = study.days

    tods = []
    for wd in Weekday:
        prior = [d for d in range(start) if d % 5 == int(wd)]
        if not prior:
            raise ValueError(f"no history day for weekday {wd.label}")
        tods.append(fit_tod(days[prior[-1]].y_ol, wd))

    mlr_days = [days[d] for d in study.mlr_window]
    if not mlr_days:
        raise ValueError("MLR window is empty")
    y_ac, temp = _concat(mlr_days, "y_ac"), _concat(mlr_days, "temp_res")
    tau_l = estimate_lag(y_ac, temp, MAX_LAG_STEPS, LagMode.LAGGED)
    tau_w = estimate_lag(y_ac, temp, MAX_WINDOW_STEPS, LagMode.MOVING_AVG)

    ctxs = [study.context(d) for d in study.mlr_window]
    bin_minutes = cfg.tow_bin_minutes
    res = fit_mlr(ctxs, [d.y_ol_res.values for d in mlr_days],
                  FeatureSpec(FeatureKind.OL_RES, bin_minutes), cfg.ridge)
    com = fit_mlr(ctxs, [d.y_ol_com.values for d in mlr_days],
                  FeatureSpec(FeatureKind.OL_COM, bin_minutes), cfg.ridge)
    ac = fit_mlr(ctxs, [d.y_ac.values for d in mlr_days],
                 FeatureSpec(FeatureKind.AC, bin_minutes, lag=tau_l), cfg.ridge)

    window = study.lti_window
    prefix = days[window.start - 1].temp_res.values if window.start > 0 else np.empty(0)
    full = np.concatenate([prefix, _concat([days[d] for d in window], "temp_res")])
    idx = prefix.shape[0] + np.arange(study.tally.steps) - tau_l
    lagged = np.where(idx >= 0, full[np.maximum(idx, 0)], np.nan)
    est = MarkovBankEstimator(n_ac=cfg.n_ac).add_tally(study.tally, lagged)
    bank = est.get_bank()

    study.bundle = ModelBundle(
        tuple(tods), OlMlrModel(res, com), AcMlrModel(ac), bank,
        LtvModel(bank, LagMode.LAGGED, tau_l), LtvModel(bank, LagMode.MOVING_AVG, tau_w),
    )
    study._prepared.clear()
    study._noise.clear()
    return study.bundle


def build_model_sets(bundle: ModelBundle) -> dict:
    ols = bundle.ol_models()
    full = [(ac, ol) for ac in bundle.ac_models() for ol in ols]
    red = [(ac, ol) for ac, ol in full if ac.name in (bundle.ac_mlr.name, bundle.ltv1.name, bundle.ltv2.name)]
    kf = [(ac, ol) for ac, ol in red if ac.name in (bundle.ltv1.name, bundle.ltv2.name)]
    return {ModelSet.FULL: full, ModelSet.RED: red, ModelSet.KF: kf}


def estimate_noise(study: Study, pairs) -> dict:
    window = list(study.noise_window)
    ctxs = [study.context(d) for d in window]
    q_cache, r_cache, out = {}, {}, {}
    for ac, ol in pairs:
        if ac.name not in q_cache:
            q_cache[ac.name] = estimate_Q(ac, [(c, study.days[d].y_ac.values) for c, d in zip(ctxs, window)])
        if ol.name not in r_cache:
            r_cache[ol.name] = estimate_R(ol, [(c, study.days[d].y_ol) for c, d in zip(ctxs, window)])
        out[f"{ac.name}+{ol.name}"] = NoiseEstimates(q_cache[ac.name], r_cache[ol.name], (ac.name, ol.name))
    return out


# ------------------------------------------------------------------ scenarios

@dataclass
class ScenarioResult:
    metrics: Metrics
    day_results: dict
    kf_results: dict = field(default_factory=dict)

    @property
    def mean_rmse_ac(self) -> float:
        return self.metrics.ac.mean


def _day_metrics(d: int, day: PlantDay, res: DayResult) -> DayMetrics:
    return DayMetrics(d, rmse(res.y_total_hat, day.y_total.values),
                      rmse(res.y_ac_hat, day.y_ac.values), rmse(res.y_ol_hat, day.y_ol))


def run_scenario(study: Study, dfs_config: DfsConfig | None = None, out_dir=None) -> ScenarioResult:
    cfg = study.config
    dfs_config = dfs_config or cfg.dfs_config()
    out = Path(out_dir) if out_dir is not None else None
    results, per_day = {}, []
    for d in cfg.days:
        day = study.days[d]
        res = run_day(dfs_config, study.prepared(dfs_config.model_set, d), day.y_total.values)
        results[d] = res
        per_day.append(_day_metrics(d, day, res))
        if out is not None:
            io.write_dfs_day(out / f"dfs_day_{d}.csv", day.y_ac.values, res.y_ac_hat, day.y_ol,
                             res.y_ol_hat, day.y_total.values, res.y_total_hat)
            io.write_weights_day(out / f"weights_day_{d}.csv", res.pair_ids, res.weights)
    metrics = Metrics(tuple(per_day))
    if out is not None:
        io.write_rows(out / "metrics.csv", io.METRICS_HEADER,
                      ([m.day, m.rmse_total, m.rmse_ac, m.rmse_ol] for m in per_day))
    return ScenarioResult(metrics, results)


def run_kf(study: Study, out_dir=None) -> dict:
    pairs = study.model_sets()[ModelSet.KF]
    noise = study.noise()
    out = Path(out_dir) if out_dir is not None else None
    results = {}
    for d in study.config.days:
        day = study.days[d]
        res = run_kf_bank(pairs, noise, study.context(d), day.y_total.values, day.y_ac.values)
        results[d] = res
        if out is not None:
            io.write_kf_day(out / f"kf_day_{d}.csv", res.pair_ids, res.estimates)
    if out is not None:
        io.write_rows(out / "kf_summary.csv", io.KF_SUMMARY_HEADER, _kf_summary_rows(results))
    return results


def _kf_summary_rows(results: dict):
    for d, res in results.items():
        best = int(np.argmin(res.rmse))
        for p, pid in enumerate(res.pair_ids):
            yield d, pid, float(res.rmse[p]), p == best


def kf_bkf_akf(results: dict) -> tuple[np.ndarray, np.ndarray]:
    days = sorted(results)
    return (np.array([results[d].bkf for d in days]), np.array([results[d].akf for d in days]))


# ------------------------------------------------------------------ sweeps

_SWEEP_STATE = {}


def _mean_ac_rmse(cfg: DfsConfig, prepared, truths, totals) -> float:
    return float(np.mean([rmse(run_day(cfg, p, y).y_ac_hat, ac)
                          for p, y, ac in zip(prepared, totals, truths)]))


def _sweep_cell(cfg: DfsConfig) -> float:
    s = _SWEEP_STATE
    return _mean_ac_rmse(cfg, s["prepared"], s["truths"], s["totals"])


def _run_cells(study: Study, configs: list, n_jobs: int | None) -> list:
    cfg = study.config
    ms = configs[0].model_set
    _SWEEP_STATE.update(
        prepared=[study.prepared(ms, d) for d in cfg.days],
        truths=[study.days[d].y_ac.values for d in cfg.days],
        totals=[study.days[d].y_total.values for d in cfg.days],
    )
    n_jobs = n_jobs or cfg.n_jobs or os.cpu_count() or 1
    try:
        if n_jobs <= 1 or len(configs) == 1:
            return [_sweep_cell(c) for c in configs]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as pool:
            return list(pool.map(_sweep_cell, configs, chunksize=max(1, len(configs) // (4 * n_jobs))))
    finally:
        _SWEEP_STATE.clear()


def sweep_eta(study: Study, n_jobs: int | None = None, out_dir=None) -> list:
    """Mean AC RMSE over every (eta_s, eta_r) pair at the configured lambda."""
    cfg = study.config
    combos = list(itertools.product(cfg.sweep_eta_s, cfg.sweep_eta_r))
    configs = [cfg.dfs_config(eta_s=es, eta_r=er) for es, er in combos]
    values = _run_cells(study, configs, n_jobs)
    rows = [(es, er, cfg.lam, v) for (es, er), v in zip(combos, values)]
    if out_dir is not None:
        io.write_rows(Path(out_dir) / "sweep_eta.csv", io.SWEEP_HEADER, rows)
    return rows


def sweep_lambda(study: Study, n_jobs: int | None = None, out_dir=None) -> list:
    cfg = study.config
    configs = [cfg.dfs_config(lam=lam) for lam in cfg.sweep_lambda]
    values = _run_cells(study, configs, n_jobs)
    rows = list(zip(cfg.sweep_lambda, values))
    if out_dir is not None:
        io.write_rows(Path(out_dir) / "sweep_lambda.csv", io.LAMBDA_HEADER, rows)
    return rows
