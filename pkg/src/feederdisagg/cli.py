"""Command-line entry point: ``feederdisagg {plant,fit,dfs,kf,sweep,report}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ._base import ConfigError
from ._csv import read_csv, write_csv
from .harness import io
from .harness.config import ScenarioConfig, parse_config, parse_days
from .harness.metrics import Metrics, DayMetrics
from .harness.pipeline import (
    fit_bundle,
    generate_study,
    run_kf,
    run_scenario,
    sweep_eta,
    sweep_lambda,
)
from .models import MissingModelError, load_bundle, save_bundle

REPORT_HEADER = ["scenario", "metric", "mean_kw", "min_kw", "max_kw"]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, help="plant seed")
    common.add_argument("--days", help="test days, e.g. 90-94 or 90,92")
    common.add_argument("--set", dest="model_set", choices=["full", "red", "kf"])
    common.add_argument("--method", type=int, choices=[1, 2])
    common.add_argument("--bundle", type=Path, help="model bundle directory (default <out>/bundle)")
    common.add_argument("--jobs", type=int, help="worker processes for sweeps")

    p = argparse.ArgumentParser(prog="feederdisagg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    plant = sub.add_parser("plant", parents=[common], help="generate plant days")
    plant.add_argument("--traces", action="store_true",
                       help="also write per-device traces for the test days")
    sub.add_parser("fit", parents=[common], help="identify the model bundle")
    sub.add_parser("dfs", parents=[common], help="run a DFS scenario")
    sub.add_parser("kf", parents=[common], help="run the Kalman benchmark bank")
    sub.add_parser("sweep", parents=[common], help="learning-rate and lambda grid runs")
    sub.add_parser("report", parents=[common], help="aggregate metrics into a table")
    return p


def load_config(args) -> ScenarioConfig:
    cfg = parse_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.days:
        try:
            changes["days"] = parse_days(args.days)
        except ValueError as exc:
            raise ConfigError(f"--days: {exc}") from None
    if args.model_set:
        changes["model_set"] = args.model_set
    if args.method:
        changes["update_method"] = args.method
    if args.jobs:
        changes["n_jobs"] = args.jobs
    changes["out_dir"] = args.out
    changes["bundle_path"] = args.bundle or args.out / "bundle"
    return cfg.with_(**changes)


def _study_with_bundle(cfg: ScenarioConfig):
    bundle = load_bundle(cfg.bundle_path)
    study = generate_study(cfg, collect_tally=False)
    study.bundle = bundle
    return study


def cmd_plant(cfg: ScenarioConfig, args) -> None:
    out = cfg.out_dir / "plant"
    wanted = set(cfg.days) if args.traces else set()

    def on_traces(d, traces):
        if d in wanted:
            io.write_device_traces(traces, out / f"device_traces_{d}.csv")

    study = generate_study(cfg, collect_tally=False, on_traces=on_traces)
    for day in study.days:
        io.write_plant_day(day, out / f"plant_day_{day.day_index}.csv")
    print(f"wrote {len(study.days)} plant days to {out}")


def cmd_fit(cfg: ScenarioConfig, args) -> None:
    study = generate_study(cfg)
    bundle = fit_bundle(study)
    save_bundle(bundle, cfg.bundle_path)
    print(f"bundle: {len(bundle.lti_models())} LTI bins, tau_lag={bundle.ltv1.tau}, "
          f"tau_window={bundle.ltv2.tau} -> {cfg.bundle_path}")


def cmd_dfs(cfg: ScenarioConfig, args) -> None:
    study = _study_with_bundle(cfg)
    out = cfg.out_dir / "dfs" / cfg.scenario_label
    res = run_scenario(study, out_dir=out)
    m = res.metrics
    print(f"{cfg.scenario_label} eta_s={cfg.resolved_eta_s}: mean RMSE total {m.total.mean:.1f} kW, "
          f"AC {m.ac.mean:.1f} kW, OL {m.ol.mean:.1f} kW -> {out}")


def cmd_kf(cfg: ScenarioConfig, args) -> None:
    study = _study_with_bundle(cfg)
    out = cfg.out_dir / "kf"
    results = run_kf(study, out_dir=out)
    for d, r in results.items():
        print(f"day {d}: BKF {r.bkf:.1f} kW ({r.best_pair}), AKF {r.akf:.1f} kW")


def cmd_sweep(cfg: ScenarioConfig, args) -> None:
    study = _study_with_bundle(cfg)
    out = cfg.out_dir / "sweep" / cfg.scenario_label
    grid = sweep_eta(study, out_dir=out)
    curve = sweep_lambda(study, out_dir=out)
    best = min(grid, key=lambda r: r[3])
    lam_best = min(curve, key=lambda r: r[1])
    print(f"best eta_s={best[0]} eta_r={best[1]}: {best[3]:.1f} kW; "
          f"best lambda={lam_best[0]}: {lam_best[1]:.1f} kW -> {out}")


def _read_metrics(path: Path) -> Metrics:
    _, _, c = read_csv(path, io.METRICS_HEADER, {"day": int})
    return Metrics(tuple(DayMetrics(*row) for row in zip(
        c["day"], c["rmse_total_kw"], c["rmse_ac_kw"], c["rmse_ol_kw"])))


def build_report(out_dir: Path) -> list:
    rows = []
    for path in sorted((out_dir / "dfs").glob("*/metrics.csv")):
        m = _read_metrics(path)
        for name in ("total", "ac", "ol"):
            s = getattr(m, name)
            rows.append([f"dfs_{path.parent.name}", f"rmse_{name}", s.mean, s.min, s.max])
    summary = out_dir / "kf" / "kf_summary.csv"
    if summary.exists():
        _, _, c = read_csv(summary, io.KF_SUMMARY_HEADER, {"day": int, "pair_id": str, "is_bkf": int})
        per_day = {}
        for d, r in zip(c["day"], c["rmse_kw"]):
            per_day.setdefault(d, []).append(r)
        bkf = [min(v) for v in per_day.values()]
        akf = [sum(v) / len(v) for v in per_day.values()]
        for name, vals in (("bkf", bkf), ("akf", akf)):
            rows.append([name, "rmse_ac", sum(vals) / len(vals), min(vals), max(vals)])
    return rows


def cmd_report(cfg: ScenarioConfig, args) -> None:
    rows = build_report(cfg.out_dir)
    if not rows:
        raise MissingModelError(f"no scenario outputs under {cfg.out_dir}; run dfs or kf first")
    write_csv(cfg.out_dir / "report.csv", REPORT_HEADER, rows)
    print(f"{'scenario':<12} {'metric':<11} {'mean':>8} {'min':>8} {'max':>8}")
    for scen, metric, mean, lo, hi in rows:
        print(f"{scen:<12} {metric:<11} {mean:8.1f} {lo:8.1f} {hi:8.1f}")


COMMANDS = {"plant": cmd_plant, "fit": cmd_fit, "dfs": cmd_dfs, "kf": cmd_kf,
            "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, MissingModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
