"""CSV artifacts written and read by the harness."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .._csv import CsvFormatError, read_csv, write_csv
from ..plant import DayTraces, PlantDay

PLANT_HEADER = ["step", "y_total_kw", "y_ac_kw", "y_ol_res_kw", "y_ol_com_kw",
                "temp_res_f", "temp_com_f"]
TRACE_HEADER = ["step", "device_id", "on", "power_kw"]
DFS_HEADER = ["step", "y_ac_true_kw", "y_ac_hat_kw", "y_ol_true_kw", "y_ol_hat_kw",
              "y_total_kw", "y_total_hat_kw"]
KF_HEADER = ["step", "pair_id", "y_ac_hat_kw"]
KF_SUMMARY_HEADER = ["day", "pair_id", "rmse_kw", "is_bkf"]
METRICS_HEADER = ["day", "rmse_total_kw", "rmse_ac_kw", "rmse_ol_kw"]
SWEEP_HEADER = ["eta_s", "eta_r", "lambda", "mean_rmse_ac_kw"]
LAMBDA_HEADER = ["lambda", "mean_rmse_ac_kw"]


def write_plant_day(day: PlantDay, path) -> Path:
    cols = [day.y_total.values, day.y_ac.values, day.y_ol_res.values, day.y_ol_com.values,
            day.temp_res.values, day.temp_com.values]
    return write_csv(path, PLANT_HEADER,
                     ([t, *(float(c[t]) for c in cols)] for t in range(cols[0].shape[0])))


def read_plant_day(path, day_index: int | None = None) -> PlantDay:
    """Read a plant CSV; the day index defaults to the ``_<d>`` file suffix."""
    path = Path(path)
    if day_index is None:
        try:
            day_index = int(path.stem.rsplit("_", 1)[-1])
        except ValueError:
            raise CsvFormatError(f"{path}: cannot infer the day index from the file name") from None
    _, _, c = read_csv(path, PLANT_HEADER, {"step": int})
    if c["step"] != list(range(len(c["step"]))):
        raise CsvFormatError(f"{path}: steps are not 0..n-1 in order")
    day = PlantDay.assemble(day_index, np.array(c["y_ac_kw"]), np.array(c["y_ol_res_kw"]),
                            np.array(c["y_ol_com_kw"]), np.array(c["temp_res_f"]),
                            np.array(c["temp_com_f"]))
    if not np.array_equal(day.y_total.values, np.array(c["y_total_kw"])):
        raise CsvFormatError(f"{path}: y_total_kw is not the sum of its components")
    return day


def write_device_traces(traces: DayTraces, path) -> Path:
    on = traces.on
    power = traces.power_kw
    n_dev, steps = on.shape

    def rows():
        for t in range(steps):
            for i in range(n_dev):
                yield t, i, bool(on[i, t]), float(power[i, t])

    return write_csv(path, TRACE_HEADER, rows())


def read_device_traces(path) -> tuple[np.ndarray, np.ndarray]:
    """``(on, power_kw)`` matrices of shape (n_devices, steps)."""
    _, _, c = read_csv(path, TRACE_HEADER, {"step": int, "device_id": int, "on": int})
    step, dev = np.array(c["step"]), np.array(c["device_id"])
    shape = (dev.max() + 1, step.max() + 1)
    on = np.zeros(shape, dtype=bool)
    power = np.zeros(shape)
    on[dev, step] = np.array(c["on"], dtype=bool)
    power[dev, step] = c["power_kw"]
    return on, power


def write_dfs_day(path, y_ac, y_ac_hat, y_ol, y_ol_hat, y_total, y_total_hat) -> Path:
    cols = [np.asarray(c, dtype=float) for c in (y_ac, y_ac_hat, y_ol, y_ol_hat, y_total, y_total_hat)]
    return write_csv(path, DFS_HEADER, ([t, *(c[t] for c in cols)] for t in range(cols[0].shape[0])))


def write_weights_day(path, pair_ids, weights) -> Path:
    weights = np.asarray(weights, dtype=float)
    return write_csv(path, ["step", *pair_ids], ([t, *weights[t]] for t in range(weights.shape[0])))


def write_kf_day(path, pair_ids, estimates) -> Path:
    estimates = np.asarray(estimates, dtype=float)
    return write_csv(path, KF_HEADER,
                     ([t, pid, estimates[p, t]] for p, pid in enumerate(pair_ids)
                      for t in range(estimates.shape[1])))


def write_rows(path, header, rows) -> Path:
    return write_csv(path, header, rows)
