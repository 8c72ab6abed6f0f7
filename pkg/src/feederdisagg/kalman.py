"""Kalman-filter benchmark over the LTV AC models with OL pseudo-measurements."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._base import DegenerateModelError, FilterDivergenceError, as_series
from .models import DayContext, LtvModel, stationary_state


@dataclass(frozen=True)
class NoiseEstimates:
    Q: np.ndarray
    R: float
    source_pair: tuple[str, str] = ("", "")


@dataclass(frozen=True)
class KfState:
    x_hat: np.ndarray
    P: np.ndarray


def estimate_Q(model: LtvModel, days) -> np.ndarray:
    """Process-noise covariance from reconstructed on-fractions.

    ``days`` is a sequence of ``(DayContext, y_ac)``. The state at each step
    is ``[1 - f, f]`` with ``f = y_ac / (n_ac * p_bar(T_t))`` clipped to
    [0, 1]; residuals ``x[t+1] - A_t x[t]`` are pooled within days.
    """
    days = list(days)
    if not days:
        raise ValueError("need at least one historical day")
    residuals = []
    for ctx, y_ac in days:
        A_seq, c_seq = model.dynamics(ctx)
        y_ac = as_series(y_ac, "y_ac", length=c_seq.shape[0])
        if np.any(c_seq <= 0):
            raise DegenerateModelError("model predicts zero AC power draw")
        f = np.clip(y_ac / c_seq, 0.0, 1.0)
        x = np.column_stack([1.0 - f, f])
        residuals.append(x[1:] - np.einsum("tij,tj->ti", A_seq[:-1], x[:-1]))
    return population_covariance(np.concatenate(residuals))


def population_covariance(samples) -> np.ndarray:
    w = np.asarray(samples, dtype=float)
    centered = w - w.mean(axis=0)
    Q = centered.T @ centered / w.shape[0]
    return 0.5 * (Q + Q.T)


def estimate_R(ol_model, days) -> float:
    """Population variance of OL prediction errors; ``days`` is ``(ctx, y_ol)`` pairs."""
    days = list(days)
    if not days:
        raise ValueError("need at least one historical day")
    errors = np.concatenate([as_series(y_ol, "y_ol") - ol_model.predict_day(ctx)
                             for ctx, y_ol in days])
    return float(np.var(errors))


def kf_step(state: KfState, A, H, Q, R, y_tilde: float) -> KfState:
    """Predict with ``A``/``Q`` then update on the scalar pseudo-measurement.

    Covariance uses the Joseph form.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_1d(np.asarray(H, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    x = np.atleast_1d(np.asarray(state.x_hat, dtype=float))
    P = np.atleast_2d(np.asarray(state.P, dtype=float))
    x_pred = A @ x
    P_pred = A @ P @ A.T + Q
    PHt = P_pred @ H
    S = float(H @ PHt) + float(R)
    if not S > 0:
        raise FilterDivergenceError(f"innovation variance {S} is not positive")
    K = PHt / S
    x_new = x_pred + K * (y_tilde - float(H @ x_pred))
    IKH = np.eye(x.shape[0]) - np.outer(K, H)
    P_new = IKH @ P_pred @ IKH.T + float(R) * np.outer(K, K)
    return KfState(x_new, P_new)


@dataclass
class KfBankResult:
    pair_ids: list
    estimates: np.ndarray          # (n_pairs, steps)
    rmse: np.ndarray               # (n_pairs,)
    max_asymmetry: float = 0.0
    min_eigenvalue: float = field(default=np.inf)

    @property
    def bkf(self) -> float:
        return float(self.rmse.min())

    @property
    def akf(self) -> float:
        return float(self.rmse.mean())

    @property
    def best_pair(self) -> str:
        return self.pair_ids[int(np.argmin(self.rmse))]


def run_kf_bank(pairs, noise: dict, ctx: DayContext, y, y_ac_true,
                P0: float = 0.01) -> KfBankResult:
    """One filter per (LTV model, OL model) pair over a day.

    ``noise`` maps pair ids ``"<ac>+<ol>"`` to :class:`NoiseEstimates`. The
    AC estimate is ``H_t @ x_hat`` after the update at ``t``, clamped at 0.
    """
    y = as_series(y, "y")
    y_ac_true = as_series(y_ac_true, "y_ac_true", length=y.shape[0])
    n = y.shape[0]
    ids, estimates = [], []
    asym, min_eig = 0.0, np.inf
    ol_cache = {}
    for ac, ol in pairs:
        pid = f"{ac.name}+{ol.name}"
        est = noise[pid]
        A_seq, c_seq = ac.dynamics(ctx)
        if ol.name not in ol_cache:
            ol_cache[ol.name] = ol.predict_day(ctx)
        pseudo = y - ol_cache[ol.name][:n]
        state = KfState(stationary_state(A_seq[0]), P0 * np.eye(2))
        out = np.empty(n)
        eye = np.eye(2)
        for t in range(n):
            A = A_seq[t - 1] if t > 0 else eye
            Q = est.Q if t > 0 else np.zeros((2, 2))
            H = np.array([0.0, c_seq[t]])
            state = kf_step(state, A, H, Q, est.R, pseudo[t])
            out[t] = max(float(H @ state.x_hat), 0.0)
            P = state.P
            asym = max(asym, float(np.abs(P - P.T).max()))
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (P + P.T)).min()))
        ids.append(pid)
        estimates.append(out)
    estimates = np.array(estimates)
    rmse = np.sqrt(np.mean((estimates - y_ac_true) ** 2, axis=1))
    return KfBankResult(ids, estimates, rmse, asym, min_eig)
