"""Dynamic Fixed Share over (AC model, OL model) experts.

Each expert runs a dynamic-mirror-descent style tracker of the AC and OL
demand; Fixed Share weights the experts by their losses on the measured
total demand. Two expert updates are provided:

* method 1 adjusts model *outputs*: an accumulated correction ``kappa`` is
  added to open-loop predictions;
* method 2 adjusts the Markov *state* of a dynamic AC model before the model
  advances it, while the OL coordinate is corrected as in method 1.

Per-step timing, for each expert ``m`` at step ``t``::

    estimate   theta_hat[t]              (formed before y[t] arrives)
    loss       0.5 * (C_t @ theta_hat[t] - y[t])**2
    weights    w[t+1] = fixed_share(w[t], losses)
    correct    kappa[t+1] = kappa[t] + eta_s * C_t.T @ (y[t] - C_t @ theta_hat[t])
    advance    theta_hat[t+1]

The combined output at step ``t`` is the ``w[t]``-weighted mean of the
expert outputs at ``t``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ._base import STEPS_PER_DAY, as_series
from .models import DayContext, is_dynamic


class UpdateMethod(enum.IntEnum):
    M1 = 1
    M2 = 2


class ModelSet(str, enum.Enum):
    FULL = "full"
    RED = "red"
    KF = "kf"


class ThetaLayout(str, enum.Enum):
    OUTPUTS = "outputs"               # [y_ac, y_ol]
    STATE_PLUS_OL = "state_plus_ol"   # [x_off, x_on, y_ol]


ETA_S_TABLE = {
    (ModelSet.FULL, UpdateMethod.M1): 0.013,
    (ModelSet.FULL, UpdateMethod.M2): 0.015,
    (ModelSet.RED, UpdateMethod.M1): 0.4,
    (ModelSet.RED, UpdateMethod.M2): 0.013,
    (ModelSet.KF, UpdateMethod.M1): 0.4,
    (ModelSet.KF, UpdateMethod.M2): 0.5,
}


@dataclass(frozen=True)
class DfsConfig:
    """Learning rates and switches for one DFS run.

    ``project_simplex=None`` projects the Markov state block onto the
    probability simplex for method 2 only; pass ``False`` for the raw
    Euclidean step.
    """

    eta_s: float = 0.4
    eta_r: float = 1e-5
    lam: float = 1e-5
    update_method: UpdateMethod = UpdateMethod.M1
    model_set: ModelSet = ModelSet.RED
    clamp_nonneg: bool = False
    project_simplex: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "update_method", UpdateMethod(int(self.update_method)))
        object.__setattr__(self, "model_set", ModelSet(str(getattr(self.model_set, "value", self.model_set)).lower()))
        if self.eta_s < 0:
            raise ValueError("eta_s must be >= 0")
        if self.eta_r < 0:
            raise ValueError("eta_r must be >= 0")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")

    @classmethod
    def for_scenario(cls, model_set, update_method, **overrides) -> "DfsConfig":
        ms = ModelSet(str(getattr(model_set, "value", model_set)).lower())
        um = UpdateMethod(int(update_method))
        kwargs = dict(eta_s=ETA_S_TABLE[(ms, um)], update_method=um, model_set=ms)
        kwargs.update(overrides)
        return cls(**kwargs)

    @property
    def projects_state(self) -> bool:
        if self.project_simplex is None:
            return self.update_method is UpdateMethod.M2
        return bool(self.project_simplex)

    def with_(self, **changes) -> "DfsConfig":
        return replace(self, **changes)


# ------------------------------------------------------------------ primitives

def loss(theta_hat, C, y: float) -> float:
    theta_hat = np.asarray(theta_hat, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.shape != theta_hat.shape:
        raise ValueError(f"C has shape {C.shape}, theta has {theta_hat.shape}")
    r = float(C @ theta_hat) - y
    return 0.5 * r * r


def kappa_update(kappa_hat, theta_hat, C, y: float, eta_s: float) -> np.ndarray:
    """Closed-form minimizer of the linearized-loss step for the correction."""
    C = np.asarray(C, dtype=float)
    residual = y - float(C @ np.asarray(theta_hat, dtype=float))
    return np.asarray(kappa_hat, dtype=float) + eta_s * residual * C


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def _project_pairs(x: np.ndarray) -> np.ndarray:
    """Row-wise simplex projection for (n, 2) arrays."""
    shift = (x[:, 0] + x[:, 1] - 1.0) / 2.0
    out = x - shift[:, None]
    lo = out[:, 0] < 0
    out[lo] = (0.0, 1.0)
    hi = out[:, 1] < 0
    out[hi] = (1.0, 0.0)
    return out


def theta_tilde(theta_hat, C, y: float, eta_s: float, layout: ThetaLayout = ThetaLayout.OUTPUTS,
                project_simplex: bool = False) -> np.ndarray:
    """Measurement-adjusted parameter: ``theta_hat - eta_s * grad``.

    With the squared-Euclidean divergence this is the exact minimizer of the
    linearized step; projecting the state block is the exact minimizer when
    the feasible set is (simplex) x R.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    C = np.asarray(C, dtype=float)
    out = theta_hat + eta_s * (y - float(C @ theta_hat)) * C
    if project_simplex and ThetaLayout(layout) is ThetaLayout.STATE_PLUS_OL:
        out[:-1] = project_to_simplex(out[:-1])
    return out


def fixed_share(weights, losses, eta_r: float, lam: float) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    ell = np.asarray(losses, dtype=float)
    if w.shape != ell.shape:
        raise ValueError("weights and losses differ in shape")
    if not np.all(np.isfinite(ell)):
        raise ValueError("losses must be finite")
    scaled = w * np.exp(-eta_r * (ell - ell.min()))
    total = scaled.sum()
    if not total > 0:
        raise ValueError("all expert weights are zero")
    return lam / w.shape[0] + (1.0 - lam) * scaled / total


def combine(weights, ac_outputs, ol_outputs, clamp_nonneg: bool = False) -> tuple[float, float]:
    w = np.asarray(weights, dtype=float)
    ac = float(w @ np.asarray(ac_outputs, dtype=float))
    ol = float(w @ np.asarray(ol_outputs, dtype=float))
    if clamp_nonneg:
        ac, ol = max(ac, 0.0), max(ol, 0.0)
    return ac, ol


# ------------------------------------------------------------------ prepared day

@dataclass
class PreparedDay:
    """Per-day model outputs and dynamics for a list of expert pairs.

    ``ac_static[a]`` holds open-loop predictions of non-dynamic AC models;
    dynamic models carry ``A_seq[a]`` (1440, 2, 2), ``c_seq[a]`` (1440,)
    (the on-state output coefficient) and an initial state.
    """

    pair_ids: list
    pair_ac: np.ndarray
    pair_ol: np.ndarray
    ac_names: list
    ol_names: list
    ac_dynamic: np.ndarray
    ac_static: np.ndarray
    A_seq: np.ndarray
    c_seq: np.ndarray
    x0: np.ndarray
    ol_pred: np.ndarray

    @classmethod
    def build(cls, pairs, ctx: DayContext) -> "PreparedDay":
        ac_models, ol_models = {}, {}
        for ac, ol in pairs:
            ac_models.setdefault(ac.name, ac)
            ol_models.setdefault(ol.name, ol)
        ac_names, ol_names = list(ac_models), list(ol_models)
        n_ac = len(ac_names)
        ac_dynamic = np.array([is_dynamic(ac_models[n]) for n in ac_names], dtype=bool)
        ac_static = np.zeros((n_ac, STEPS_PER_DAY))
        A_seq = np.zeros((n_ac, STEPS_PER_DAY, 2, 2))
        A_seq[:] = np.eye(2)
        c_seq = np.zeros((n_ac, STEPS_PER_DAY))
        x0 = np.tile([0.5, 0.5], (n_ac, 1))
        for a, name in enumerate(ac_names):
            model = ac_models[name]
            if ac_dynamic[a]:
                A_seq[a], c_seq[a] = model.dynamics(ctx)
                x0[a] = model.initial_state(ctx)
            else:
                ac_static[a] = model.predict_day(ctx)
        ol_pred = np.stack([ol_models[n].predict_day(ctx) for n in ol_names])
        ac_index = {n: i for i, n in enumerate(ac_names)}
        ol_index = {n: i for i, n in enumerate(ol_names)}
        return cls(
            pair_ids=[f"{ac.name}+{ol.name}" for ac, ol in pairs],
            pair_ac=np.array([ac_index[ac.name] for ac, _ in pairs]),
            pair_ol=np.array([ol_index[ol.name] for _, ol in pairs]),
            ac_names=ac_names, ol_names=ol_names, ac_dynamic=ac_dynamic,
            ac_static=ac_static, A_seq=A_seq, c_seq=c_seq, x0=x0, ol_pred=ol_pred,
        )

    @property
    def n_experts(self) -> int:
        return len(self.pair_ids)

    def open_loop_ac(self) -> np.ndarray:
        """Open-loop AC predictions (n_ac_models, 1440)."""
        out = self.ac_static.copy()
        dyn = np.flatnonzero(self.ac_dynamic)
        if dyn.size:
            x = self.x0[dyn].copy()
            A, c = self.A_seq[dyn], self.c_seq[dyn]
            for t in range(STEPS_PER_DAY):
                out[dyn, t] = c[:, t] * x[:, 1]
                x = np.einsum("mij,mj->mi", A[:, t], x)
        return out

    def uses_method2(self, config: DfsConfig) -> np.ndarray:
        if config.update_method is UpdateMethod.M1:
            return np.zeros(self.n_experts, dtype=bool)
        return self.ac_dynamic[self.pair_ac]


@dataclass
class DayResult:
    pair_ids: list
    y_ac_hat: np.ndarray
    y_ol_hat: np.ndarray
    weights: np.ndarray          # (1440, n) weights used for each step's estimate
    losses: np.ndarray           # (1440, n) expert losses at each step
    final_weights: np.ndarray = field(default=None)

    @property
    def y_total_hat(self) -> np.ndarray:
        return self.y_ac_hat + self.y_ol_hat


# ------------------------------------------------------------------ vectorized run

def run_day(config: DfsConfig, prepared: PreparedDay, y) -> DayResult:
    """Run DFS causally over one day of measured total demand ``y``."""
    y = as_series(y, "measured demand")
    n_steps = y.shape[0]
    if n_steps > STEPS_PER_DAY:
        raise ValueError("measured stream longer than the prepared day")
    n = prepared.n_experts
    eta_s, eta_r, lam = config.eta_s, config.eta_r, config.lam
    m2 = prepared.uses_method2(config)
    i1, i2 = np.flatnonzero(~m2), np.flatnonzero(m2)

    ac_open = prepared.open_loop_ac()
    check_ac = ac_open[prepared.pair_ac[i1]]
    check_ol = prepared.ol_pred[prepared.pair_ol]
    ac2 = prepared.pair_ac[i2]
    A2, c2 = prepared.A_seq[ac2], prepared.c_seq[ac2]
    x2 = prepared.x0[ac2].copy()
    project = config.projects_state

    kappa_ac = np.zeros(n)
    kappa_ol = np.zeros(n)
    w = np.full(n, 1.0 / n)
    est_ac = np.empty(n_steps)
    est_ol = np.empty(n_steps)
    W = np.empty((n_steps, n))
    L = np.empty((n_steps, n))
    pred_ac = np.empty(n)
    for t in range(n_steps):
        pred_ac[i1] = check_ac[:, t] + kappa_ac[i1]
        pred_ac[i2] = c2[:, t] * x2[:, 1]
        pred_ol = check_ol[:, t] + kappa_ol
        W[t] = w
        est_ac[t] = w @ pred_ac
        est_ol[t] = w @ pred_ol
        r = y[t] - pred_ac - pred_ol
        ell = 0.5 * r * r
        L[t] = ell
        scaled = w * np.exp(-eta_r * (ell - ell.min()))
        w = lam / n + (1.0 - lam) * scaled / scaled.sum()
        step = eta_s * r
        kappa_ac[i1] += step[i1]
        kappa_ol += step
        if i2.size:
            x2[:, 1] += step[i2] * c2[:, t]
            if project:
                x2 = _project_pairs(x2)
            x2 = np.einsum("eij,ej->ei", A2[:, t], x2)
    if config.clamp_nonneg:
        np.maximum(est_ac, 0.0, out=est_ac)
        np.maximum(est_ol, 0.0, out=est_ol)
    return DayResult(list(prepared.pair_ids), est_ac, est_ol, W, L, w)


# ------------------------------------------------------------------ per-expert reference

@dataclass
class ExpertState:
    pair_id: str
    layout: ThetaLayout
    theta_hat: np.ndarray
    theta_check: np.ndarray
    kappa_hat: np.ndarray
    model_state: np.ndarray | None
    weight: float

    def outputs(self, c_on: float) -> tuple[float, float]:
        """(AC, OL) demand implied by ``theta_hat``; ``c_on`` is ``C_t^AC[1]``."""
        if self.layout is ThetaLayout.OUTPUTS:
            return float(self.theta_hat[0]), float(self.theta_hat[1])
        return float(c_on * self.theta_hat[1]), float(self.theta_hat[2])

    def C(self, c_on: float) -> np.ndarray:
        if self.layout is ThetaLayout.OUTPUTS:
            return np.array([1.0, 1.0])
        return np.array([0.0, c_on, 1.0])


def init_expert(prepared: PreparedDay, e: int, config: DfsConfig) -> ExpertState:
    a, o = prepared.pair_ac[e], prepared.pair_ol[e]
    weight = 1.0 / prepared.n_experts
    ol0 = prepared.ol_pred[o, 0]
    if prepared.uses_method2(config)[e]:
        x = prepared.x0[a].copy()
        theta = np.array([x[0], x[1], ol0])
        return ExpertState(prepared.pair_ids[e], ThetaLayout.STATE_PLUS_OL, theta,
                           theta.copy(), np.zeros(3), x, weight)
    if prepared.ac_dynamic[a]:
        x = prepared.x0[a].copy()
        ac0 = prepared.c_seq[a, 0] * x[1]
    else:
        x, ac0 = None, prepared.ac_static[a, 0]
    theta = np.array([ac0, ol0])
    return ExpertState(prepared.pair_ids[e], ThetaLayout.OUTPUTS, theta.copy(), theta,
                       np.zeros(2), x, weight)


def advance_m1(expert: ExpertState, prepared: PreparedDay, e: int, t: int, y_t: float,
               eta_s: float) -> ExpertState:
    """Output-correction update: open-loop models plus accumulated correction."""
    if expert.layout is not ThetaLayout.OUTPUTS:
        raise ValueError("method 1 works on the (AC, OL) output layout")
    a, o = prepared.pair_ac[e], prepared.pair_ol[e]
    C = expert.C(0.0)
    kappa = kappa_update(expert.kappa_hat, expert.theta_hat, C, y_t, eta_s)
    if expert.model_state is not None:
        x = prepared.A_seq[a, t] @ expert.model_state
        ac_next = prepared.c_seq[a, t + 1] * x[1]
    else:
        x, ac_next = None, prepared.ac_static[a, t + 1]
    check = np.array([ac_next, prepared.ol_pred[o, t + 1]])
    return replace(expert, theta_check=check, theta_hat=check + kappa, kappa_hat=kappa,
                   model_state=x)


def advance_m2(expert: ExpertState, prepared: PreparedDay, e: int, t: int, y_t: float,
               eta_s: float, project_simplex: bool = False) -> ExpertState:
    """State-correction update for dynamic AC models.

    The AC block advances from the measurement-adjusted state; the OL entry
    advances open-loop plus the OL coordinate of the accumulated correction.
    """
    a, o = prepared.pair_ac[e], prepared.pair_ol[e]
    if not prepared.ac_dynamic[a]:
        raise ValueError(f"{expert.pair_id}: method 2 needs an AC model with a Markov state")
    if expert.layout is not ThetaLayout.STATE_PLUS_OL:
        raise ValueError("method 2 works on the (state, OL) layout")
    C = expert.C(prepared.c_seq[a, t])
    kappa = kappa_update(expert.kappa_hat, expert.theta_hat, C, y_t, eta_s)
    tilde = theta_tilde(expert.theta_hat, C, y_t, eta_s, ThetaLayout.STATE_PLUS_OL, project_simplex)
    x = prepared.A_seq[a, t] @ tilde[:2]
    ol_check = prepared.ol_pred[o, t + 1]
    theta = np.array([x[0], x[1], ol_check + kappa[2]])
    check = np.array([x[0], x[1], ol_check])
    return replace(expert, theta_hat=theta, theta_check=check, kappa_hat=kappa, model_state=x)


def run_day_reference(config: DfsConfig, prepared: PreparedDay, y) -> DayResult:
    """Expert-by-expert DFS loop; slow, used to cross-check :func:`run_day`."""
    y = as_series(y, "measured demand")
    n = prepared.n_experts
    experts = [init_expert(prepared, e, config) for e in range(n)]
    est_ac, est_ol = np.empty(y.shape[0]), np.empty(y.shape[0])
    W, L = np.empty((y.shape[0], n)), np.empty((y.shape[0], n))
    for t in range(y.shape[0]):
        c_on = prepared.c_seq[prepared.pair_ac, t]
        outs = [ex.outputs(c_on[e]) for e, ex in enumerate(experts)]
        w = np.array([ex.weight for ex in experts])
        W[t] = w
        est_ac[t], est_ol[t] = combine(w, [o[0] for o in outs], [o[1] for o in outs])
        losses = np.array([loss(ex.theta_hat, ex.C(c_on[e]), y[t]) for e, ex in enumerate(experts)])
        L[t] = losses
        w = fixed_share(w, losses, config.eta_r, config.lam)
        if t + 1 < y.shape[0]:
            nxt = []
            for e, ex in enumerate(experts):
                if ex.layout is ThetaLayout.STATE_PLUS_OL:
                    ex = advance_m2(ex, prepared, e, t, y[t], config.eta_s, config.projects_state)
                else:
                    ex = advance_m1(ex, prepared, e, t, y[t], config.eta_s)
                nxt.append(ex)
            experts = nxt
        for e, ex in enumerate(experts):
            ex.weight = float(w[e])
    if config.clamp_nonneg:
        est_ac, est_ol = np.maximum(est_ac, 0), np.maximum(est_ol, 0)
    return DayResult(list(prepared.pair_ids), est_ac, est_ol, W, L, w)
