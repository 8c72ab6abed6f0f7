"""Regression load models: time-of-day lookup tables and ridge MLR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .._base import STEPS_PER_DAY, SingularSystemError, Weekday, as_series
from .features import DayContext, FeatureSpec, build_features, design_matrix


class RidgeRegression(BaseEstimator, RegressorMixin):
    r"""Ridge regression solved through the regularized normal equations.

    Minimizes :math:`\|y - X\beta\|^2 + \alpha\|\beta\|^2` with no intercept
    (the time-of-week indicators span the constant). Accepts sparse ``X``.
    Columns are equilibrated before the Cholesky solve; the penalty still
    acts on the original coefficients.
    """

    def __init__(self, alpha=1e-6):
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", y_numeric=True)
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        gram = X.T @ X
        gram = gram.toarray() if sp.issparse(gram) else np.asarray(gram)
        rhs = np.asarray(X.T @ y).ravel()
        diag = np.diag(gram).copy()
        zero = diag <= 0
        if self.alpha == 0 and zero.any():
            raise SingularSystemError(
                f"feature column {int(np.argmax(zero))} is identically zero and ridge is 0")
        scale = np.where(zero, 1.0, 1.0 / np.sqrt(np.where(zero, 1.0, diag)))
        lhs = gram * scale[:, None] * scale[None, :]
        lhs[np.diag_indices_from(lhs)] += self.alpha * scale ** 2
        b = rhs * scale
        try:
            factor = scipy.linalg.cho_factor(lhs)
            solve = lambda r: scipy.linalg.cho_solve(factor, r)
        except np.linalg.LinAlgError:
            if self.alpha == 0:
                raise SingularSystemError("normal equations are singular") from None
            solve = lambda r: scipy.linalg.lstsq(lhs, r)[0]
        z = solve(b)
        # refinement with residuals taken against X itself, not the Gram matrix
        for _ in range(2):
            beta = z * scale
            resid = y - np.asarray(X @ beta).ravel()
            grad = np.asarray(X.T @ resid).ravel() - self.alpha * beta
            z = z + solve(grad * scale)
        self.coef_ = z * scale
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr")
        return np.asarray(X @ self.coef_).ravel()


# ------------------------------------------------------------------ TOD

class TodRegressor(BaseEstimator, RegressorMixin):
    """Continuous piecewise-linear least-squares fit over minute of day.

    Knots sit every ``knot_minutes`` from 0 to 1440 inclusive; the fitted
    function is the hat-basis expansion of the knot values.
    """

    def __init__(self, knot_minutes=15):
        self.knot_minutes = knot_minutes

    def _basis(self, minutes):
        knots = np.arange(0, STEPS_PER_DAY + 1, self.knot_minutes, dtype=float)
        m = np.asarray(minutes, dtype=float)
        seg = np.clip((m // self.knot_minutes).astype(int), 0, len(knots) - 2)
        frac = (m - knots[seg]) / self.knot_minutes
        basis = np.zeros((m.shape[0], len(knots)))
        rows = np.arange(m.shape[0])
        basis[rows, seg] = 1.0 - frac
        basis[rows, seg + 1] += frac
        return basis

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if STEPS_PER_DAY % self.knot_minutes:
            raise ValueError("knot_minutes must divide 1440")
        basis = self._basis(X[:, 0])
        self.knot_values_, *_ = scipy.linalg.lstsq(basis, y)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "knot_values_")
        X = check_array(X)
        return self._basis(X[:, 0]) @ self.knot_values_


@dataclass(frozen=True)
class TodModel:
    alpha: np.ndarray
    label: Weekday

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_series(self.alpha, "alpha", length=STEPS_PER_DAY))
        object.__setattr__(self, "label", Weekday.parse(self.label))

    @property
    def name(self) -> str:
        return f"TOD_{self.label.label}"

    def predict(self, t: int, ctx: DayContext | None = None) -> float:
        return float(self.alpha[t])

    def predict_day(self, ctx: DayContext | None = None) -> np.ndarray:
        return self.alpha.copy()


def fit_tod(history, weekday, knot_minutes: int = 15) -> TodModel:
    y = as_series(history, "history", length=STEPS_PER_DAY)
    minutes = np.arange(STEPS_PER_DAY, dtype=float)[:, None]
    reg = TodRegressor(knot_minutes).fit(minutes, y)
    return TodModel(reg.predict(minutes), weekday)


# ------------------------------------------------------------------ MLR

@dataclass(frozen=True)
class MlrModel:
    coefficients: np.ndarray
    feature_spec: FeatureSpec
    ridge_weight: float = 1e-6

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        if coef.shape != (self.feature_spec.dim,):
            raise ValueError(
                f"expected {self.feature_spec.dim} coefficients, got {coef.shape}")
        object.__setattr__(self, "coefficients", coef)

    def predict(self, t: int, ctx: DayContext) -> float:
        return float(build_features(self.feature_spec, t, ctx).values @ self.coefficients)

    def predict_day(self, ctx: DayContext) -> np.ndarray:
        X, _ = design_matrix(self.feature_spec, [ctx])
        return np.asarray(X @ self.coefficients).ravel()


def fit_mlr(contexts, targets, spec: FeatureSpec, ridge_weight: float = 1e-6) -> MlrModel:
    """Fit one MLR model from day contexts and matching per-day targets.

    Rows whose lagged inputs reach past the available history are dropped.
    """
    contexts = list(contexts)
    if not contexts:
        raise ValueError("need at least one training day")
    X, mask = design_matrix(spec, contexts, skip_insufficient=True)
    y = np.concatenate([as_series(t, "target", length=STEPS_PER_DAY) for t in targets])[mask]
    reg = RidgeRegression(alpha=ridge_weight).fit(X, y)
    return MlrModel(reg.coef_, spec, ridge_weight)


@dataclass(frozen=True)
class OlMlrModel:
    """Other-load MLR: residential plus commercial regression."""

    res: MlrModel
    com: MlrModel
    name: str = "OL_MLR"

    def predict(self, t: int, ctx: DayContext) -> float:
        return self.res.predict(t, ctx) + self.com.predict(t, ctx)

    def predict_day(self, ctx: DayContext) -> np.ndarray:
        return self.res.predict_day(ctx) + self.com.predict_day(ctx)


@dataclass(frozen=True)
class AcMlrModel:
    model: MlrModel
    name: str = "AC_MLR"

    def predict(self, t: int, ctx: DayContext) -> float:
        return self.model.predict(t, ctx)

    def predict_day(self, ctx: DayContext) -> np.ndarray:
        return self.model.predict_day(ctx)
