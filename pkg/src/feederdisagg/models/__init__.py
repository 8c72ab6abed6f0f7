"""Offline-identified load predictors."""

from .bundle import MissingModelError, ModelBundle, load_bundle, save_bundle
from .features import (
    DayContext,
    FeatureKind,
    FeatureSpec,
    FeatureVector,
    LoadFeatures,
    build_features,
    design_matrix,
)
from .lag import LagMode, estimate_lag, trailing_mean
from .markov import (
    LtiBank,
    LtiModel,
    LtvModel,
    MarkovBankEstimator,
    StepTally,
    identify_lti_bank,
    interpolate_bank,
    ltv_matrices,
    stationary_state,
    tally_transitions,
)
from .regression import (
    AcMlrModel,
    MlrModel,
    OlMlrModel,
    RidgeRegression,
    TodModel,
    TodRegressor,
    fit_mlr,
    fit_tod,
)


def is_dynamic(model) -> bool:
    """True for AC models with a Markov state (LTI bins and LTV)."""
    return isinstance(model, (LtiModel, LtvModel))


def predict(model, t: int, ctx: DayContext, state=None):
    """One-step output of any predictor.

    Static models return their prediction at minute ``t``. Dynamic AC models
    return ``C_t @ state``; advancing the state is left to :func:`advance`.
    """
    if is_dynamic(model):
        A_seq, c_seq = model.dynamics(ctx)
        return float(c_seq[t] * state[1])
    return model.predict(t, ctx)


def advance(model, t: int, ctx: DayContext, state):
    A_seq, _ = model.dynamics(ctx)
    return A_seq[t] @ state


__all__ = [name for name in dir() if not name.startswith("_")]
