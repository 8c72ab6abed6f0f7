import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from feederdisagg._base import STEPS_PER_DAY, Weekday
from feederdisagg.dfs import (
    ETA_S_TABLE,
    DfsConfig,
    ModelSet,
    PreparedDay,
    ThetaLayout,
    UpdateMethod,
    advance_m1,
    advance_m2,
    combine,
    fixed_share,
    init_expert,
    kappa_update,
    loss,
    project_to_simplex,
    run_day,
    run_day_reference,
    theta_tilde,
)
from feederdisagg.models import DayContext, LtiModel, TodModel

N = STEPS_PER_DAY
A_EX = np.array([[0.9, 0.2], [0.1, 0.8]])


def ctx():
    return DayContext(Weekday.MON, np.full(N, 85.0), np.full(N, 75.0), np.zeros(N))


def const_ac(value, name):
    """Static AC predictor with a fixed output."""
    class ConstAc:
        def __init__(self):
            self.name = name

        def predict_day(self, ctx=None):
            return np.full(N, float(value))
    return ConstAc()


def tod(value, wd=Weekday.MON, profile=None):
    return TodModel(np.full(N, float(value)) if profile is None else profile, wd)


# ------------------------------------------------------------------ primitives

def test_loss_examples():
    assert loss([2, 3], [1, 1], 5) == 0
    assert loss([2, 3], [1, 1], 6) == 0.5
    assert loss([20, 30], [1, 1], 60) == pytest.approx(100 * loss([2, 3], [1, 1], 6))
    with pytest.raises(ValueError):
        loss([1, 2, 3], [1, 1], 0)


def test_kappa_update_examples():
    assert_allclose(kappa_update([0, 0], [2, 3], [1, 1], 6, 0.1), [0.1, 0.1])
    assert_array_equal(kappa_update([4, -1], [2, 3], [1, 1], 6, 0.0), [4, -1])
    assert_array_equal(kappa_update([4, -1], [2, 3], [1, 1], 5, 0.3), [4, -1])


def test_theta_tilde_examples():
    assert_array_equal(theta_tilde([1.0, 2.0], [1, 1], 9.0, 0.0), [1.0, 2.0])
    out = theta_tilde([0.5, 0.5, 100.0], [0, 500, 1], 400.0, 1e-3, ThetaLayout.STATE_PLUS_OL)
    assert_allclose(out, [0.5, 25.5, 100.05])
    proj = theta_tilde([0.5, 0.5, 100.0], [0, 500, 1], 400.0, 1e-3, ThetaLayout.STATE_PLUS_OL,
                       project_simplex=True)
    assert_allclose(proj, [0.0, 1.0, 100.05])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=6))
def test_simplex_projection(v):
    p = project_to_simplex(v)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
    # optimality: the projection is no farther than random simplex points
    rng = np.random.default_rng(len(v))
    others = rng.dirichlet(np.ones(len(v)), 50)
    assert np.linalg.norm(p - v) <= np.min(np.linalg.norm(others - v, axis=1)) + 1e-9


def test_fixed_share_examples():
    assert_allclose(fixed_share([0.5, 0.5], [0.0, math.log(2)], 1.0, 0.0), [2 / 3, 1 / 3], atol=1e-12)
    assert_allclose(fixed_share([0.5, 0.5], [0.0, math.log(2)], 1.0, 0.5), [7 / 12, 5 / 12], atol=1e-12)
    w = np.array([0.1, 0.2, 0.7])
    assert_allclose(fixed_share(w, [3.0, 3.0, 3.0], 0.7, 0.0), w, atol=1e-12)
    with pytest.raises(ValueError):
        fixed_share([0.5, 0.5], [0.0, np.inf], 1.0, 0.0)
    with pytest.raises(ValueError):
        fixed_share([0.0, 0.0], [0.0, 1.0], 1.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=2, max_size=8), st.floats(-1e5, 1e5),
       st.floats(1e-7, 1.0), st.floats(0.0, 1.0))
def test_fixed_share_shift_invariance_and_floor(losses, c, eta_r, lam):
    n = len(losses)
    w = np.full(n, 1.0 / n)
    a = fixed_share(w, losses, eta_r, lam)
    b = fixed_share(w, np.asarray(losses) + c, eta_r, lam)
    assert_allclose(a, b, atol=1e-12)
    assert a.sum() == pytest.approx(1.0, abs=1e-9)
    assert a.min() >= lam / n - 1e-12


def test_combine_examples():
    assert combine([1.0], [1200.0], [3000.0]) == (1200.0, 3000.0)
    assert combine([0.25, 0.75], [1000, 2000], [2000, 4000]) == (1750.0, 3500.0)
    assert combine([0.5, 0.5], [-10, 2], [1, 1], clamp_nonneg=True) == (0.0, 1.0)


def test_config_defaults_and_table():
    cfg = DfsConfig()
    assert cfg.eta_r == 1e-5 and cfg.lam == 1e-5
    assert ETA_S_TABLE[(ModelSet.FULL, UpdateMethod.M2)] == 0.015
    c = DfsConfig.for_scenario("kf", 2)
    assert c.eta_s == 0.5 and c.projects_state
    assert not DfsConfig.for_scenario("red", 1).projects_state
    assert not DfsConfig.for_scenario("red", 2, project_simplex=False).projects_state
    with pytest.raises(ValueError):
        DfsConfig(lam=1.5)
    with pytest.raises(ValueError):
        DfsConfig(eta_s=-1)


# ------------------------------------------------------------------ expert updates

def test_m1_two_step_hand_trace():
    pairs = [(const_ac(1000, "AC"), tod(4000))]
    prep = PreparedDay.build(pairs, ctx())
    cfg = DfsConfig(eta_s=0.1, update_method=1)
    ex = init_expert(prep, 0, cfg)
    assert_array_equal(ex.theta_hat, [1000, 4000])
    ex = advance_m1(ex, prep, 0, 0, 5500.0, 0.1)
    # residual 500: kappa = 0.1 * 500 on both coordinates
    assert_allclose(ex.kappa_hat, [50, 50])
    assert_allclose(ex.theta_hat, [1050, 4050])
    ex = advance_m1(ex, prep, 0, 1, 5500.0, 0.1)
    # residual 400: kappa += 40
    assert_allclose(ex.kappa_hat, [90, 90])
    assert_allclose(ex.theta_hat, [1090, 4090])


def test_m2_hand_trace():
    ac = LtiModel(A_EX, 50.0, 85.0, 10)          # C^AC = [0, 500]
    prep = PreparedDay.build([(ac, tod(100))], ctx())
    cfg = DfsConfig(eta_s=1e-4, update_method=2, project_simplex=False)
    ex = init_expert(prep, 0, cfg)
    x0 = np.array([2 / 3, 1 / 3])
    assert_allclose(ex.theta_hat, [*x0, 100])
    y = 400.0
    r = y - (500 * x0[1] + 100)
    ex = advance_m2(ex, prep, 0, 0, y, 1e-4, project_simplex=False)
    tilde = np.array([x0[0], x0[1] + 1e-4 * r * 500])
    x1 = A_EX @ tilde
    assert_allclose(ex.theta_hat, [x1[0], x1[1], 100 + 1e-4 * r])
    assert_allclose(ex.kappa_hat, [0, 1e-4 * r * 500, 1e-4 * r])
    r2 = y - (500 * x1[1] + 100 + 1e-4 * r)
    ex = advance_m2(ex, prep, 0, 1, y, 1e-4, project_simplex=False)
    x2 = A_EX @ np.array([x1[0], x1[1] + 1e-4 * r2 * 500])
    assert_allclose(ex.theta_hat, [x2[0], x2[1], 100 + 1e-4 * (r + r2)])


def test_m2_identity_dynamics_keeps_correction():
    ac = LtiModel(np.eye(2), 50.0, 85.0, 10)
    prep = PreparedDay.build([(ac, tod(100))], ctx())
    cfg = DfsConfig(eta_s=1e-4, update_method=2, project_simplex=False)
    ex = init_expert(prep, 0, cfg)
    tilde = theta_tilde(ex.theta_hat, ex.C(500.0), 400.0, 1e-4, ThetaLayout.STATE_PLUS_OL)
    ex = advance_m2(ex, prep, 0, 0, 400.0, 1e-4)
    assert_allclose(ex.theta_hat[:2], tilde[:2])


def test_m2_requires_dynamic_model():
    prep = PreparedDay.build([(const_ac(5, "X"), tod(1))], ctx())
    ex = init_expert(prep, 0, DfsConfig(update_method=1))
    with pytest.raises(ValueError):
        advance_m2(ex, prep, 0, 0, 1.0, 0.1)


def test_eta_zero_m1_and_m2_agree_open_loop(rng):
    ac = LtiModel(A_EX, 50.0, 85.0, 10)
    pairs = [(ac, tod(100))]
    prep = PreparedDay.build(pairs, ctx())
    y = rng.uniform(100, 600, N)
    r1 = run_day(DfsConfig(eta_s=0.0, update_method=1), prep, y)
    r2 = run_day(DfsConfig(eta_s=0.0, update_method=2, project_simplex=False), prep, y)
    assert_allclose(r1.y_ac_hat, r2.y_ac_hat, rtol=1e-12)
    assert_allclose(r1.y_ac_hat, prep.open_loop_ac()[0], rtol=1e-12)


# ------------------------------------------------------------------ full day

def mixed_pairs():
    h = np.arange(N)
    ac_models = [LtiModel(A_EX, 50.0, 85.0, 10),
                 LtiModel(np.array([[0.95, 0.1], [0.05, 0.9]]), 60.0, 90.0, 10),
                 const_ac(200, "AC_FLAT")]
    ol_models = [tod(300), tod(0, Weekday.TUE, 250 + 50 * np.sin(h / 200))]
    return [(a, o) for a in ac_models for o in ol_models]


@pytest.mark.parametrize("method,project", [(1, None), (2, False), (2, True)])
def test_vectorized_matches_reference(rng, method, project):
    prep = PreparedDay.build(mixed_pairs(), ctx())
    y = 450 + 80 * np.sin(np.arange(N) / 100) + rng.normal(0, 20, N)
    cfg = DfsConfig(eta_s=2e-6 if method == 2 else 0.3, eta_r=1e-3, lam=1e-3,
                    update_method=method, project_simplex=project)
    fast = run_day(cfg, prep, y)
    ref = run_day_reference(cfg, prep, y)
    assert_allclose(fast.y_ac_hat, ref.y_ac_hat, rtol=1e-9, atol=1e-9)
    assert_allclose(fast.y_ol_hat, ref.y_ol_hat, rtol=1e-9, atol=1e-9)
    assert_allclose(fast.weights, ref.weights, atol=1e-12)
    assert_allclose(fast.losses, ref.losses, rtol=1e-9, atol=1e-9)


def test_day_invariants(rng):
    prep = PreparedDay.build(mixed_pairs(), ctx())
    y = 450 + rng.normal(0, 50, N)
    cfg = DfsConfig(eta_s=0.2, eta_r=1e-3, lam=0.01)
    res = run_day(cfg, prep, y)
    n = prep.n_experts
    assert_allclose(res.weights.sum(axis=1), 1.0, atol=1e-9)
    assert res.weights[1:].min() >= cfg.lam / n - 1e-12
    assert_allclose(res.weights[0], 1.0 / n)
    assert_allclose(res.y_total_hat, res.y_ac_hat + res.y_ol_hat, atol=1e-9)
    assert np.all(res.losses >= 0)
    again = run_day(cfg, prep, y)
    assert_array_equal(res.y_ac_hat, again.y_ac_hat)


def test_causality(rng):
    prep = PreparedDay.build(mixed_pairs(), ctx())
    y = 450 + rng.normal(0, 50, N)
    cfg = DfsConfig(eta_s=0.2, eta_r=1e-3, lam=0.01, update_method=2)
    full = run_day(cfg, prep, y)
    part = run_day(cfg, prep, y[:300])
    assert_array_equal(full.y_ac_hat[:300], part.y_ac_hat)
    assert_array_equal(full.weights[:300], part.weights)


def test_perfect_single_model_is_exact():
    truth_ac = np.full(N, 1234.0)
    prep = PreparedDay.build([(const_ac(1234.0, "AC"), tod(4000))], ctx())
    res = run_day(DfsConfig(eta_s=0.4), prep, truth_ac + 4000)
    assert_array_equal(res.y_ac_hat, truth_ac)


def test_uniform_average_when_adaptation_disabled(rng):
    prep = PreparedDay.build(mixed_pairs(), ctx())
    y = rng.uniform(200, 800, N)
    res = run_day(DfsConfig(eta_s=0.0, eta_r=0.3, lam=1.0), prep, y)
    ac_open = prep.open_loop_ac()[prep.pair_ac]
    assert_allclose(res.y_ac_hat, ac_open.mean(axis=0), rtol=1e-12)
    assert_allclose(res.y_ol_hat, prep.ol_pred[prep.pair_ol].mean(axis=0), rtol=1e-12)


def test_single_expert_reduces_to_dmd(rng):
    pairs = [(const_ac(300, "AC"), tod(100))]
    prep = PreparedDay.build(pairs, ctx())
    y = rng.uniform(300, 500, N)
    res = run_day(DfsConfig(eta_s=0.2, lam=0.0), prep, y)
    kappa = np.zeros(2)
    theta = np.array([300.0, 100.0])
    for t in range(N):
        assert res.y_ac_hat[t] == pytest.approx(theta[0], rel=1e-12)
        kappa = kappa_update(kappa, theta, [1, 1], y[t], 0.2)
        theta = np.array([300.0, 100.0]) + kappa


def test_clamp_nonneg_only_affects_emitted_estimates(rng):
    prep = PreparedDay.build([(const_ac(-50, "NEG"), tod(10))], ctx())
    y = np.zeros(N)
    res = run_day(DfsConfig(eta_s=0.0, clamp_nonneg=True), prep, y)
    assert res.y_ac_hat.min() == 0.0


def test_stream_longer_than_day_rejected():
    prep = PreparedDay.build([(const_ac(1, "A"), tod(1))], ctx())
    with pytest.raises(ValueError):
        run_day(DfsConfig(), prep, np.zeros(N + 1))
