import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from feederdisagg._base import (
    STEPS_PER_DAY,
    DegenerateModelError,
    FilterDivergenceError,
    Weekday,
)
from feederdisagg.kalman import (
    KfState,
    NoiseEstimates,
    estimate_Q,
    estimate_R,
    kf_step,
    population_covariance,
    run_kf_bank,
)
from feederdisagg.models import (
    DayContext,
    LagMode,
    LtiBank,
    LtiModel,
    LtvModel,
    TodModel,
    stationary_state,
)

N = STEPS_PER_DAY


def bank(p_bar=1.0, n_ac=100):
    A1 = np.array([[0.9, 0.2], [0.1, 0.8]])
    A2 = np.array([[0.8, 0.25], [0.2, 0.75]])
    return LtiBank((LtiModel(A1, p_bar, 80.0, n_ac), LtiModel(A2, p_bar, 90.0, n_ac)),
                   80.0, 90.0, 10.0)


def ltv(name="LTV1", p_bar=1.0):
    return LtvModel(bank(p_bar), LagMode.LAGGED, 0, name)


def ctx(temp=None):
    temp = np.linspace(78, 95, N) if temp is None else temp
    return DayContext(Weekday.MON, temp, temp, np.zeros(N))


def simulate_truth(model, c):
    """Noise-free state trajectory with the filter's time convention."""
    A_seq, c_seq = model.dynamics(c)
    x = stationary_state(A_seq[0])
    y = np.empty(N)
    for t in range(N):
        if t > 0:
            x = A_seq[t - 1] @ x
        y[t] = c_seq[t] * x[1]
    return y


# ------------------------------------------------------------------ kf_step

def test_scalar_step_example():
    out = kf_step(KfState(0.0, 1.0), 1.0, 1.0, 0.0, 1.0, 1.0)
    assert_allclose(out.x_hat, [0.5], atol=1e-12)
    assert_allclose(out.P, [[0.5]], atol=1e-12)


def test_huge_R_means_no_update():
    state = KfState(np.array([0.3, 0.7]), 0.01 * np.eye(2))
    A = np.array([[0.9, 0.2], [0.1, 0.8]])
    out = kf_step(state, A, [0.0, 50.0], np.zeros((2, 2)), 1e300, 1e4)
    assert_allclose(out.x_hat, A @ state.x_hat, atol=1e-12)
    assert_allclose(out.P, A @ state.P @ A.T, atol=1e-12)


def test_zero_noise_convergence():
    state = KfState(0.0, 1.0)
    for _ in range(10):
        state = kf_step(state, 1.0, 1.0, 0.0, 1e-12, 3.0)
    assert abs(state.x_hat[0] - 3.0) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1e-3, 10.0), st.floats(1e-6, 1.0), st.floats(-100, 100))
def test_joseph_form_matches_standard_form(a, c, r, y):
    A = np.array([[1 - a, a], [a, 1 - a]])
    P = np.array([[0.02, 0.005], [0.005, 0.01]])
    Q = 1e-4 * np.eye(2)
    H = np.array([0.0, c])
    out = kf_step(KfState(np.array([0.5, 0.5]), P), A, H, Q, r, y)
    Pp = A @ P @ A.T + Q
    K = Pp @ H / (H @ Pp @ H + r)
    assert_allclose(out.P, (np.eye(2) - np.outer(K, H)) @ Pp, atol=1e-10)
    assert_allclose(out.P, out.P.T, atol=1e-15)
    assert np.linalg.eigvalsh(out.P).min() >= -1e-12


def test_nonpositive_innovation_raises():
    with pytest.raises(FilterDivergenceError):
        kf_step(KfState(np.zeros(2), np.zeros((2, 2))), np.eye(2), [0.0, 1.0], np.zeros((2, 2)), 0.0, 1.0)


# ------------------------------------------------------------------ noise

def test_population_covariance_examples():
    Q = population_covariance([[0.01, -0.01], [-0.01, 0.01]])
    assert_allclose(Q, [[1e-4, -1e-4], [-1e-4, 1e-4]], atol=1e-16)


def test_population_covariance_two_pass_oracle(rng):
    w = rng.normal(size=(500, 2)) * [0.1, 0.3]
    mean = [sum(w[:, j]) / len(w) for j in range(2)]
    oracle = np.array([[sum((w[k, i] - mean[i]) * (w[k, j] - mean[j]) for k in range(len(w))) / len(w)
                        for j in range(2)] for i in range(2)])
    assert_allclose(population_covariance(w), oracle, atol=1e-10)


def test_Q_zero_for_perfect_model():
    m = ltv()
    c = ctx()
    Q = estimate_Q(m, [(c, simulate_truth(m, c))])
    assert_allclose(Q, 0.0, atol=1e-20)


def test_Q_degenerate_model():
    m = ltv(p_bar=0.0)
    with pytest.raises(DegenerateModelError):
        estimate_Q(m, [(ctx(), np.zeros(N))])


def test_R_examples():
    ol = TodModel(np.zeros(N), Weekday.MON)
    err = np.tile([1.0, -1.0], N // 2)
    assert estimate_R(ol, [(ctx(), err)]) == pytest.approx(1.0)
    ol5 = TodModel(np.full(N, 5.0), Weekday.MON)
    assert estimate_R(ol5, [(ctx(), 5.0 + err)]) == pytest.approx(1.0)


def test_R_oracle(rng):
    ol = TodModel(np.full(N, 100.0), Weekday.MON)
    days = [(ctx(), 100 + rng.normal(3, 2, N)) for _ in range(2)]
    errs = np.concatenate([y - 100 for _, y in days])
    mu = errs.sum() / errs.size
    assert estimate_R(ol, days) == pytest.approx(float(((errs - mu) ** 2).sum() / errs.size), rel=1e-12)


# ------------------------------------------------------------------ bank

def test_identical_pairs_give_equal_bkf_akf(rng):
    ol = TodModel(np.full(N, 50.0), Weekday.MON)
    pairs = [(ltv("A"), ol), (ltv("B"), ol)]
    noise = {p: NoiseEstimates(1e-5 * np.eye(2), 4.0) for p in (f"A+{ol.name}", f"B+{ol.name}")}
    c = ctx()
    y_ac = simulate_truth(pairs[0][0], c) + rng.normal(0, 1, N)
    res = run_kf_bank(pairs, noise, c, y_ac + 50, y_ac)
    assert res.bkf == pytest.approx(res.akf)
    assert res.min_eigenvalue >= 0 and res.max_asymmetry <= 1e-9


def test_exact_pair_has_near_zero_error():
    ol_true = TodModel(np.full(N, 50.0), Weekday.MON)
    ol_bad = TodModel(np.full(N, 10.0), Weekday.TUE)
    m = ltv()
    c = ctx()
    y_ac = simulate_truth(m, c)
    noise = {f"LTV1+{o.name}": NoiseEstimates(np.zeros((2, 2)), 1e-6) for o in (ol_true, ol_bad)}
    res = run_kf_bank([(m, ol_true), (m, ol_bad)], noise, c, y_ac + 50, y_ac)
    assert res.bkf < 1e-6
    assert res.best_pair == f"LTV1+{ol_true.name}"
    assert res.akf > res.bkf
    assert res.estimates.min() >= 0
