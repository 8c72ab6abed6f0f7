import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from feederdisagg._base import STEPS_PER_DAY, Weekday
from feederdisagg.models import (
    DayContext,
    LagMode,
    LtiBank,
    LtiModel,
    LtvModel,
    MarkovBankEstimator,
    StepTally,
    advance,
    estimate_lag,
    identify_lti_bank,
    ltv_matrices,
    predict,
    stationary_state,
    tally_transitions,
    trailing_mean,
)
from feederdisagg.plant import DeviceTrace

N = STEPS_PER_DAY


def smooth_noise(rng, n, width=3):
    x = rng.normal(size=n + width)
    return np.convolve(x, np.ones(width) / width, mode="valid")[:n]


# ------------------------------------------------------------------ lag

def test_lag_of_shifted_signal(rng):
    temp = smooth_noise(rng, 3000)
    demand = np.empty_like(temp)
    demand[5:] = temp[:-5] + 40.0
    demand[:5] = 40.0
    assert estimate_lag(demand, temp, max_lag=30) == 5
    assert estimate_lag(temp, temp, max_lag=30) == 0


def test_lag_single_positive_spike(rng):
    x = rng.normal(size=4000)
    max_lag = 30
    demand = np.zeros_like(x)
    for k in range(max_lag + 1):
        w = 1.0 if k == 12 else -0.1
        demand[k:] += w * x[:x.shape[0] - k]
    # brute-force oracle over the same sample range
    target = demand[max_lag:]
    scores = [np.corrcoef(target, x[max_lag - k:x.shape[0] - k])[0, 1] for k in range(max_lag + 1)]
    assert int(np.argmax(scores)) == 12
    assert all(s < 0 for k, s in enumerate(scores) if k != 12)
    assert estimate_lag(demand, x, max_lag) == 12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=40), st.integers(min_value=0, max_value=2**31 - 1))
def test_lag_monotone_transform(tau0, seed):
    rng = np.random.default_rng(seed)
    temp = 80 + 5 * smooth_noise(rng, 2500)
    shifted = np.concatenate([np.full(tau0, temp[0]), temp[:temp.shape[0] - tau0]])
    demand = (shifted - 70.0) ** 3 + 10 * shifted
    assert estimate_lag(demand, temp, max_lag=40) == tau0


def test_moving_average_window(rng):
    temp = smooth_noise(rng, 3000, width=2)
    demand = trailing_mean(temp, 7)
    assert estimate_lag(demand, temp, max_lag=20, mode=LagMode.MOVING_AVG) == 7


def test_trailing_mean_warmup():
    x = np.array([4.0, 2.0, 6.0, 8.0])
    assert_allclose(trailing_mean(x, 2), [4.0, 4.0, 3.0, 4.0])
    assert_allclose(trailing_mean(x, 10), [4.0, 4.0, 3.0, 4.0])


def test_lag_rejects_constant_signal():
    with pytest.raises(ValueError):
        estimate_lag(np.ones(100), np.arange(100.0), 5)
    with pytest.raises(ValueError):
        estimate_lag(np.arange(10.0), np.arange(10.0), 20)


# ------------------------------------------------------------------ identification

def test_hand_count_five_steps():
    tr = DeviceTrace(0, [False, False, True, True, False], [0, 0, 3.0, 3.0, 0])
    bank = identify_lti_bank([tr], np.full(5, 80.0), lag=0)
    m = bank.closest(80.0)
    assert_array_equal(m.A, [[0.5, 0.5], [0.5, 0.5]])
    assert m.p_bar == 3.0
    # unpopulated bins take the nearest populated bin
    assert_array_equal(bank.closest(99.0).A, m.A)


def test_always_on_device():
    tr = DeviceTrace(0, np.ones(50, dtype=bool), np.full(50, 5.0))
    bank = identify_lti_bank([tr], np.full(50, 90.0), lag=0, n_ac=7)
    m = bank.closest(90.0)
    assert_array_equal(m.A[:, 1], [0.0, 1.0])
    assert_array_equal(m.A[:, 0], [1.0, 0.0])      # no off-origin transitions: identity column
    assert m.p_bar == 5.0
    assert_array_equal(m.C, [0.0, 35.0])


def test_zero_devices_rejected():
    with pytest.raises(ValueError):
        identify_lti_bank([], np.full(5, 80.0), lag=0)


def test_anomalous_power_excluded_from_p_bar():
    on = np.ones(10, dtype=bool)
    power = np.full(10, 4.0)
    power[3] = 0.1
    power[7] = 50.0
    bank = identify_lti_bank([DeviceTrace(0, on, power)], np.full(10, 85.0), lag=0)
    assert bank.closest(85.0).p_bar == 4.0


def test_bin_edges_half_open():
    est = MarkovBankEstimator()
    assert_array_equal(est._bins(np.array([73.4, 73.5, 74.49, 74.5, 98.99, 99.49, 99.5, np.nan])),
                       [-1, 0, 0, 1, 25, 25, -1, -1])


def test_recovers_generator_probabilities(rng):
    temps = np.array([76.0, 84.0, 92.0])
    p_on = {76.0: 0.05, 84.0: 0.15, 92.0: 0.3}
    p_off = {76.0: 0.3, 84.0: 0.2, 92.0: 0.08}
    steps, n_dev = 4000, 200
    temp = rng.choice(temps, size=steps)
    on = np.zeros((n_dev, steps), dtype=bool)
    on[:, 0] = rng.uniform(size=n_dev) < 0.3
    for t in range(1, steps):
        T = temp[t - 1]
        u = rng.uniform(size=n_dev)
        on[:, t] = np.where(on[:, t - 1], u >= p_off[T], u < p_on[T])
    bank = MarkovBankEstimator(n_ac=n_dev).fit(on, on * 3.0, temp).get_bank()
    for T in temps:
        A = bank.closest(T).A
        assert abs(A[1, 0] - p_on[T]) < 0.02
        assert abs(A[0, 1] - p_off[T]) < 0.02


def test_partial_fit_equals_single_fit(rng):
    on = rng.uniform(size=(30, 900)) < 0.4
    power = on * rng.uniform(2, 4, size=(30, 1))
    temp = rng.uniform(74, 99, 900)
    whole = MarkovBankEstimator().fit(on, power, temp)
    chunked = MarkovBankEstimator()
    for sl in (slice(0, 300), slice(300, 650), slice(650, 900)):
        chunked.partial_fit(on[:, sl], power[:, sl], temp[sl])
    assert_array_equal(whole.counts_, chunked.counts_)
    assert_allclose(whole.get_bank().A_stack, chunked.get_bank().A_stack, rtol=0, atol=0)
    tallies = [tally_transitions(on[:, :400], power[:, :400]),
               tally_transitions(on[:, 400:], power[:, 400:], prev_on=on[:, 399])]
    via_tally = MarkovBankEstimator().add_tally(StepTally.concatenate(tallies), temp)
    assert_array_equal(whole.counts_, via_tally.counts_)


def test_identified_matrices_column_stochastic(small_study):
    bank = small_study.bundle.bank
    for m in bank.models:
        assert np.all((m.A >= 0) & (m.A <= 1))
        assert_allclose(m.A.sum(axis=0), 1.0, atol=1e-12)


# ------------------------------------------------------------------ LTI / LTV

A_EX = np.array([[0.9, 0.2], [0.1, 0.8]])


def two_bin_bank():
    A0 = np.array([[0.9, 0.3], [0.1, 0.7]])
    A1 = np.array([[0.8, 0.4], [0.2, 0.6]])
    return LtiBank((LtiModel(A0, 3.0, 80.0, 10), LtiModel(A1, 3.5, 81.0, 10)), 80.0, 81.0, 1.0)


def test_ltv_exact_at_bins_and_midpoint():
    bank = two_bin_bank()
    A, C = ltv_matrices(bank, 80.0)
    assert_array_equal(A, bank.models[0].A)
    assert_array_equal(C, bank.models[0].C)
    A, C = ltv_matrices(bank, 80.5)
    assert_allclose(A, 0.5 * (bank.models[0].A + bank.models[1].A), atol=1e-15)
    assert C[1] == pytest.approx(10 * 3.25)


def test_ltv_extrapolation_rule():
    bank = two_bin_bank()
    A0, A1 = bank.models[0].A, bank.models[1].A
    A, C = ltv_matrices(bank, 82.0)
    raw = A1 + (A1 - A0)
    expected = np.clip(raw, 0, 1)
    expected = expected / expected.sum(axis=0)
    assert_allclose(A, expected, atol=1e-15)
    assert C[1] == pytest.approx(10 * 4.0)
    A, _ = ltv_matrices(bank, 77.0)            # far below: clamping engages
    assert np.all(A >= 0) and np.all(A <= 1)
    assert_allclose(A.sum(axis=0), 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=50.0, max_value=110.0))
def test_ltv_column_stochastic_everywhere(temp):
    bank = LtiBank(tuple(LtiModel(np.array([[1 - a, b], [a, 1 - b]]), 3.0, float(T), 5)
                         for T, a, b in zip(range(74, 100), np.linspace(0.01, 0.2, 26),
                                            np.linspace(0.3, 0.05, 26))), 74.0, 99.0, 1.0)
    A, C = ltv_matrices(bank, temp)
    assert np.all((A >= 0) & (A <= 1))
    assert_allclose(A.sum(axis=0), 1.0, atol=1e-12)
    assert C[0] == 0 and C[1] >= 0


def test_closest_ties_to_lower_bin():
    bank = two_bin_bank()
    assert bank.closest(80.5).bin_temp == 80.0
    assert bank.closest(200.0).bin_temp == 81.0


def test_lti_identity_dynamics():
    m = LtiModel(np.eye(2), 4.0, 80.0, 10)
    x = np.array([1.0, 0.0])
    for t in range(20):
        assert predict(m, t, None, x) == 0.0
        x = advance(m, t, None, x)
    assert_array_equal(x, [1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0))
def test_lti_converges_to_stationary_output(p_on):
    m = LtiModel(A_EX, 50.0, 85.0, 10)
    x = np.array([1 - p_on, p_on])
    for t in range(200):
        x = advance(m, t % N, None, x)
        assert x.min() >= 0 and x.sum() == pytest.approx(1.0, abs=1e-12)
    assert_allclose(x, [2 / 3, 1 / 3], atol=1e-9)
    assert predict(m, 0, None, x) == pytest.approx(500 / 3, abs=0.01)
    assert_allclose(stationary_state(A_EX), [2 / 3, 1 / 3])


def test_lti_validation():
    with pytest.raises(ValueError):
        LtiModel(np.array([[0.5, 0.5], [0.6, 0.5]]), 1.0, 80.0, 1)
    with pytest.raises(ValueError):
        LtiModel(np.eye(2), -1.0, 80.0, 1)


def test_ltv_effective_temperatures():
    bank = two_bin_bank()
    temp = np.concatenate([np.full(N, 70.0), np.linspace(75, 95, N)])
    ctx = DayContext(Weekday.MON, temp, temp, np.ones(2 * N), history=N)
    lagged = LtvModel(bank, LagMode.LAGGED, 30)
    assert_array_equal(lagged.effective_temps(ctx), temp[N - 30:2 * N - 30])
    ma = LtvModel(bank, LagMode.MOVING_AVG, 10)
    eff = ma.effective_temps(ctx)
    assert eff[100] == pytest.approx(temp[N + 90:N + 100].mean())
    assert lagged.name == "LTV1" and ma.name == "LTV2"
    A_seq, c_seq = lagged.dynamics(ctx)
    assert A_seq.shape == (N, 2, 2) and c_seq.shape == (N,)
