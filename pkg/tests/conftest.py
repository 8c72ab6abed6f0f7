import numpy as np
import pytest

from feederdisagg.harness import ScenarioConfig, fit_bundle, generate_study

SMALL = dict(days=(12, 13), n_houses=250, n_ac=227, res_mean_kw=580.0, com_mean_kw=210.0,
             mlr_days=8, lti_days=12, noise_days=3,
             sweep_eta_s=(0.0, 0.4), sweep_eta_r=(1e-5, 1e-3), sweep_lambda=(1e-5, 1e-2, 1.0))


@pytest.fixture(scope="session")
def small_config():
    return ScenarioConfig(**SMALL)


@pytest.fixture(scope="session")
def small_study(small_config):
    study = generate_study(small_config)
    fit_bundle(study)
    return study


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record an acceptance verdict, then assert it."""
    def check(number, title, ok, detail):
        ACCEPTANCE[number] = (title, bool(ok), detail)
        assert ok, f"criterion {number} ({title}): {detail}"
    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}")
