import numpy as np
import pytest
from hypothesis import given, strategies as st

from oiasim.errors import ContractViolation, NotWarmedUpError
from oiasim.mac import (RECURSIVE, SAMPLE_BUFFER, EstimatorBank, LifCdfEstimator, cdf_eval, cdf_update,
                        default_grid, transmit_decision_bernoulli, transmit_decision_opportunistic)


def test_recursive_update_upper_branch():
    est = LifCdfEstimator(RECURSIVE, window=1, grid=[1.0])
    est.ordinates = np.array([0.5])
    est.count = 10
    cdf_update(est, 0.5)
    assert est.ordinates[0] == pytest.approx(0.75)


def test_recursive_update_lower_branch_fixed_point():
    for window in (1, 7, 1000):
        est = LifCdfEstimator(RECURSIVE, window=window, grid=[0.1, 1.0])
        est.count = 10 ** 6  # past the start-up phase, so the full window applies
        cdf_update(est, 0.5)
        assert est.ordinates[0] == 0.0
        assert est.ordinates[1] == pytest.approx(1 / (window + 1))


def test_recursive_early_window_is_plain_empirical_cdf():
    est = LifCdfEstimator(RECURSIVE, window=1000, grid=[0.5, 1.5, 2.5, 3.5])
    est.extend([1.0, 2.0, 3.0])
    assert np.allclose(est.ordinates, [0, 1 / 3, 2 / 3, 1])


def test_sample_buffer_counts():
    est = LifCdfEstimator(SAMPLE_BUFFER)
    for x in (1.0, 2.0, 3.0):
        cdf_update(est, x)
    assert cdf_eval(est, 2.0) == pytest.approx(2 / 3)
    assert cdf_eval(est, 0.5) == 0.0
    assert cdf_eval(est, 3.0) == 1.0 and cdf_eval(est, 99.0) == 1.0


def test_empty_estimator_raises():
    with pytest.raises(NotWarmedUpError):
        cdf_eval(LifCdfEstimator(), 1.0)
    with pytest.raises(NotWarmedUpError):
        cdf_eval(LifCdfEstimator(RECURSIVE), 1.0)


def test_negative_sample_rejected():
    with pytest.raises(ContractViolation):
        LifCdfEstimator().update(-1.0)
    with pytest.raises(ContractViolation):
        LifCdfEstimator(RECURSIVE).extend([1.0, -0.1])
    with pytest.raises(ContractViolation):
        LifCdfEstimator("bogus")


def test_recursive_extremes():
    est = LifCdfEstimator(RECURSIVE).extend([1e-3, 1.0])
    assert est.evaluate(1e-12) == 0.0 and est.evaluate(1e6) == 1.0


def test_median_of_uniform_samples():
    est = LifCdfEstimator().extend(np.random.default_rng(0).random(100_000))
    # DKW: P(sup |F_n - F| > 0.01) <= 2 exp(-2 n 0.01^2) ~ 4e-9
    assert abs(est.evaluate(0.5) - 0.5) < 0.01
    assert abs(est.quantile(0.5) - 0.5) < 0.01


def test_recursive_tracks_distribution():
    gen = np.random.default_rng(1)
    est = LifCdfEstimator(RECURSIVE, window=5000).extend(gen.exponential(size=20_000))
    x = np.array([0.1, 0.5, 1.0, 2.0])
    assert np.allclose(est.evaluate(x), 1 - np.exp(-x), atol=0.03)


@given(samples=st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=50),
       probes=st.lists(st.floats(0, 2e3, allow_nan=False), min_size=2, max_size=20),
       mode=st.sampled_from([SAMPLE_BUFFER, RECURSIVE]))
def test_cdf_is_nondecreasing_in_unit_range(samples, probes, mode):
    est = LifCdfEstimator(mode).extend(samples)
    probes = np.sort(probes)
    vals = np.asarray(est.evaluate(probes))
    assert np.all(vals >= 0) and np.all(vals <= 1)
    assert np.all(np.diff(vals) >= -1e-12)
    if mode == SAMPLE_BUFFER:
        assert np.allclose(vals, [np.mean(np.asarray(samples) <= x) for x in probes])


def test_opportunistic_decision_rule():
    est = LifCdfEstimator().extend(np.arange(1, 101, dtype=float))
    assert transmit_decision_opportunistic(est, 10.0, 0.15)  # F = 0.10
    assert not transmit_decision_opportunistic(est, 15.0, 0.15)  # F = 0.15, strict
    assert not np.any(transmit_decision_opportunistic(est, np.linspace(0, 200, 50), 0.0))


def test_opportunistic_rate_is_p():
    gen = np.random.default_rng(2)
    est = LifCdfEstimator().extend(gen.exponential(size=100_000))
    decisions = transmit_decision_opportunistic(est, gen.exponential(size=100_000), 0.15)
    assert abs(decisions.mean() - 0.15) < 0.01


def test_cdf_rule_matches_quantile_rule():
    gen = np.random.default_rng(3)
    est = LifCdfEstimator().extend(gen.gamma(2.0, size=100_000))
    eta = gen.gamma(2.0, size=100_000)
    for p in (0.05, 0.15, 0.3):
        by_cdf = transmit_decision_opportunistic(est, eta, p)
        by_quantile = eta < est.quantile(p)
        assert np.mean(by_cdf == by_quantile) > 0.999


def test_bernoulli_decisions():
    gen = np.random.default_rng(4)
    assert not transmit_decision_bernoulli(0.0, gen)
    assert transmit_decision_bernoulli(1.0, gen)
    assert abs(transmit_decision_bernoulli(0.15, gen, 100_000).mean() - 0.15) < 0.004
    with pytest.raises(ContractViolation):
        transmit_decision_bernoulli(1.2, gen)


@pytest.mark.parametrize("mode", [SAMPLE_BUFFER, RECURSIVE])
def test_serialisation_roundtrip(mode):
    est = LifCdfEstimator(mode, window=250).extend(np.random.default_rng(5).exponential(size=300))
    text = est.dumps()
    assert text.startswith("oiasim-lifcdf 1\n")
    back = LifCdfEstimator.loads(text)
    probes = np.logspace(-4, 1, 40)
    assert np.array_equal(back.evaluate(probes), est.evaluate(probes))
    assert back.count == est.count and back.dumps() == text


def test_loads_rejects_other_formats():
    with pytest.raises(ContractViolation):
        LifCdfEstimator.loads("something 1\nmode x\n")
    text = LifCdfEstimator().extend([1.0, 2.0]).dumps().replace("count 2", "count 3")
    with pytest.raises(ContractViolation):
        LifCdfEstimator.loads(text)


def test_bank_shared_and_per_user():
    gen = np.random.default_rng(6)
    lif = gen.exponential(size=(50, 2, 3))
    shared = EstimatorBank(2, 3, shared=True)
    per_user = EstimatorBank(2, 3, shared=False)
    assert not shared.warmed_up
    shared.add_samples(lif)
    per_user.add_samples(lif)
    assert shared.warmed_up and per_user.warmed_up
    assert shared.estimators[0].count == 300
    assert per_user.estimator(1, 2).count == 50
    probe = gen.exponential(size=(4, 2, 3))
    s = per_user.scores(probe)
    assert s[2, 1, 2] == per_user.estimator(1, 2).evaluate(probe[2, 1, 2])
    for bank in (shared, per_user):
        back = EstimatorBank.loads(bank.dumps())
        assert np.array_equal(back.scores(probe), bank.scores(probe))


def test_default_grid():
    g = default_grid()
    assert g.size == 1024 and np.isclose(g[0], 1e-8) and np.isclose(g[-1], 1e3)


def test_tie_split_keeps_scores_uniform_at_an_atom():
    est = LifCdfEstimator()
    est.extend(np.r_[np.zeros(500), np.linspace(1.0, 2.0, 500)])
    gen = np.random.default_rng(7)
    u = gen.random(20000)
    s = est.evaluate(np.zeros(20000), u)
    assert s.min() >= 0.0 and s.max() <= 0.5
    assert abs(np.mean(s < 0.2) - 0.4) < 0.02
    assert est.evaluate(0.0) == 0.5  # without uniforms the plain CDF is returned
