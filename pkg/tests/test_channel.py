import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qkdnet.channel import (
    ChannelParams, DetectionTally, Outcome, click_probability, expected_qber, fit_e_optical,
    fit_eta_d, qber, raw_key_rate, sample_clicks, signal_probability, simulate_pulse,
    simulate_pulses, transmittance,
)
from qkdnet.errors import ChannelParamError, NoDataError

ETA_D_490 = 490 / (0.5 * 0.1 * 5e6 * 10 ** -1.1)


def binom_tol(p, n, k=3.0):
    return k * math.sqrt(p * (1 - p) / n)


# -- transmittance -------------------------------------------------------

@pytest.mark.parametrize("db, expected", [(0.0, 1.0), (11.0, 0.07943), (3.0103, 0.5)])
def test_transmittance_examples(db, expected):
    assert transmittance(db) == pytest.approx(expected, abs=5e-6)


def test_transmittance_rejects_negative_loss():
    with pytest.raises(ChannelParamError):
        transmittance(-0.1)


@given(st.floats(0, 200), st.floats(0, 200))
def test_transmittance_is_multiplicative(a, b):
    assert transmittance(a + b) == pytest.approx(transmittance(a) * transmittance(b), rel=1e-9, abs=1e-300)


# -- params --------------------------------------------------------------

@pytest.mark.parametrize("field, value", [
    ("mu", 0.0), ("nu", -1.0), ("q_factor", 0.0), ("q_factor", 1.1), ("eta_d", 1.5),
    ("p_dark", -1e-9), ("e_optical", 0.6), ("loss_db", -1.0), ("length_km", -2.0),
    ("mu", float("nan")),
])
def test_params_invariants(field, value):
    with pytest.raises(ChannelParamError):
        ChannelParams(**{field: value})


def test_fiber_loss_uses_default_attenuation():
    p = ChannelParams.fiber(25.0)
    assert p.loss_db == pytest.approx(11.0)
    assert p.length_km == 25.0


def test_from_dict_with_attenuation_and_excess():
    p = ChannelParams.from_dict({"length_km": 10, "alpha_db_per_km": 0.2, "excess_db": 1.5})
    assert p.loss_db == pytest.approx(3.5)
    with pytest.raises(ChannelParamError):
        ChannelParams.from_dict({"loss_db": 1, "alpha_db_per_km": 0.2})
    with pytest.raises(ChannelParamError):
        ChannelParams.from_dict({"colour": "red"})


def test_dict_round_trip():
    p = ChannelParams.fiber(12.5, mu=0.2, eta_d=0.1, p_dark=1e-5, e_optical=0.01)
    assert ChannelParams.from_dict(p.to_dict()) == p


# -- raw key rate --------------------------------------------------------

def test_raw_key_rate_lossless():
    p = ChannelParams(q_factor=0.5, mu=0.1, nu=5e6, loss_db=0.0, eta_d=1.0)
    assert raw_key_rate(p) == pytest.approx(250000.0)


def test_raw_key_rate_at_11db():
    p = ChannelParams(q_factor=0.5, mu=0.1, nu=5e6, loss_db=11.0, eta_d=0.02468)
    assert raw_key_rate(p) == pytest.approx(490.0, rel=1e-3)


def test_fit_eta_d_inverts_rate():
    p = ChannelParams(loss_db=11.0)
    eta = fit_eta_d(p, 490.0)
    assert eta == pytest.approx(ETA_D_490, rel=1e-12)
    assert raw_key_rate(p.replace(eta_d=eta)) == pytest.approx(490.0, rel=1e-12)


@pytest.mark.xfail(strict=True, reason="22.8 km with the 25 km detector efficiency gives about 612 Hz, "
                                       "26% above the 486 Hz target; see decisions ledger")
def test_geneva_rate_within_15_percent_with_shared_eta_d():
    p = ChannelParams.fiber(22.8, 11 / 25, eta_d=ETA_D_490, mu=0.1)
    assert raw_key_rate(p) == pytest.approx(486.0, rel=0.15)


def test_geneva_rate_with_shared_eta_d_value():
    p = ChannelParams.fiber(22.8, 11 / 25, eta_d=ETA_D_490, mu=0.1)
    # 490 Hz scaled by the 2.2 km of fiber saved at 0.44 dB/km
    assert raw_key_rate(p) == pytest.approx(490 * 10 ** (0.44 * 2.2 / 10), rel=1e-12)


_grid = st.fixed_dictionaries({
    "mu": st.floats(0.01, 2), "nu": st.floats(1e3, 1e9), "q_factor": st.floats(0.05, 1),
    "loss_db": st.floats(0, 40), "eta_d": st.floats(0.01, 1),
})


@given(_grid, st.sampled_from(["mu", "nu", "q_factor", "eta_d"]), st.floats(1.01, 3))
def test_rate_increases_in_each_factor(kw, name, factor):
    p = ChannelParams(**kw)
    bigger = dict(kw)
    bigger[name] = min(kw[name] * factor, 1.0) if name in ("q_factor", "eta_d") else kw[name] * factor
    if bigger[name] == kw[name]:
        return
    assert raw_key_rate(ChannelParams(**bigger)) > raw_key_rate(p)


@given(_grid, st.floats(0.01, 10))
def test_rate_decreases_in_loss(kw, extra):
    p = ChannelParams(**kw)
    assert raw_key_rate(p.replace(loss_db=p.loss_db + extra)) < raw_key_rate(p)


# -- QBER ----------------------------------------------------------------

@pytest.mark.parametrize("false, correct, expected", [(0, 1000, 0.0), (45, 955, 0.045), (1, 3, 0.25)])
def test_qber_examples(false, correct, expected):
    tally = DetectionTally(10_000, false + correct, false, correct)
    assert qber(tally) == pytest.approx(expected)


def test_qber_without_detections_is_an_error():
    with pytest.raises(NoDataError):
        qber(DetectionTally(100, 0, 0, 0))


def test_tally_invariants():
    with pytest.raises(ValueError):
        DetectionTally(10, 5, 1, 3)
    with pytest.raises(ValueError):
        DetectionTally(3, 5, 1, 4)


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(1, 1000))
def test_qber_scale_invariant(false, correct, k):
    if false + correct == 0:
        return
    a = DetectionTally(false + correct, false + correct, false, correct)
    b = DetectionTally(k * (false + correct), k * (false + correct), k * false, k * correct)
    assert qber(a) == pytest.approx(qber(b), rel=1e-12)


def test_expected_qber_and_fit_inverse():
    p = ChannelParams.fiber(25.0, eta_d=ETA_D_490, p_dark=1e-5)
    e = fit_e_optical(p, 0.045)
    assert 0 < e < 0.045
    assert expected_qber(p.replace(e_optical=e)) == pytest.approx(0.045, rel=1e-12)


def test_fit_e_optical_can_be_infeasible():
    p = ChannelParams.fiber(24.0, mu=0.4, eta_d=2.2e-4, p_dark=1e-5)
    assert fit_e_optical(p, 0.016) < 0


# -- Monte Carlo -----------------------------------------------------------

def test_zero_signal_zero_noise_never_clicks():
    p = ChannelParams(eta_d=0.0, p_dark=0.0)
    rng = np.random.default_rng(1)
    assert all(simulate_pulse(p, rng) is Outcome.NONE for _ in range(1000))
    assert not simulate_pulses(p, 10_000, rng).any()


def test_click_probability_lossless_mu_01():
    p = ChannelParams(mu=0.1, eta_d=1.0)
    n = 1_000_000
    out = simulate_pulses(p, n, np.random.default_rng(2))
    rate = np.count_nonzero(out) / n
    expected = 1 - math.exp(-0.1)
    assert click_probability(p) == pytest.approx(0.09516, abs=1e-5)
    assert abs(rate - expected) < binom_tol(expected, n)


def test_dark_counts_only_error_rate():
    p = ChannelParams(eta_d=0.0, p_dark=1e-5)
    n = 40_000_000
    out = simulate_pulses(p, n, np.random.default_rng(3))
    errors = np.count_nonzero(out == Outcome.ERROR)
    assert abs(errors / n - 5e-6) < binom_tol(5e-6, n, 4)
    assert expected_qber(p) == 0.5


def test_dense_and_sparse_sampling_agree_in_distribution():
    p = ChannelParams.fiber(25.0, eta_d=ETA_D_490, p_dark=1e-5)
    n = 5_000_000
    dense = np.count_nonzero(simulate_pulses(p, n, np.random.default_rng(5)))
    sparse = len(sample_clicks(p, n, np.random.default_rng(6)))
    pc = click_probability(p)
    tol = 4 * math.sqrt(2 * n * pc)
    assert abs(dense - sparse) < tol
    assert abs(sparse - n * pc) < 4 * math.sqrt(n * pc)


@pytest.mark.parametrize("params", [
    ChannelParams(mu=0.5, eta_d=0.3, p_dark=1e-3),
    ChannelParams.fiber(40.0, eta_d=0.1, p_dark=1e-5),
])
def test_click_rate_within_four_sigma(params):
    n = 2_000_000
    k = len(sample_clicks(params, n, np.random.default_rng(7)))
    pc = signal_probability(params) + (1 - signal_probability(params)) * params.p_dark
    assert abs(k / n - pc) < binom_tol(pc, n, 4)


def test_monte_carlo_rate_matches_linear_regime():
    p = ChannelParams(loss_db=11.0, eta_d=ETA_D_490)
    n = 10**8
    k = len(sample_clicks(p, n, np.random.default_rng(8)))
    assert k * p.q_factor * p.nu / n == pytest.approx(raw_key_rate(p), rel=0.05)


def test_simulated_qber_matches_e_optical_without_dark_counts():
    p = ChannelParams(mu=1.0, e_optical=0.03)
    out = simulate_pulses(p, 500_000, np.random.default_rng(9))
    tally = DetectionTally.from_outcomes(out)
    assert abs(qber(tally) - 0.03) < binom_tol(0.03, tally.detections, 4)


def test_simulated_qber_zero_signal_is_half():
    p = ChannelParams(eta_d=0.0, p_dark=0.01)
    tally = DetectionTally.from_outcomes(simulate_pulses(p, 1_000_000, np.random.default_rng(10)))
    assert abs(qber(tally) - 0.5) < binom_tol(0.5, tally.detections, 4)


def test_same_seed_same_tally():
    p = ChannelParams.fiber(25.0, eta_d=0.05, p_dark=1e-5, e_optical=0.02)
    a = simulate_pulses(p, 100_000, np.random.default_rng(11))
    b = simulate_pulses(p, 100_000, np.random.default_rng(11))
    assert np.array_equal(a, b)
