import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qkdnet.amplification import final_key_length
from qkdnet.bb84 import (
    Basis, Measurement, PostProcessing, QubitSymbol, Qubits, estimate_qber, link_statistics,
    measure_sequence, prepare_sequence, run_session, sift,
)
from qkdnet.channel import ChannelParams, signal_probability
from qkdnet.errors import EmptySequenceError, InsufficientKeyError, ProtocolAbort, ProtocolDesyncError
from qkdnet.keys import KeyMaterial, Stage

X, Y = Basis.SIGMA_X, Basis.SIGMA_Y
IDEAL = ChannelParams.ideal()


def tol(p, n, k=3.0):
    return k * math.sqrt(p * (1 - p) / n)


# -- types ----------------------------------------------------------------

def test_basis_has_two_values():
    assert len(Basis) == 2 and X != Y


def test_qubit_symbol_validation():
    QubitSymbol(1, Y)
    with pytest.raises(ValueError):
        QubitSymbol(2, X)


def test_qubits_from_symbols_round_trip():
    syms = [QubitSymbol(0, X), QubitSymbol(1, Y), QubitSymbol(1, X)]
    q = Qubits.from_symbols(syms)
    assert list(q) == syms and q[1] == syms[1] and len(q) == 3


def test_key_material_stages():
    raw = KeyMaterial([1, 0, 1, 1], Stage.RAW, "s")
    sifted = raw.advance([1, 0], Stage.SIFTED)
    assert sifted.origin_session == "s"
    with pytest.raises(ValueError):
        sifted.advance([1], Stage.RAW)
    with pytest.raises(ValueError):
        sifted.advance([1, 0, 1], Stage.CORRECTED)
    with pytest.raises(ValueError):
        raw.bits[0] = 0
    assert raw.to_string() == "1011"


# -- preparation and measurement -------------------------------------------

def test_prepare_deterministic():
    a = prepare_sequence(4, np.random.default_rng(5))
    b = prepare_sequence(4, np.random.default_rng(5))
    assert a == b and len(a) == 4


def test_prepare_single_and_empty():
    q = prepare_sequence(1, np.random.default_rng(0))
    assert q[0].bit in (0, 1) and q[0].basis in (X, Y)
    with pytest.raises(EmptySequenceError):
        prepare_sequence(0, np.random.default_rng(0))


def test_prepare_uniform_bases():
    n = 10**6
    q = prepare_sequence(n, np.random.default_rng(1))
    assert abs(q.bases.mean() - 0.5) < 0.002
    assert abs(q.bits.mean() - 0.5) < 0.002


def test_matching_bases_ideal_is_faithful():
    sent = prepare_sequence(10_000, np.random.default_rng(2))
    m = measure_sequence(sent, IDEAL, np.random.default_rng(3), bases=sent.bases)
    assert m.detected.all()
    assert np.array_equal(m.bits, sent.bits)


def test_mismatched_bases_are_random():
    n = 10**5
    sent = prepare_sequence(n, np.random.default_rng(4))
    m = measure_sequence(sent, IDEAL, np.random.default_rng(5), bases=1 - sent.bases)
    assert abs(np.mean(m.bits == sent.bits) - 0.5) < 0.005


def test_loss_fraction_matches_signal_probability():
    ch = ChannelParams(mu=0.1, loss_db=3.0, eta_d=0.5)
    n = 10**6
    sent = prepare_sequence(n, np.random.default_rng(6))
    m = measure_sequence(sent, ch, np.random.default_rng(7))
    lost = 1 - m.detected.mean()
    assert abs(lost - (1 - signal_probability(ch))) < tol(signal_probability(ch), n)


def test_forced_bases_length_checked():
    sent = prepare_sequence(3, np.random.default_rng(0))
    with pytest.raises(ProtocolDesyncError):
        measure_sequence(sent, IDEAL, np.random.default_rng(0), bases=[0, 1])


# -- sifting ------------------------------------------------------------------

def test_sift_example():
    sent = Qubits([0, 1, 1, 0], [X, X, Y, Y])
    meas = Measurement(np.array([X, Y, Y, X], np.uint8), np.array([0, 0, 1, 1], np.uint8),
                       np.ones(4, bool))
    ka, kb, kept = sift(sent, meas)
    assert kept.tolist() == [0, 2]
    assert ka.to_string() == "01" and kb.to_string() == "01"
    assert ka.stage is Stage.SIFTED


def test_sift_all_matched_no_loss():
    sent = prepare_sequence(100, np.random.default_rng(8))
    meas = Measurement(sent.bases.copy(), sent.bits.copy(), np.ones(100, bool))
    assert sift(sent, meas)[2].tolist() == list(range(100))


def test_sift_drops_lost_positions():
    sent = Qubits([0, 1], [X, X])
    meas = Measurement(np.array([X, X], np.uint8), np.array([0, 0], np.uint8), np.array([True, False]))
    assert sift(sent, meas)[2].tolist() == [0]


def test_sift_length_mismatch():
    sent = Qubits([0, 1], [X, X])
    meas = Measurement(np.zeros(3, np.uint8), np.zeros(3, np.uint8), np.ones(3, bool))
    with pytest.raises(ProtocolDesyncError):
        sift(sent, meas)


def test_sift_fraction_lossless():
    n = 10**6
    sent = prepare_sequence(n, np.random.default_rng(9))
    m = measure_sequence(sent, IDEAL, np.random.default_rng(10))
    assert abs(len(sift(sent, m)[2]) / n - 0.5) < 0.002


@pytest.mark.parametrize("ch", [ChannelParams.fiber(25, eta_d=0.1, p_dark=1e-4), IDEAL])
def test_sift_fraction_independent_of_loss(ch):
    n = 2 * 10**6
    sent = prepare_sequence(n, np.random.default_rng(11))
    m = measure_sequence(sent, ch, np.random.default_rng(12))
    k = int(m.detected.sum())
    frac = len(sift(sent, m)[2]) / k
    assert abs(frac - 0.5) < tol(0.5, k)


# -- QBER estimation ------------------------------------------------------------

def sk(bits):
    return KeyMaterial(bits, Stage.SIFTED)


def test_estimate_identical_and_opposite():
    a = np.random.default_rng(13).integers(0, 2, 1000, dtype=np.uint8)
    assert estimate_qber(sk(a), sk(a), 0.1, np.random.default_rng(0)).qber == 0.0
    assert estimate_qber(sk(a), sk(1 - a), 0.1, np.random.default_rng(0)).qber == 1.0


def test_estimate_at_operating_point():
    n = 10**5
    rng = np.random.default_rng(14)
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = a ^ (rng.random(n) < 0.045).astype(np.uint8)
    est = estimate_qber(sk(a), sk(b), 0.1, np.random.default_rng(15))
    assert len(est.sample) == 10_000
    assert abs(est.qber - 0.045) < 0.007
    assert len(est.key_a) == n - 10_000


def test_estimate_removes_sampled_positions():
    a = np.arange(50, dtype=np.uint8) % 2
    est = estimate_qber(sk(a), sk(a), 0.2, np.random.default_rng(1))
    keep = np.setdiff1d(np.arange(50), est.sample)
    assert np.array_equal(est.key_a.bits, a[keep])


def test_estimate_exhausting_sample():
    with pytest.raises(InsufficientKeyError):
        estimate_qber(sk([1]), sk([1]), 0.5, np.random.default_rng(0))


# -- sessions ---------------------------------------------------------------------

def test_ideal_session_end_to_end():
    n = 10**5
    res = run_session(IDEAL, n, 7)
    tr = res.transcript
    assert res.key_a == res.key_b
    assert tr.measured_qber == 0.0 and not tr.aborted
    target = 0.5 * n * 0.9 - 30
    assert abs(tr.final_length - target) / target < 0.02
    tr.check_invariants()


def test_session_lengths_follow_formula():
    tr = run_session(ChannelParams.ideal(e_optical=0.03), 50_000, 8).transcript
    expected = final_key_length(tr.corrected_length, tr.measured_qber,
                                tr.leaked_bits + tr.verification_bits, 30)
    assert tr.final_length == expected
    assert tr.sifted_length == tr.corrected_length + len(tr.sample_positions)


def test_session_abort_records_transcript():
    with pytest.raises(ProtocolAbort) as info:
        run_session(ChannelParams.ideal(e_optical=0.3), 20_000, 9)
    tr = info.value.transcript
    assert tr.aborted and "QBER" in tr.abort_reason and tr.final_length == 0


def test_transcript_invariants_and_export():
    res = run_session(ChannelParams.fiber(10, eta_d=0.3, p_dark=1e-5, e_optical=0.01), 400_000, 10)
    tr = res.transcript
    tr.check_invariants()
    assert np.intersect1d(tr.sample_positions, tr.retained_positions()).size == 0
    assert set(tr.sample_positions) <= set(tr.kept_positions)
    rec = json.loads(tr.to_json())
    assert rec["lengths"] == {"raw": tr.raw_length, "sifted": tr.sifted_length,
                              "corrected": tr.corrected_length, "final": tr.final_length}
    assert rec["leaked_bits"] >= 0


def test_session_deterministic():
    ch = ChannelParams.fiber(5, eta_d=0.5, e_optical=0.02, p_dark=1e-5)
    a = run_session(ch, 200_000, 11)
    b = run_session(ch, 200_000, 11)
    assert a.key_a == b.key_a and a.transcript.to_json() == b.transcript.to_json()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.08), st.floats(0.05, 1.0))
def test_completed_sessions_never_mismatch(seed, e_opt, eta_d):
    ch = ChannelParams.ideal(mu=1.0, e_optical=e_opt, eta_d=eta_d, p_dark=1e-4)
    try:
        res = run_session(ch, 30_000, seed, post=PostProcessing(sample_fraction=0.1))
    except ProtocolAbort as exc:
        assert exc.transcript.aborted
        return
    assert res.key_a == res.key_b
    res.transcript.check_invariants()


def test_link_statistics():
    ch = ChannelParams(mu=0.1, loss_db=11.0, eta_d=0.0246749, e_optical=0.02)
    st_ = link_statistics(ch, 10**8, 3)
    assert st_.rate_hz == pytest.approx(490, rel=0.05)
    assert abs(st_.qber - 0.02) < tol(0.02, st_.sifted, 4)
