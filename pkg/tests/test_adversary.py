import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qkdnet.adversary import BasisStrategy, InterceptResendConfig, intercept_resend
from qkdnet.bb84 import measure_clicked, prepare_sequence, random_bases, run_session
from qkdnet.channel import ChannelParams, sample_clicks
from qkdnet.errors import ProtocolAbort


def enumerated_qber(f):
    """Exact sifted QBER from the 16 equally likely (sender basis, eve basis, bit, outcome) cases."""
    err = Fraction(0)
    total = Fraction(0)
    for sb, eb, bit, eve_coin in itertools.product((0, 1), repeat=4):
        # receiver measures in the sender's basis (sifted positions only)
        eve_bit = bit if eb == sb else eve_coin
        # if eve's basis differs from the receiver's, the receiver's outcome is a fresh coin;
        # average over it explicitly
        if eb == sb:
            p_err = Fraction(int(eve_bit != bit))
        else:
            p_err = Fraction(1, 2)
        err += p_err
        total += 1
    return float(Fraction(f).limit_denominator() * err / total)


def test_enumeration_oracle_values():
    assert enumerated_qber(1.0) == 0.25
    assert enumerated_qber(0.5) == 0.125


def test_config_validation():
    with pytest.raises(ValueError):
        InterceptResendConfig(1.5)
    assert InterceptResendConfig(0.3, "uniform_random").basis_strategy is BasisStrategy.UNIFORM_RANDOM


def test_zero_fraction_is_pass_through():
    q = prepare_sequence(1000, np.random.default_rng(0))
    out, rec = intercept_resend(q, InterceptResendConfig(0.0), np.random.default_rng(1))
    assert out == q and not rec.attacked.any()


def test_attacked_symbols_carry_eve_basis():
    q = prepare_sequence(1000, np.random.default_rng(2))
    out, rec = intercept_resend(q, InterceptResendConfig(1.0), np.random.default_rng(3))
    assert np.array_equal(out.bases, rec.bases)
    same = rec.bases == q.bases
    assert np.array_equal(out.bits[same], q.bits[same])


def direct_qber(f, n, seed, channel=ChannelParams.ideal(), attack_first=True):
    rng = np.random.default_rng(seed)
    sent = prepare_sequence(n, rng)
    clicks = sample_clicks(channel, n, rng)
    if attack_first:
        flight, rec = intercept_resend(sent, InterceptResendConfig(f), rng)
        flight = flight[clicks.positions]
        known = rec.known_mask(sent)[clicks.positions]
    else:
        sub = sent[clicks.positions]
        flight, rec = intercept_resend(sub, InterceptResendConfig(f), rng)
        known = rec.known_mask(sub)
    sub_sent = sent[clicks.positions]
    rx = random_bases(len(clicks), rng)
    bits = measure_clicked(flight, rx, clicks.dark, clicks.flip, rng)
    m = sub_sent.bases == rx
    return float(np.mean(bits[m] != sub_sent.bits[m])), float(known[m].mean()), int(m.sum())


@pytest.mark.parametrize("f", [1.0, 0.5, 0.25])
def test_induced_qber_matches_enumeration(f):
    q, known, k = direct_qber(f, 400_000, int(f * 100))
    assert abs(q - enumerated_qber(f)) < 3 * math.sqrt(0.25 * f * (1 - 0.25 * f) / k)
    assert abs(known - 0.5 * f) < 3 * math.sqrt(0.5 * f * (1 - 0.5 * f) / k)


def test_session_transcript_records_eve_knowledge():
    with pytest.raises(ProtocolAbort) as info:
        run_session(ChannelParams.ideal(), 100_000, 4, adversary=InterceptResendConfig(1.0))
    tr = info.value.transcript
    assert abs(tr.true_qber - 0.25) < 0.01
    assert abs(tr.knowledge["eve"] - 0.5) < 0.01


def test_loss_commutes_with_interception():
    ch = ChannelParams.fiber(20, eta_d=0.2)
    n = 20_000_000
    q1, _, k1 = direct_qber(1.0, n, 5, ch, attack_first=True)
    q2, _, k2 = direct_qber(1.0, n, 6, ch, attack_first=False)
    assert abs(q1 - q2) < 3 * math.sqrt(0.1875 * (1 / k1 + 1 / k2))


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**31))
def test_induced_qber_linear_in_fraction(f, seed):
    q, _, k = direct_qber(f, 100_000, seed)
    p = 0.25 * f
    assert abs(q - p) <= 4 * math.sqrt(max(p * (1 - p), 1e-12) / k) + 1e-12
