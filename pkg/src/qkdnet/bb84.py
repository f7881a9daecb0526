"""Two-party BB84: preparation, measurement, sifting and key distillation.

Bases are abstract: ``SIGMA_X`` stands for the phase pair {0, pi} and
``SIGMA_Y`` for {pi/2, 3pi/2}.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .amplification import DEFAULT_MARGIN, privacy_amplify
from .channel import ChannelParams, sample_clicks
from .classical import ClassicalChannel
from .errors import EmptySequenceError, InsufficientKeyError, ProtocolAbort, ProtocolDesyncError
from .keys import KeyMaterial, Stage
from .reconciliation import MAX_QBER, PASSES, error_correct

TRANSCRIPT_SCHEMA = "qkdnet-transcript/1"


class Basis(IntEnum):
    SIGMA_X = 0
    SIGMA_Y = 1


@dataclass(frozen=True)
class QubitSymbol:
    bit: int
    basis: Basis

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")
        object.__setattr__(self, "basis", Basis(self.basis))


@dataclass(frozen=True, eq=False)
class Qubits:
    """A sequence of prepared symbols held as two parallel uint8 arrays."""

    bits: np.ndarray
    bases: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        bases = np.asarray(self.bases, dtype=np.uint8)
        if bits.shape != bases.shape:
            raise ProtocolDesyncError("bits and bases differ in length")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "bases", bases)

    def __len__(self):
        return int(self.bits.shape[0])

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return QubitSymbol(int(self.bits[i]), Basis(int(self.bases[i])))
        return Qubits(self.bits[i], self.bases[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, Qubits):
            return NotImplemented
        return np.array_equal(self.bits, other.bits) and np.array_equal(self.bases, other.bases)

    __hash__ = None

    @classmethod
    def from_symbols(cls, symbols) -> "Qubits":
        symbols = list(symbols)
        return cls([s.bit for s in symbols], [int(s.basis) for s in symbols])


@dataclass(frozen=True, eq=False)
class Measurement:
    """Receiver record: chosen bases, outcome bits, and which slots clicked.

    ``bits`` is 0 at lost positions; only ``detected`` slots carry data.
    """

    bases: np.ndarray
    bits: np.ndarray
    detected: np.ndarray

    def __len__(self):
        return int(self.bases.shape[0])


def prepare_sequence(n: int, rng: np.random.Generator) -> Qubits:
    """``n`` symbols with independent uniform bits and bases."""
    if n <= 0:
        raise EmptySequenceError("cannot prepare an empty sequence")
    return Qubits(rng.integers(0, 2, n, dtype=np.uint8), rng.integers(0, 2, n, dtype=np.uint8))


def random_bases(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, n, dtype=np.uint8)


def measure_clicked(symbols: Qubits, rx_bases, dark, flip, rng: np.random.Generator) -> np.ndarray:
    """Outcome bits for symbols that produced a click.

    Matched bases reproduce the sent bit (flipped on optical error);
    mismatched bases and dark clicks give a uniform bit.
    """
    rx_bases = np.asarray(rx_bases, dtype=np.uint8)
    coin = rng.integers(0, 2, len(symbols), dtype=np.uint8)
    faithful = (symbols.bases == rx_bases) & ~np.asarray(dark, dtype=bool)
    return np.where(faithful, symbols.bits ^ np.asarray(flip, dtype=np.uint8), coin).astype(np.uint8)


def measure_sequence(symbols: Qubits, channel: ChannelParams, rng: np.random.Generator,
                     bases=None) -> Measurement:
    """Send ``symbols`` over ``channel`` and measure each in a random basis.

    ``bases`` forces the receiver's choices (for tests).
    """
    n = len(symbols)
    if n == 0:
        raise EmptySequenceError("nothing to measure")
    rx = random_bases(n, rng) if bases is None else np.asarray(bases, dtype=np.uint8)
    if rx.shape[0] != n:
        raise ProtocolDesyncError("forced bases differ in length from the symbols")
    clicks = sample_clicks(channel, n, rng)
    pos = clicks.positions
    bits = np.zeros(n, dtype=np.uint8)
    bits[pos] = measure_clicked(symbols[pos], rx[pos], clicks.dark, clicks.flip, rng)
    detected = np.zeros(n, dtype=bool)
    detected[pos] = True
    return Measurement(rx, bits, detected)


def sift(sent: Qubits, measured: Measurement, session: str = ""):
    """Keep the detected positions whose bases agree.

    Returns ``(key_a, key_b, kept_positions)``.
    """
    if len(sent) != len(measured):
        raise ProtocolDesyncError(
            f"sender has {len(sent)} positions, receiver has {len(measured)}")
    kept = np.flatnonzero(measured.detected & (sent.bases == measured.bases))
    return (KeyMaterial(sent.bits[kept], Stage.SIFTED, session),
            KeyMaterial(measured.bits[kept], Stage.SIFTED, session),
            kept)


class QberEstimate(NamedTuple):
    qber: float
    key_a: KeyMaterial
    key_b: KeyMaterial
    sample: np.ndarray


def estimate_qber(key_a: KeyMaterial, key_b: KeyMaterial, sample_fraction: float,
                  rng: np.random.Generator) -> QberEstimate:
    """Compare and discard a random sample of positions.

    ``sample`` holds the sampled indices into the input keys.
    """
    if len(key_a) != len(key_b):
        raise ProtocolDesyncError("keys differ in length")
    if not 0 < sample_fraction < 1:
        raise ValueError("sample_fraction must be in (0, 1)")
    n = len(key_a)
    m = max(1, int(round(sample_fraction * n)))
    if m >= n:
        raise InsufficientKeyError(f"a {m}-bit sample would exhaust the {n}-bit key")
    sample = np.sort(rng.choice(n, size=m, replace=False))
    keep = np.ones(n, dtype=bool)
    keep[sample] = False
    errors = int(np.count_nonzero(key_a.bits[sample] != key_b.bits[sample]))
    return QberEstimate(errors / m,
                        KeyMaterial(key_a.bits[keep], key_a.stage, key_a.origin_session),
                        KeyMaterial(key_b.bits[keep], key_b.stage, key_b.origin_session),
                        sample)


@dataclass
class SessionTranscript:
    """Audit record of one protocol run.

    Array-valued fields (announced bases, positions) stay in memory;
    :meth:`to_record` exports counts and scalars only.
    """

    session_id: str
    protocol: str = "bb84"
    seed: int | None = None
    pulses_sent: int = 0
    raw_length: int = 0
    sifted_length: int = 0
    corrected_length: int = 0
    final_length: int = 0
    announced_bases: dict = field(default_factory=dict)
    kept_positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sample_positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    measured_qber: float | None = None
    true_qber: float | None = None
    leaked_bits: int = 0
    verification_bits: int = 0
    aborted: bool = False
    abort_reason: str = ""
    knowledge: dict = field(default_factory=dict)
    hop_key_usage: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    messages: int = 0

    @property
    def sifted_fraction(self) -> float:
        return self.sifted_length / self.raw_length if self.raw_length else 0.0

    def retained_positions(self) -> np.ndarray:
        """Pulse indices that survive into the corrected key."""
        return np.setdiff1d(self.kept_positions, self.sample_positions)

    def check_invariants(self):
        lengths = [self.raw_length, self.sifted_length, self.corrected_length, self.final_length]
        if any(x > y for x, y in zip(lengths[1:], lengths)) and not self.aborted:
            raise AssertionError(f"stage lengths not monotone: {lengths}")
        if self.leaked_bits < 0:
            raise AssertionError("negative leak count")
        if np.intersect1d(self.sample_positions, self.retained_positions()).size:
            raise AssertionError("sampled positions overlap the retained key")

    def to_record(self) -> dict:
        return {
            "schema": TRANSCRIPT_SCHEMA,
            "session_id": self.session_id,
            "protocol": self.protocol,
            "seed": self.seed,
            "pulses_sent": self.pulses_sent,
            "lengths": {
                "raw": self.raw_length,
                "sifted": self.sifted_length,
                "corrected": self.corrected_length,
                "final": self.final_length,
            },
            "sifted_fraction": self.sifted_fraction,
            "sample_size": int(self.sample_positions.shape[0]),
            "measured_qber": self.measured_qber,
            "true_qber": self.true_qber,
            "leaked_bits": self.leaked_bits,
            "verification_bits": self.verification_bits,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "knowledge": dict(sorted(self.knowledge.items())),
            "hop_key_usage": dict(self.hop_key_usage),
            "parameters": self.parameters,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=2)


@dataclass(frozen=True)
class PostProcessing:
    sample_fraction: float = 0.1
    margin: int = DEFAULT_MARGIN
    passes: int = PASSES
    max_qber: float = MAX_QBER


@dataclass
class SessionResult:
    key_a: KeyMaterial
    key_b: KeyMaterial
    transcript: SessionTranscript


def distill(key_a: KeyMaterial, key_b: KeyMaterial, transcript: SessionTranscript,
            rng: np.random.Generator, post: PostProcessing = PostProcessing(),
            parties=("A", "B"), channel: ClassicalChannel | None = None) -> SessionResult:
    """Parameter estimation, error correction and privacy amplification.

    Fills the tail of ``transcript``, whose ``kept_positions`` must
    already index the sifted keys. On abort the transcript is marked
    and the :class:`ProtocolAbort` propagates with it attached.
    """
    channel = ClassicalChannel() if channel is None else channel
    try:
        est = estimate_qber(key_a, key_b, post.sample_fraction, rng)
        transcript.sample_positions = transcript.kept_positions[est.sample]
        transcript.measured_qber = est.qber
        channel.send(parties[0], parties[1], "sample", 2 * len(est.sample))
        ca, cb, leaked = error_correct(est.key_a, est.key_b, est.qber, channel, rng,
                                       passes=post.passes, max_qber=post.max_qber,
                                       parties=parties)
    except ProtocolAbort as exc:
        transcript.aborted = True
        transcript.abort_reason = str(exc)
        transcript.messages = len(channel)
        exc.transcript = transcript
        raise
    transcript.corrected_length = len(ca)
    transcript.leaked_bits = leaked
    transcript.verification_bits = channel.disclosed_bits("verify")
    pa_seed = int(rng.integers(0, 2**63))
    charge = leaked + transcript.verification_bits
    fa = privacy_amplify(ca, est.qber, charge, pa_seed, post.margin)
    fb = privacy_amplify(cb, est.qber, charge, pa_seed, post.margin)
    channel.send(parties[0], parties[1], "pa-seed", 64, payload={"seed": pa_seed})
    transcript.final_length = len(fa)
    transcript.messages = len(channel)
    return SessionResult(fa, fb, transcript)


def _mismatch(a: KeyMaterial, b: KeyMaterial):
    if len(a) == 0:
        return None
    return float(np.count_nonzero(a.bits != b.bits)) / len(a)


def run_session(channel: ChannelParams, n_pulses: int, seed: int, *,
                post: PostProcessing = PostProcessing(), adversary=None) -> SessionResult:
    """A complete BB84 session between A (sender) and B (receiver).

    Only pulse slots that click at B are materialised; the others carry
    no information into any later stage.
    """
    from .adversary import intercept_resend  # adversary imports this module

    if n_pulses <= 0:
        raise EmptySequenceError("n_pulses must be positive")
    rng = np.random.default_rng(seed)
    sid = f"bb84-{seed:x}"
    transcript = SessionTranscript(sid, "bb84", seed, n_pulses)
    transcript.parameters = {"channel": channel.to_dict(), "sample_fraction": post.sample_fraction,
                             "margin": post.margin}

    clicks = sample_clicks(channel, n_pulses, rng)
    k = len(clicks)
    sent = prepare_sequence(k, rng) if k else Qubits([], [])
    in_flight = sent
    record = None
    if adversary is not None and k:
        in_flight, record = intercept_resend(sent, adversary, rng)
    rx = random_bases(k, rng)
    bits = measure_clicked(in_flight, rx, clicks.dark, clicks.flip, rng) if k else np.zeros(0, np.uint8)
    measured = Measurement(rx, bits, np.ones(k, dtype=bool))

    transcript.raw_length = k
    transcript.announced_bases = {"A": sent.bases, "B": rx}
    key_a, key_b, kept = sift(sent, measured, sid)
    transcript.kept_positions = clicks.positions[kept]
    transcript.sifted_length = len(key_a)
    transcript.true_qber = _mismatch(key_a, key_b)
    if record is not None:
        known = record.known_mask(sent)[kept]
        transcript.knowledge["eve"] = float(known.mean()) if known.size else 0.0
    return distill(key_a, key_b, transcript, rng, post)


@dataclass(frozen=True)
class LinkStatistics:
    pulses: int
    clicks: int
    sifted: int
    errors: int
    rate_hz: float

    @property
    def qber(self) -> float | None:
        return self.errors / self.sifted if self.sifted else None


def link_statistics(channel: ChannelParams, n_pulses: int, seed) -> LinkStatistics:
    """Monte Carlo clicks, sifted bits and sifted errors on one link.

    ``rate_hz`` is clicks * q * nu / pulses, the simulated counterpart of
    the analytic raw key rate.
    """
    rng = np.random.default_rng(seed)
    clicks = sample_clicks(channel, n_pulses, rng)
    k = len(clicks)
    if k == 0:
        return LinkStatistics(n_pulses, 0, 0, 0, 0.0)
    sent = prepare_sequence(k, rng)
    rx = random_bases(k, rng)
    bits = measure_clicked(sent, rx, clicks.dark, clicks.flip, rng)
    matched = sent.bases == rx
    errors = int(np.count_nonzero(bits[matched] != sent.bits[matched]))
    rate = k * channel.q_factor * channel.nu / n_pulses
    return LinkStatistics(n_pulses, k, int(matched.sum()), errors, rate)
