"""Key sharing between clients of the cellular network.

Protocol A: a QBS sources one random symbol sequence to two clients and
the position survives only where every party picked the same basis.
The chained form relays the sequence through further QBSs, each of
which measures and re-prepares, so the surviving fraction halves per
extra party.

Protocol B: adjacent QBSs hold banked pairwise keys. The first QBS
sends raw symbols R to its client and forwards R, one-time-padded hop by
hop, to the last QBS, which sends the identical symbols to the other
client. The surviving fraction is 1/4 however many QBSs are involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..adversary import intercept_resend
from ..amplification import binary_entropy
from ..bb84 import (PostProcessing, Qubits, SessionResult, SessionTranscript, distill,
                    measure_clicked, prepare_sequence, random_bases, run_session)
from ..channel import click_probability, expected_qber, sample_clicks
from ..classical import ClassicalChannel
from ..errors import (KeyExhaustedError, ProtocolAbort, ReconciliationError, RoutingError,
                      TopologyError)
from ..keys import KeyMaterial, Stage
from ..seeding import derive_seed
from .keybank import KeyBank, mask, unmask
from .routing import route
from .topology import NodeKind, link_name


class BasisAgreement(Enum):
    SECRET_KEY = "secret key"
    PARTIAL_SECRET_KEY = "partial secret key"
    NO_SECRET_KEY = "no secret key"


def classify_bases(qnc1, qbs, qnc2) -> BasisAgreement:
    """What a (QNC1, QBS, QNC2) basis triple yields for the client pair."""
    if qnc1 == qbs == qnc2:
        return BasisAgreement.SECRET_KEY
    if qnc1 == qnc2:
        return BasisAgreement.NO_SECRET_KEY
    return BasisAgreement.PARTIAL_SECRET_KEY


@dataclass(frozen=True)
class Hop:
    receiver: str
    channel: object
    adversary: object = None
    name: str = ""


@dataclass(frozen=True, eq=False)
class Reception:
    """One receiver's view: slot positions, its bases and outcome bits."""

    party: str
    positions: np.ndarray
    bases: np.ndarray
    bits: np.ndarray
    eve_known: np.ndarray | None = None


def _propagate(positions, symbols, hops, n_pulses, rng, first_clicks=None):
    # Receivers measure in random bases; every receiver but the last re-prepares.
    out = []
    for h, hop in enumerate(hops):
        clicks = first_clicks if (h == 0 and first_clicks is not None) \
            else sample_clicks(hop.channel, n_pulses, rng)
        common, ia, ic = np.intersect1d(positions, clicks.positions,
                                        assume_unique=True, return_indices=True)
        incoming = symbols[ia]
        known = None
        if hop.adversary is not None and len(common):
            incoming, record = intercept_resend(incoming, hop.adversary, rng)
            known = record.known_mask(symbols[ia])
        rx = random_bases(len(common), rng)
        bits = measure_clicked(incoming, rx, clicks.dark[ic], clicks.flip[ic], rng)
        out.append(Reception(hop.receiver, common, rx, bits, known))
        positions, symbols = common, Qubits(bits, rx)
    return out


def _at(reception_positions, values, where):
    # values aligned to reception_positions, looked up at the sorted subset `where`
    return values[np.searchsorted(reception_positions, where)]


def _mismatch(a, b):
    return float(np.count_nonzero(a != b)) / a.shape[0] if a.shape[0] else None


def _endpoints(topology, qnc1, qnc2):
    for q in (qnc1, qnc2):
        if topology.node(q).kind is not NodeKind.QNC:
            raise TopologyError(f"{q!r} is not a QNC")
    if qnc1 == qnc2:
        raise TopologyError("endpoints must be distinct clients")


def _hop(topology, a, b):
    link = topology.link(a, b)
    return Hop(b, link.channel, link.adversary, link_name(a, b))


def chain_session(source, left, right, n_pulses, seed, *, protocol="protocol_a_chain",
                  post=PostProcessing()) -> SessionResult:
    """Source-relay chain with all-party basis sifting.

    ``source`` is the node id that prepares the symbols. ``left`` is the
    list of hops from the source to the first client (empty when the
    source *is* that client); ``right`` runs from the source through any
    relays to the second client. A position is kept when both clients
    detected it and every party used one basis.
    """
    if n_pulses <= 0:
        raise ValueError("n_pulses must be positive")
    if not right:
        raise TopologyError("the chain needs at least one hop toward the second client")
    rng = np.random.default_rng(seed)
    client1 = left[-1].receiver if left else source
    client2 = right[-1].receiver
    sid = f"{protocol}-{seed:x}"
    tr = SessionTranscript(sid, protocol, seed, n_pulses)
    tr.parameters = {"source": source, "path": [client1] + ([source] if left else [])
                     + [h.receiver for h in right],
                     "links": {h.name: h.channel.to_dict() for h in left + right},
                     "sample_fraction": post.sample_fraction, "margin": post.margin}

    right_first = sample_clicks(right[0].channel, n_pulses, rng)
    left_first = sample_clicks(left[0].channel, n_pulses, rng) if left else None
    if left_first is None:
        emitted = right_first.positions
    else:
        emitted = np.union1d(left_first.positions, right_first.positions)
    src = prepare_sequence(len(emitted), rng) if len(emitted) else Qubits([], [])

    r_recs = _propagate(emitted, src, right, n_pulses, rng, right_first)
    if left:
        l_recs = _propagate(emitted, src, left, n_pulses, rng, left_first)
        c1 = l_recs[-1]
    else:
        l_recs = []
        c1 = Reception(source, emitted, src.bases, src.bits)
    c2 = r_recs[-1]

    joint = np.intersect1d(c1.positions, c2.positions, assume_unique=True)
    bases = {source: _at(emitted, src.bases, joint)}
    for rec in l_recs + r_recs:
        bases[rec.party] = _at(rec.positions, rec.bases, joint)
    stacked = np.stack(list(bases.values()))
    agree = np.all(stacked == stacked[0], axis=0)
    kept = joint[agree]

    chan = ClassicalChannel()
    for party in bases:
        if party != source:
            chan.send(party, source, "bases", len(joint))
    for party in (client1, client2):
        chan.send(source, party, "agreement", len(joint))

    bits1 = _at(c1.positions, c1.bits, kept)
    bits2 = _at(c2.positions, c2.bits, kept)
    tr.raw_length = len(joint)
    tr.announced_bases = bases
    tr.kept_positions = kept
    tr.sifted_length = len(kept)
    tr.true_qber = _mismatch(bits1, bits2)
    for party, b in bases.items():
        if party not in (client1, client2):
            # a QBS that prepared or measured in the sifting basis holds the bit
            tr.knowledge[party] = float(np.mean(b[agree] == stacked[0][agree])) if kept.size else 0.0
    for rec in l_recs + r_recs:
        if rec.eve_known is not None:
            known = _at(rec.positions, rec.eve_known, kept)
            tr.knowledge[f"eve@{rec.party}"] = float(known.mean()) if known.size else 0.0

    key1 = KeyMaterial(bits1, Stage.SIFTED, sid)
    key2 = KeyMaterial(bits2, Stage.SIFTED, sid)
    return distill(key1, key2, tr, rng, post, parties=(client1, client2), channel=chan)


def protocol_a(topology, qnc1, qnc2, n_pulses, seed, *, post=PostProcessing()) -> SessionResult:
    """Two clients of one cell share a key sourced by their QBS."""
    _endpoints(topology, qnc1, qnc2)
    cell = topology.cell_of(qnc1)
    if topology.cell_of(qnc2) != cell:
        raise TopologyError(
            f"{qnc1!r} and {qnc2!r} are in different cells; use protocol_a_chain or protocol_b")
    qbs = topology.qbs_of(cell)
    return chain_session(qbs, [_hop(topology, qbs, qnc1)], [_hop(topology, qbs, qnc2)],
                         n_pulses, seed, protocol="protocol_a", post=post)


def protocol_a_chain(topology, qnc1, qnc2, n_pulses, seed, *, n_qbs=None,
                     post=PostProcessing()) -> SessionResult:
    """Protocol A stretched over the minimal QBS route between two cells.

    ``n_qbs=0`` runs plain BB84 with ``qnc1`` as sender over its own
    access link, i.e. as if the two clients were directly connected.
    """
    _endpoints(topology, qnc1, qnc2)
    if n_qbs == 0:
        access = topology.access_link(qnc1)
        return chain_session(qnc1, [], [Hop(qnc2, access.channel, access.adversary,
                                            f"{qnc1}-{qnc2}")],
                             n_pulses, seed, protocol="protocol_a_chain", post=post)
    path = route(topology, topology.cell_of(qnc1), topology.cell_of(qnc2))
    if n_qbs is not None and n_qbs != len(path):
        raise RoutingError(f"minimal route has {len(path)} QBSs, {n_qbs} requested")
    left = [_hop(topology, path[0], qnc1)]
    right = [_hop(topology, a, b) for a, b in zip(path, path[1:])]
    right.append(_hop(topology, path[-1], qnc2))
    return chain_session(path[0], left, right, n_pulses, seed, post=post)


MIN_SESSION_BITS = 20_000


def pad_bits_needed(n_pulses: int) -> int:
    """One-time-pad bits consumed per hop: a bit and a basis per pulse."""
    return 2 * n_pulses


def _session_pulses(channel, bits, post):
    e = expected_qber(channel) if click_probability(channel) > 0 else 0.5
    per_pulse = click_probability(channel) * 0.5 * (1 - post.sample_fraction) \
        * max(0.05, 1.0 - 1.3 * binary_entropy(min(e, 0.5)))
    if per_pulse <= 0:
        return None
    return int(math.ceil((bits + post.margin + 256) / per_pulse * 1.1))


def establish_pairwise_keys(topology, path, bits_per_link, seed, *, bank=None,
                            post=PostProcessing(), max_sessions=16, max_pulses=10**9):
    """Fill ``bank`` with at least ``bits_per_link`` bits for each hop of ``path``.

    Each hop runs BB84 sessions over its own backbone link. Returns the
    bank and the session transcripts.
    """
    bank = KeyBank() if bank is None else bank
    transcripts = []
    for h, (a, b) in enumerate(zip(path, path[1:])):
        link = topology.link(a, b)
        attempt = 0
        while bank.available(a, b) < bits_per_link:
            if attempt >= max_sessions:
                raise KeyExhaustedError(f"link {link_name(a, b)} could not bank enough key")
            # tiny top-up sessions reconcile poorly, so never ask for less than MIN_SESSION_BITS
            want = max(bits_per_link - bank.available(a, b), MIN_SESSION_BITS)
            pulses = _session_pulses(link.channel, want, post)
            if pulses is None or pulses > max_pulses:
                raise KeyExhaustedError(
                    f"link {link_name(a, b)} cannot produce {bits_per_link} key bits "
                    f"within {max_pulses} pulses")
            attempt += 1
            try:
                res = run_session(link.channel, pulses, derive_seed(seed, h, attempt - 1),
                                  post=post, adversary=link.adversary)
            except ReconciliationError as exc:
                # a failed session is discarded; nothing reaches the bank
                transcripts.append(exc.transcript)
                continue
            if res.key_a != res.key_b:
                raise ProtocolAbort(f"pairwise keys differ on {link_name(a, b)}", res.transcript)
            bank.deposit(a, b, res.key_a.bits)
            transcripts.append(res.transcript)
    return bank, transcripts


def _encode(symbols: Qubits) -> np.ndarray:
    out = np.empty(2 * len(symbols), dtype=np.uint8)
    out[0::2] = symbols.bits
    out[1::2] = symbols.bases
    return out


def _decode(bits) -> Qubits:
    return Qubits(bits[0::2], bits[1::2])


def protocol_b(topology, qnc1, qncN, n_pulses, seed, *, bank=None,
               post=PostProcessing()) -> SessionResult:
    """XOR relay of raw symbols across the QBS route.

    Without a ``bank`` the pairwise keys are established first, sized
    exactly for this run; with one, pads are drawn from it and a short
    bank aborts the run with :class:`KeyExhaustedError`.
    """
    _endpoints(topology, qnc1, qncN)
    if n_pulses <= 0:
        raise ValueError("n_pulses must be positive")
    path = route(topology, topology.cell_of(qnc1), topology.cell_of(qncN))
    for a, b in zip(path, path[1:]):
        if not topology.has_classical(a, b):
            raise RoutingError(f"no classical channel between {a!r} and {b!r}")
    need = pad_bits_needed(n_pulses)
    if bank is None:
        bank, _ = establish_pairwise_keys(topology, path, need, derive_seed(seed, 1), post=post)

    rng = np.random.default_rng(seed)
    sid = f"protocol_b-{seed:x}"
    tr = SessionTranscript(sid, "protocol_b", seed, n_pulses)
    tr.parameters = {"route": path, "pad_bits_per_hop": need,
                     "sample_fraction": post.sample_fraction, "margin": post.margin}
    chan = ClassicalChannel()

    try:
        # draw every pad up front so a short bank aborts before any bit is spent
        for a, b in zip(path, path[1:]):
            if bank.available(a, b) < need:
                raise KeyExhaustedError(
                    f"link {link_name(a, b)} holds {bank.available(a, b)} key bits, {need} needed")
        raw = prepare_sequence(n_pulses, rng)
        plain = _encode(raw)
        held = {path[0]: plain}
        for a, b in zip(path, path[1:]):
            pad = bank.draw(a, b, need)
            cipher = mask(plain, pad)
            chan.send(a, b, "relay", cipher.shape[0])
            tr.hop_key_usage[link_name(a, b)] = int(pad.shape[0])
            plain = unmask(cipher, pad)
            held[b] = plain
    except ProtocolAbort as exc:
        tr.aborted = True
        tr.abort_reason = str(exc)
        exc.transcript = tr
        raise
    relayed = _decode(plain)
    if relayed != raw:
        raise AssertionError("relay corrupted the raw symbols")

    every = np.arange(n_pulses, dtype=np.int64)
    (r1,) = _propagate(every, raw, [_hop(topology, path[0], qnc1)], n_pulses, rng)
    (rN,) = _propagate(every, relayed, [_hop(topology, path[-1], qncN)], n_pulses, rng)

    # each client learns the preparation bases from its own QBS
    chan.send(path[0], qnc1, "bases", len(r1.positions))
    chan.send(path[-1], qncN, "bases", len(rN.positions))
    ok1 = r1.positions[r1.bases == raw.bases[r1.positions]]
    okN = rN.positions[rN.bases == relayed.bases[rN.positions]]
    chan.send(qnc1, qncN, "kept-positions", len(ok1))
    chan.send(qncN, qnc1, "kept-positions", len(okN))
    kept = np.intersect1d(ok1, okN, assume_unique=True)
    joint = np.intersect1d(r1.positions, rN.positions, assume_unique=True)

    bits1 = _at(r1.positions, r1.bits, kept)
    bitsN = _at(rN.positions, rN.bits, kept)
    tr.raw_length = len(joint)
    tr.announced_bases = {qnc1: r1.bases, qncN: rN.bases, "R": raw.bases}
    tr.kept_positions = kept
    tr.sifted_length = len(kept)
    tr.true_qber = _mismatch(bits1, bitsN)
    for qbs, bits in held.items():
        seen = _decode(bits)
        tr.knowledge[qbs] = float(np.mean(seen.bits[kept] == raw.bits[kept])) if kept.size else 0.0
    for rec in (r1, rN):
        if rec.eve_known is not None:
            known = _at(rec.positions, rec.eve_known, kept)
            tr.knowledge[f"eve@{rec.party}"] = float(known.mean()) if known.size else 0.0

    key1 = KeyMaterial(bits1, Stage.SIFTED, sid)
    keyN = KeyMaterial(bitsN, Stage.SIFTED, sid)
    return distill(key1, keyN, tr, rng, post, parties=(qnc1, qncN), channel=chan)
