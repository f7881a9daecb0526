"""Interactive error correction (Cascade) with hash verification."""
from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .amplification import verification_tag
from .classical import ClassicalChannel
from .errors import ProtocolDesyncError, ReconciliationError
from .keys import Stage

PASSES = 4
#: Above this estimated QBER the session aborts instead of reconciling.
MAX_QBER = 0.11
#: Floor on the QBER used to size blocks; a zero estimate from a finite
#: sample would otherwise give one block the size of the whole key.
MIN_QBER_FOR_BLOCKS = 0.005
TAG_BITS = 64


def block_sizes(qber: float, n: int, passes: int = PASSES) -> np.ndarray:
    k1 = math.ceil(0.73 / max(qber, MIN_QBER_FOR_BLOCKS))
    return np.array([max(1, min(k1 << p, n)) for p in range(passes)], dtype=np.int64)


def cascade_plan(n: int, qber: float, rng: np.random.Generator, passes: int = PASSES):
    """Block sizes and shared shuffles for one reconciliation run."""
    ks = block_sizes(qber, n, passes)
    perms = np.empty((passes, n), dtype=np.int64)
    perms[0] = np.arange(n)
    for p in range(1, passes):
        perms[p] = rng.permutation(n)
    return ks, perms


def error_correct(key_a, key_b, qber: float, channel: ClassicalChannel | None,
                  rng: np.random.Generator, *, passes: int = PASSES,
                  max_qber: float = MAX_QBER, tag_bits: int = TAG_BITS,
                  parties=("A", "B")):
    """Reconcile ``key_b`` to ``key_a``.

    Returns ``(corrected_a, corrected_b, leaked_bits)`` where
    ``leaked_bits`` counts the parity bits A disclosed. The verification
    tag is sent as its own message (kind ``"verify"``) so callers can
    charge it separately.

    Raises :class:`ReconciliationError` when ``qber`` is above
    ``max_qber`` or the keys still differ after the last pass.
    """
    if len(key_a) != len(key_b):
        raise ProtocolDesyncError("keys to reconcile differ in length")
    if channel is None:
        channel = ClassicalChannel()
    a_name, b_name = parties
    if qber > max_qber:
        raise ReconciliationError(
            f"estimated QBER {qber:.4f} exceeds the correction threshold {max_qber:.4f}")
    n = len(key_a)
    if n == 0:
        return key_a.advance(key_a.bits, Stage.CORRECTED), key_b.advance(key_b.bits, Stage.CORRECTED), 0

    ks, perms = cascade_plan(n, qber, rng, passes)
    channel.send(b_name, a_name, "cascade-plan", 0, payload={"block_sizes": ks.tolist()})
    corrected, leaked, corrections, passes_run = _kernels.cascade(key_a.bits, key_b.bits, perms, ks)
    for p in range(passes_run):
        channel.send(a_name, b_name, "parity", int(leaked[p]), payload={"pass": p})
    leaked_bits = int(leaked.sum())

    tag_seed = int(rng.integers(0, 2**63))
    tag_a = verification_tag(key_a.bits, tag_seed, tag_bits)
    channel.send(a_name, b_name, "verify", tag_a.shape[0], payload={"seed": tag_seed})
    if not np.array_equal(tag_a, verification_tag(corrected, tag_seed, tag_bits)):
        raise ReconciliationError(
            f"keys still differ after {passes_run} Cascade passes")

    return (key_a.advance(key_a.bits, Stage.CORRECTED),
            key_b.advance(corrected, Stage.CORRECTED),
            leaked_bits)
