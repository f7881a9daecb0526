"""Privacy amplification with random binary Toeplitz matrices."""
from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .keys import Stage
from ._kernels import _python

# Above this many bit-products the FFT route beats the packed kernel.
_PACKED_LIMIT = 1 << 32

DEFAULT_MARGIN = 30


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def final_key_length(n: int, qber: float, leaked_bits: int, margin: int = DEFAULT_MARGIN) -> int:
    """max(0, floor(n * (1 - h2(qber)) - leaked_bits - margin))."""
    if n < 0 or leaked_bits < 0 or margin < 0:
        raise ValueError("lengths must be non-negative")
    return max(0, math.floor(n * (1.0 - binary_entropy(qber)) - leaked_bits - margin))


def toeplitz_seed_bits(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """The n + m - 1 random bits that define an m x n Toeplitz matrix."""
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    return rng.integers(0, 2, n + m - 1, dtype=np.uint8)


def toeplitz_hash(bits, m: int, seed_bits) -> np.ndarray:
    """Compress ``bits`` to ``m`` bits with the Toeplitz matrix from ``seed_bits``."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.shape[0]
    if m > n:
        raise ValueError("cannot hash to more bits than the input")
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    if _kernels.BACKEND != "python" and n * m <= _PACKED_LIMIT:
        return _kernels.toeplitz_hash(seed_bits, bits, m)
    return _python.toeplitz_hash(seed_bits, bits, m)


def verification_tag(bits, seed: int, tag_bits: int = 64) -> np.ndarray:
    """Short universal-hash tag used to confirm two keys match.

    Inputs shorter than ``tag_bits`` are compared directly.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.shape[0]
    if n <= tag_bits:
        return bits.copy()
    rng = np.random.default_rng(seed)
    return toeplitz_hash(bits, tag_bits, toeplitz_seed_bits(n, tag_bits, rng))


def privacy_amplify(key, measured_qber: float, leaked_bits: int, seed,
                    margin: int = DEFAULT_MARGIN):
    """Compress a corrected key to its secure length.

    ``seed`` (an int or a Generator) selects the hash from the Toeplitz
    family; both parties pass the same seed and get the same output. When
    nothing can be distilled the result is an empty FINAL key, not an
    exception.
    """
    n = len(key)
    if n == 0:
        raise ValueError("privacy amplification needs a non-empty key")
    m = final_key_length(n, measured_qber, leaked_bits, margin)
    rng = np.random.default_rng(seed)
    out = toeplitz_hash(key.bits, m, toeplitz_seed_bits(n, m, rng))
    return key.advance(out, Stage.FINAL)
