"""Banked pairwise keys between adjacent QBSs, spent as one-time pads."""
from __future__ import annotations

import threading
from collections import defaultdict

import numpy as np

from ..errors import KeyExhaustedError
from .topology import link_name


def mask(message, pad) -> np.ndarray:
    """XOR a bit string with an equal-length pad. Its own inverse."""
    message = np.asarray(message, dtype=np.uint8)
    pad = np.asarray(pad, dtype=np.uint8)
    if message.shape != pad.shape:
        raise ValueError("one-time pad must match the message length")
    return message ^ pad


unmask = mask


class KeyBank:
    """Per-link pools of secret bits.

    Draws are atomic: a draw either returns the full amount or raises
    :class:`KeyExhaustedError` and leaves the pool untouched. Bits are
    never handed out twice.
    """

    def __init__(self):
        self._pools = defaultdict(lambda: np.zeros(0, dtype=np.uint8))
        self._deposited = defaultdict(int)
        self._used = defaultdict(int)
        self._lock = threading.Lock()

    def deposit(self, a, b, bits):
        bits = np.asarray(bits, dtype=np.uint8)
        name = link_name(a, b)
        with self._lock:
            self._pools[name] = np.concatenate([self._pools[name], bits])
            self._deposited[name] += bits.shape[0]

    def available(self, a, b) -> int:
        with self._lock:
            return int(self._pools[link_name(a, b)].shape[0])

    def used(self, a, b) -> int:
        return self._used[link_name(a, b)]

    def deposited(self, a, b) -> int:
        return self._deposited[link_name(a, b)]

    def draw(self, a, b, n) -> np.ndarray:
        name = link_name(a, b)
        with self._lock:
            pool = self._pools[name]
            if pool.shape[0] < n:
                raise KeyExhaustedError(
                    f"link {name} holds {pool.shape[0]} key bits, {n} requested")
            out, self._pools[name] = pool[:n].copy(), pool[n:]
            self._used[name] += n
        return out
