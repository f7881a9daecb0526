"""Staged key material."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Stage(IntEnum):
    RAW = 0
    SIFTED = 1
    CORRECTED = 2
    FINAL = 3


@dataclass(frozen=True, eq=False)
class KeyMaterial:
    """A bit string tagged with its processing stage.

    Stages only move forward and never grow the key.
    """

    bits: np.ndarray
    stage: Stage
    origin_session: str = ""

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1:
            raise ValueError("key bits must be one-dimensional")
        if bits.size and bits.max() > 1:
            raise ValueError("key bits must be 0 or 1")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "stage", Stage(self.stage))

    def __len__(self):
        return int(self.bits.shape[0])

    def __eq__(self, other):
        if not isinstance(other, KeyMaterial):
            return NotImplemented
        return self.stage == other.stage and np.array_equal(self.bits, other.bits)

    __hash__ = None

    @property
    def is_empty(self) -> bool:
        return self.bits.shape[0] == 0

    def advance(self, bits, stage) -> "KeyMaterial":
        stage = Stage(stage)
        if stage <= self.stage:
            raise ValueError(f"cannot move key from {self.stage.name} to {stage.name}")
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape[0] > len(self):
            raise ValueError("a later key stage cannot be longer than an earlier one")
        return KeyMaterial(bits, stage, self.origin_session)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)
