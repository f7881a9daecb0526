"""Intercept-resend eavesdropping on a quantum link."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bb84 import Qubits


class BasisStrategy(Enum):
    UNIFORM_RANDOM = "uniform_random"


@dataclass(frozen=True)
class InterceptResendConfig:
    intercept_fraction: float = 1.0
    basis_strategy: BasisStrategy = BasisStrategy.UNIFORM_RANDOM

    def __post_init__(self):
        if not 0.0 <= self.intercept_fraction <= 1.0:
            raise ValueError("intercept_fraction must be in [0, 1]")
        object.__setattr__(self, "basis_strategy", BasisStrategy(self.basis_strategy))

    def to_dict(self) -> dict:
        return {"intercept_fraction": self.intercept_fraction,
                "basis_strategy": self.basis_strategy.value}


@dataclass(frozen=True, eq=False)
class InterceptRecord:
    """What the eavesdropper measured. Unattacked slots hold zeros."""

    attacked: np.ndarray
    bases: np.ndarray
    bits: np.ndarray

    def known_mask(self, sent: Qubits) -> np.ndarray:
        """Positions whose bit the eavesdropper knows with certainty."""
        return self.attacked & (self.bases == sent.bases)


def intercept_resend(symbols: Qubits, config: InterceptResendConfig,
                     rng: np.random.Generator):
    """Measure a fraction of the symbols in random bases and resend the results.

    Returns ``(resent, record)``. A wrong-basis measurement yields a
    uniform bit, and the resent symbol carries the eavesdropper's basis.
    """
    n = len(symbols)
    attacked = rng.random(n) < config.intercept_fraction
    eve_bases = rng.integers(0, 2, n, dtype=np.uint8)
    coin = rng.integers(0, 2, n, dtype=np.uint8)
    eve_bits = np.where(eve_bases == symbols.bases, symbols.bits, coin).astype(np.uint8)
    out_bits = np.where(attacked, eve_bits, symbols.bits)
    out_bases = np.where(attacked, eve_bases, symbols.bases)
    record = InterceptRecord(attacked,
                             np.where(attacked, eve_bases, 0).astype(np.uint8),
                             np.where(attacked, eve_bits, 0).astype(np.uint8))
    return Qubits(out_bits, out_bases), record
