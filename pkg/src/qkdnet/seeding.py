"""Deterministic seed derivation for sub-streams and sweep points."""
import numpy as np


def derive_seed(root: int, *index: int) -> int:
    """63-bit seed determined by ``root`` and ``index`` alone.

    Parallel and serial sweeps therefore see the same stream per point.
    """
    ss = np.random.SeedSequence([int(root), *[int(i) for i in index]])
    return int(ss.generate_state(1, np.uint64)[0] & np.uint64(2**63 - 1))
