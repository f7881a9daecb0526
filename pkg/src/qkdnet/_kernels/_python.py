"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled extension is unavailable, and as the
cross-check for it: both backends must return identical outputs for
identical inputs.
"""
from collections import deque

import numpy as np

BACKEND = "python"


def _search(dq, lo, hi):
    # Binary search for an odd-parity bit inside dq[lo:hi].
    steps = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        steps += 1
        if int(dq[lo:mid].sum()) & 1:
            hi = mid
        else:
            lo = mid
    return lo, steps


def cascade(a, b, perms, block_sizes):
    """Cascade reconciliation of ``b`` towards ``a``.

    Parameters
    ----------
    a, b : uint8 arrays of equal length n
    perms : int64 array of shape (passes, n); row p is the shuffle used
        by pass p (row 0 is normally the identity)
    block_sizes : int64 array of shape (passes,)

    Returns
    -------
    corrected : uint8 array, ``b`` with the located errors flipped
    leaked : int64 array of shape (passes,), parities disclosed per pass
    corrections : number of bit flips applied
    passes_run : passes actually executed; stops after the first pass
        when it finds no odd-parity block
    """
    a = np.ascontiguousarray(a, dtype=np.uint8)
    b = np.ascontiguousarray(b, dtype=np.uint8)
    perms = np.ascontiguousarray(perms, dtype=np.int64)
    block_sizes = np.ascontiguousarray(block_sizes, dtype=np.int64)
    n = a.shape[0]
    npass = block_sizes.shape[0]

    # A parity mismatch between the parties is the parity of a ^ b.
    d = a ^ b
    flips = np.zeros(n, dtype=np.uint8)
    leaked = np.zeros(npass, dtype=np.int64)
    dp, inv, par = [], [], []
    corrections = 0
    passes_run = 0

    for p in range(npass):
        k = int(block_sizes[p])
        perm = perms[p]
        dq = d[perm]
        pos = np.empty(n, dtype=np.int64)
        pos[perm] = np.arange(n, dtype=np.int64)
        parity = (np.add.reduceat(dq, np.arange(0, n, k)) & 1).astype(np.uint8)
        dp.append(dq)
        inv.append(pos)
        par.append(parity)
        leaked[p] += parity.shape[0]
        passes_run += 1

        found = False
        for blk in range(parity.shape[0]):
            if not par[p][blk]:
                continue
            found = True
            queue = deque([(p, blk)])
            while queue:
                q, bq = queue.popleft()
                if not par[q][bq]:
                    continue
                kq = int(block_sizes[q])
                lo = bq * kq
                j, steps = _search(dp[q], lo, min(lo + kq, n))
                leaked[p] += steps
                i = int(perms[q][j])
                flips[i] ^= 1
                d[i] ^= 1
                corrections += 1
                for r in range(p + 1):
                    jr = inv[r][i]
                    dp[r][jr] ^= 1
                    br = jr // int(block_sizes[r])
                    par[r][br] ^= 1
                    if r != q and par[r][br]:
                        queue.append((r, int(br)))
        if p == 0 and not found:
            break

    return b ^ flips, leaked, corrections, passes_run


def toeplitz_hash(t, x, m):
    """Multiply the m x n binary Toeplitz matrix built from ``t`` by ``x``.

    ``t`` has length n + m - 1 and defines T[i, j] = t[i - j + n - 1].
    Computed as an FFT convolution reduced mod 2.
    """
    x = np.asarray(x, dtype=np.uint8)
    t = np.asarray(t, dtype=np.uint8)
    n = x.shape[0]
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    if t.shape[0] != n + m - 1:
        raise ValueError("toeplitz seed must have length n + m - 1")
    size = t.shape[0] + n - 1
    nfft = 1 << (size - 1).bit_length()
    full = np.fft.irfft(np.fft.rfft(t, nfft) * np.fft.rfft(x, nfft), nfft)
    window = np.rint(full[n - 1:n - 1 + m]).astype(np.int64)
    return (window & 1).astype(np.uint8)
