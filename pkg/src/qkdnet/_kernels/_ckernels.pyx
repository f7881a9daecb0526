# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Output-identical to ``_python``."""
from libcpp.deque cimport deque
from libc.stdint cimport uint8_t, uint64_t, int64_t

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef inline int64_t _search(uint8_t[:] dq, int64_t lo, int64_t hi, int64_t* steps) noexcept nogil:
    cdef int64_t mid, j
    cdef uint8_t acc
    while hi - lo > 1:
        mid = (lo + hi) // 2
        steps[0] += 1
        acc = 0
        for j in range(lo, mid):
            acc ^= dq[j]
        if acc & 1:
            hi = mid
        else:
            lo = mid
    return lo


def cascade(a, b, perms, block_sizes):
    a_ = np.ascontiguousarray(a, dtype=np.uint8)
    b_ = np.ascontiguousarray(b, dtype=np.uint8)
    cdef const int64_t[:, ::1] pm = np.ascontiguousarray(perms, dtype=np.int64)
    cdef const int64_t[::1] ks = np.ascontiguousarray(block_sizes, dtype=np.int64)
    cdef int64_t n = a_.shape[0]
    cdef int64_t npass = ks.shape[0]
    cdef int64_t nb0 = (n + ks[0] - 1) // ks[0] if npass > 0 else 0

    cdef uint8_t[::1] d = a_ ^ b_
    cdef uint8_t[::1] flips = np.zeros(n, dtype=np.uint8)
    cdef int64_t[::1] leaked = np.zeros(npass, dtype=np.int64)
    cdef uint8_t[:, ::1] dp = np.zeros((npass, n), dtype=np.uint8)
    cdef int64_t[:, ::1] inv = np.zeros((npass, n), dtype=np.int64)
    # pass 0 always has the smallest block size, hence the most blocks
    cdef uint8_t[:, ::1] par = np.zeros((npass, max(nb0, 1)), dtype=np.uint8)

    cdef int64_t corrections = 0, passes_run = 0
    cdef int64_t p, q, r, k, kq, blk, bq, nb, lo, hi, j, jr, br, i, steps, x
    cdef bint found
    cdef deque[int64_t] queue

    with nogil:
        for p in range(npass):
            k = ks[p]
            nb = (n + k - 1) // k
            for x in range(n):
                j = pm[p, x]
                dp[p, x] = d[j]
                inv[p, j] = x
            for blk in range(nb):
                par[p, blk] = 0
            for x in range(n):
                par[p, x // k] ^= dp[p, x]
            leaked[p] += nb
            passes_run += 1

            found = False
            for blk in range(nb):
                if not par[p, blk]:
                    continue
                found = True
                queue.push_back(p)
                queue.push_back(blk)
                while not queue.empty():
                    q = queue.front()
                    queue.pop_front()
                    bq = queue.front()
                    queue.pop_front()
                    if not par[q, bq]:
                        continue
                    kq = ks[q]
                    lo = bq * kq
                    hi = lo + kq
                    if hi > n:
                        hi = n
                    steps = 0
                    j = _search(dp[q], lo, hi, &steps)
                    leaked[p] += steps
                    i = pm[q, j]
                    flips[i] ^= 1
                    d[i] ^= 1
                    corrections += 1
                    for r in range(p + 1):
                        jr = inv[r, i]
                        dp[r, jr] ^= 1
                        br = jr // ks[r]
                        par[r, br] ^= 1
                        if r != q and par[r, br]:
                            queue.push_back(r)
                            queue.push_back(br)
            if p == 0 and not found:
                break

    return b_ ^ np.asarray(flips), np.asarray(leaked), corrections, passes_run


def toeplitz_hash(t, x, Py_ssize_t m):
    """Bit-packed GF(2) Toeplitz product; see ``_python.toeplitz_hash``."""
    cdef const uint8_t[::1] xv = np.ascontiguousarray(x, dtype=np.uint8)
    cdef const uint8_t[::1] tv = np.ascontiguousarray(t, dtype=np.uint8)
    cdef Py_ssize_t n = xv.shape[0]
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    if tv.shape[0] != n + m - 1:
        raise ValueError("toeplitz seed must have length n + m - 1")

    cdef Py_ssize_t tw = (tv.shape[0] + 63) // 64 + 1
    cdef Py_ssize_t yw = (m + 63) // 64
    cdef uint64_t[::1] tp = np.zeros(tw, dtype=np.uint64)
    cdef uint64_t[::1] yp = np.zeros(yw, dtype=np.uint64)
    cdef Py_ssize_t i, j, w, s, base, sh

    with nogil:
        for i in range(tv.shape[0]):
            if tv[i]:
                tp[i >> 6] |= (<uint64_t>1) << (i & 63)
        # y[i] = XOR_j t[i - j + n - 1] x[j]: XOR the window t[s:s+m], s = n-1-j
        for j in range(n):
            if not xv[j]:
                continue
            s = n - 1 - j
            base = s >> 6
            sh = s & 63
            if sh == 0:
                for w in range(yw):
                    yp[w] ^= tp[base + w]
            else:
                for w in range(yw):
                    yp[w] ^= (tp[base + w] >> sh) | (tp[base + w + 1] << (64 - sh))

    out = np.empty(m, dtype=np.uint8)
    cdef uint8_t[::1] ov = out
    with nogil:
        for i in range(m):
            ov[i] = (yp[i >> 6] >> (i & 63)) & 1
    return out
