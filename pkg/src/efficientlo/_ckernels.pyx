# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled grouping/projection kernels; mirror ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLD = 0x9E3779B97F4A7C15ULL
cdef uint64_t C1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t C2 = 0x94D049BB133111EBULL


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * C1
    z = (z ^ (z >> 27)) * C2
    return z ^ (z >> 31)


cdef inline uint64_t key64(uint64_t a, uint64_t b) noexcept nogil:
    return mix64(a + (b + 1) * GOLD)


cdef inline int64_t bounded(uint64_t h, int64_t n) noexcept nogil:
    return <int64_t>(((h >> 32) * <uint64_t>n) >> 32)


cdef inline bint knn_less(double da, int64_t ia, double db, int64_t ib) noexcept nogil:
    return da < db or (da == db and ia < ib)


cdef void select_k(int64_t* cand, double* d2, int64_t m, int64_t K, int mode,
                   uint64_t base, int64_t* out) noexcept nogil:
    """Select K of the m survivors in ``cand``; may reorder ``cand``/``d2``."""
    cdef int64_t k, j, a, i, lim
    cdef double da
    cdef uint64_t h
    if m == 0:
        for k in range(K):
            out[k] = -1
        return
    if mode == 1:
        lim = m if m < K else K
        # insertion sort into a prefix of length lim; later entries only ever enter it
        for i in range(m):
            da = d2[i]
            a = cand[i]
            if i >= lim:
                if not knn_less(da, a, d2[lim - 1], cand[lim - 1]):
                    continue
                j = lim - 1
            else:
                j = i
            while j > 0 and knn_less(da, a, d2[j - 1], cand[j - 1]):
                d2[j] = d2[j - 1]
                cand[j] = cand[j - 1]
                j -= 1
            d2[j] = da
            cand[j] = a
        for k in range(K):
            out[k] = cand[k] if k < m else cand[k % m]
        return
    lim = m if m < K else K
    for k in range(lim):
        h = key64(base, <uint64_t>k)
        j = k + bounded(h, m - k)
        a = cand[k]
        cand[k] = cand[j]
        cand[j] = a
        out[k] = cand[k]
    for k in range(m, K):
        h = key64(base, <uint64_t>(K + k))
        out[k] = cand[bounded(h, m)]


def scatter_min_range(cnp.int64_t[::1] cells, double[::1] ranges, Py_ssize_t ncells):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] owner_arr = np.full(ncells, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] owner = owner_arr
    cdef Py_ssize_t i, n = cells.shape[0]
    cdef int64_t c, o
    with nogil:
        for i in range(n):
            c = cells[i]
            if c < 0:
                continue
            o = owner[c]
            if o < 0 or ranges[i] < ranges[o]:
                owner[c] = i
    return owner_arr


def window_group(coords, valid, center_rc, center_xyz, int kh, int kw, double radius,
                 int K, int mode, uint64_t seed, uint64_t stream, int num_threads=1):
    cdef Py_ssize_t H = valid.shape[0], W = valid.shape[1]
    cdef double[:, ::1] P = np.ascontiguousarray(coords, dtype=np.float64).reshape(H * W, 3)
    cdef cnp.uint8_t[::1] V = np.ascontiguousarray(valid, dtype=np.uint8).reshape(-1)
    cdef cnp.int64_t[:, ::1] RC = np.ascontiguousarray(center_rc, dtype=np.int64).reshape(-1, 2)
    cdef double[:, ::1] CX = np.ascontiguousarray(center_xyz, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t n = RC.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out_arr = np.full((n, K), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] m_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef cnp.int64_t[::1] msurv = m_arr
    cdef int hh = kh // 2
    cdef int dc_lo, dc_hi
    if kw >= W:
        dc_lo = -(W // 2)
        dc_hi = W - W // 2 - 1
    else:
        dc_lo = -(kw // 2)
        dc_hi = kw // 2
    cdef Py_ssize_t C = (2 * hh + 1) * (dc_hi - dc_lo + 1)
    cdef double r2 = radius * radius
    cdef uint64_t skey = key64(seed, stream)
    cdef Py_ssize_t i
    cdef int64_t r, c, rr, cc, flat, m
    cdef int dr, dc
    cdef double dx, dy, dz, d2
    cdef int64_t* cand
    cdef double* dist
    with nogil:
        for i in prange(n, schedule="static", num_threads=num_threads):
            cand = <int64_t*> malloc(C * sizeof(int64_t))
            dist = <double*> malloc(C * sizeof(double))
            r = RC[i, 0]
            c = RC[i, 1]
            m = 0
            for dr in range(-hh, hh + 1):
                rr = r + dr
                if rr < 0 or rr >= H:
                    continue
                for dc in range(dc_lo, dc_hi + 1):
                    cc = (c + dc) % W
                    if cc < 0:
                        cc = cc + W
                    flat = rr * W + cc
                    if not V[flat]:
                        continue
                    dx = P[flat, 0] - CX[i, 0]
                    dy = P[flat, 1] - CX[i, 1]
                    dz = P[flat, 2] - CX[i, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 <= r2:
                        cand[m] = flat
                        dist[m] = d2
                        m = m + 1
            msurv[i] = m
            select_k(cand, dist, m, K, mode, key64(skey, <uint64_t>i), &out[i, 0])
            free(cand)
            free(dist)
    return out_arr, m_arr


def full_group(points, point_ids, center_xyz, double radius, int K, int mode,
               uint64_t seed, uint64_t stream, int num_threads=1):
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef cnp.int64_t[::1] ids = np.ascontiguousarray(point_ids, dtype=np.int64)
    cdef double[:, ::1] CX = np.ascontiguousarray(center_xyz, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t N = P.shape[0], n = CX.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out_arr = np.full((n, K), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] m_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef cnp.int64_t[::1] msurv = m_arr
    cdef double r2 = radius * radius
    cdef uint64_t skey = key64(seed, stream)
    cdef Py_ssize_t i, p
    cdef int64_t m
    cdef double dx, dy, dz, d2
    cdef int64_t* cand
    cdef double* dist
    with nogil:
        for i in prange(n, schedule="static", num_threads=num_threads):
            cand = <int64_t*> malloc((N + 1) * sizeof(int64_t))
            dist = <double*> malloc((N + 1) * sizeof(double))
            m = 0
            for p in range(N):
                dx = P[p, 0] - CX[i, 0]
                dy = P[p, 1] - CX[i, 1]
                dz = P[p, 2] - CX[i, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 <= r2:
                    cand[m] = ids[p]
                    dist[m] = d2
                    m = m + 1
            msurv[i] = m
            select_k(cand, dist, m, K, mode, key64(skey, <uint64_t>i), &out[i, 0])
            free(cand)
            free(dist)
    return out_arr, m_arr
