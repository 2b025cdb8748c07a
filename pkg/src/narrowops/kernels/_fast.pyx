# Compiled search kernels. Semantics (iteration order, tie-breaking, accept
# thresholds) mirror kernels/_pure.py; running sums are refreshed periodically
# and before accepting a new best so incremental drift cannot leak into
# reported values.

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

cnp.import_array()

cdef double IMPROVE = 1e-12
cdef Py_ssize_t REFRESH = 4096


cdef inline double _norm(const double* y, const double* w, double q, Py_ssize_t m) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t j
    if q == 1.0:
        for j in range(m):
            acc += w[j] * fabs(y[j])
        return acc
    if q == 2.0:
        for j in range(m):
            acc += w[j] * y[j] * y[j]
        return sqrt(acc)
    for j in range(m):
        acc += w[j] * pow(fabs(y[j]), q)
    return pow(acc, 1.0 / q)


def balanced_min(object images_obj, object w_obj, double q):
    """See kernels._pure.balanced_min."""
    cdef const double[:, ::1] images = np.ascontiguousarray(images_obj, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(w_obj, dtype=np.float64)
    cdef Py_ssize_t n = images.shape[0], m = images.shape[1]
    cdef Py_ssize_t half = n // 2, k = half - 1
    cdef cnp.int64_t[::1] comb = np.arange(k, dtype=np.int64)
    cdef cnp.int64_t[::1] best_comb = np.arange(k, dtype=np.int64)
    cdef double[::1] total = np.asarray(images_obj, dtype=np.float64).sum(axis=0)
    cdef double[::1] y = np.zeros(m)
    cdef double best_val, val
    cdef Py_ssize_t i, j, t, old, newv, base, since
    cdef long evals = 0

    _rebuild(&y[0], &total[0], images, comb, k, m)
    best_val = _norm(&y[0], &w[0], q, m)
    evals += 1
    for j in range(k):
        best_comb[j] = comb[j]
    since = 0
    while True:
        i = k - 1
        while i >= 0 and comb[i] == n - 2 - (k - 1 - i):
            i -= 1
        if i < 0:
            break
        base = comb[i] + 1
        for j in range(i, k):
            old = comb[j]
            newv = base + (j - i)
            for t in range(m):
                y[t] += 2.0 * (images[newv + 1, t] - images[old + 1, t])
            comb[j] = newv
        since += 1
        if since >= REFRESH:
            _rebuild(&y[0], &total[0], images, comb, k, m)
            since = 0
        val = _norm(&y[0], &w[0], q, m)
        evals += 1
        if val < best_val:
            _rebuild(&y[0], &total[0], images, comb, k, m)
            since = 0
            val = _norm(&y[0], &w[0], q, m)
            if val < best_val:
                best_val = val
                for j in range(k):
                    best_comb[j] = comb[j]
    signs = -np.ones(n, dtype=np.int8)
    signs[0] = 1
    for j in range(k):
        signs[best_comb[j] + 1] = 1
    _rebuild(&y[0], &total[0], images, best_comb, k, m)
    best_val = _norm(&y[0], &w[0], q, m)
    return best_val, signs, evals


cdef void _rebuild(double* y, const double* total, const double[:, ::1] images,
                   cnp.int64_t[::1] comb, Py_ssize_t k, Py_ssize_t m) noexcept nogil:
    # signs: +1 on atom 0 and the companions comb+1, -1 elsewhere
    cdef Py_ssize_t j, t
    for t in range(m):
        y[t] = 2.0 * images[0, t] - total[t]
    for j in range(k):
        for t in range(m):
            y[t] += 2.0 * images[comb[j] + 1, t]


def swap_descent(object images_obj, object w_obj, double q, object signs_obj, int max_passes=60):
    """See kernels._pure.swap_descent."""
    cdef const double[:, ::1] images = np.ascontiguousarray(images_obj, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(w_obj, dtype=np.float64)
    s_arr = np.asarray(signs_obj, dtype=np.int8).copy()
    cdef signed char[::1] s = s_arr
    cdef Py_ssize_t n = images.shape[0], m = images.shape[1]
    cdef double[::1] y = np.zeros(m)
    cdef double[::1] tmp = np.zeros(m)
    cdef double cur, best_val, v
    cdef Py_ssize_t i, j, t, best_i, best_j, p
    cdef long evals = 0

    for i in range(n):
        for t in range(m):
            y[t] += s[i] * images[i, t]
    cur = _norm(&y[0], &w[0], q, m)
    for p in range(max_passes):
        best_val = cur
        best_i = -1
        best_j = -1
        for i in range(n):
            if s[i] != 1:
                continue
            for j in range(n):
                if s[j] != -1:
                    continue
                for t in range(m):
                    tmp[t] = y[t] - 2.0 * images[i, t] + 2.0 * images[j, t]
                v = _norm(&tmp[0], &w[0], q, m)
                evals += 1
                if v < best_val:
                    best_val = v
                    best_i = i
                    best_j = j
        if best_i < 0 or not best_val < cur * (1.0 - IMPROVE):
            break
        s[best_i] = -1
        s[best_j] = 1
        for t in range(m):
            y[t] = 0.0
        for i in range(n):
            for t in range(m):
                y[t] += s[i] * images[i, t]
        cur = _norm(&y[0], &w[0], q, m)
    return cur, s_arr, evals


def signed_max(object blocks_obj, object w_obj, double q):
    """See kernels._pure.signed_max."""
    cdef const double[:, ::1] blocks = np.ascontiguousarray(blocks_obj, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(w_obj, dtype=np.float64)
    cdef Py_ssize_t N = blocks.shape[0], m = blocks.shape[1]
    cdef long K = 1 << (N - 1)
    cdef signed char[::1] eps = np.ones(N, dtype=np.int8)
    cdef double[::1] y = np.zeros(m)
    cdef double best_val, v
    cdef long t_step, k_cur, best_k
    cdef Py_ssize_t b, j, t, since
    cdef long evals = 0

    for j in range(N):
        for t in range(m):
            y[t] += blocks[j, t]
    best_val = _norm(&y[0], &w[0], q, m)
    best_k = 0
    evals += 1
    since = 0
    for t_step in range(1, K):
        b = 0
        while not (t_step >> b) & 1:
            b += 1
        j = b + 1
        for t in range(m):
            y[t] -= 2.0 * eps[j] * blocks[j, t]
        eps[j] = -eps[j]
        k_cur = t_step ^ (t_step >> 1)
        since += 1
        if since >= REFRESH:
            _rebuild_pattern(&y[0], blocks, eps, N, m)
            since = 0
        v = _norm(&y[0], &w[0], q, m)
        evals += 1
        if v > best_val or (v == best_val and k_cur < best_k):
            _rebuild_pattern(&y[0], blocks, eps, N, m)
            since = 0
            v = _norm(&y[0], &w[0], q, m)
            if v > best_val or (v == best_val and k_cur < best_k):
                best_val = v
                best_k = k_cur
    eps_best = np.ones(N, dtype=np.int8)
    for j in range(N - 1):
        if (best_k >> j) & 1:
            eps_best[j + 1] = -1
    cdef signed char[::1] eb = eps_best
    _rebuild_pattern(&y[0], blocks, eb, N, m)
    best_val = _norm(&y[0], &w[0], q, m)
    return best_val, best_k, evals


cdef void _rebuild_pattern(double* y, const double[:, ::1] blocks, const signed char[::1] eps,
                           Py_ssize_t N, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t j, t
    for t in range(m):
        y[t] = 0.0
    for j in range(N):
        for t in range(m):
            y[t] += eps[j] * blocks[j, t]
