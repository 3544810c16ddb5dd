# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled shortest-path kernels over DAGs.

Mirrors ``_kernels_py`` function for function; results are bitwise
identical to the pure-Python fallback.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs
from libc.stdint cimport int64_t, int32_t, uint8_t
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef int64_t INT64_MAX = 9223372036854775807


cdef inline int _add_checked(int64_t a, int64_t b, int64_t *out) nogil:
    if b > 0 and a > INT64_MAX - b:
        return 1
    out[0] = a + b
    return 0


cdef int _path_into(const int32_t[:] pred_row, int s, int v, int32_t *buf) nogil:
    # writes the s..v path into buf in forward order, returns its length
    cdef int k = 0, i, j, tmp
    buf[k] = v
    k += 1
    while v != s:
        v = pred_row[v]
        buf[k] = v
        k += 1
    i = 0
    j = k - 1
    while i < j:
        tmp = buf[i]
        buf[i] = buf[j]
        buf[j] = tmp
        i += 1
        j -= 1
    return k


cdef bint _lex_less(const int32_t[:] pred_row, int s, int u, int cur, int v,
                    int32_t *a, int32_t *b) nogil:
    # is path(s,u)+[v] lexicographically smaller than path(s,cur)+[v]?
    cdef int la = _path_into(pred_row, s, u, a)
    cdef int lb = _path_into(pred_row, s, cur, b)
    a[la] = v
    b[lb] = v
    la += 1
    lb += 1
    cdef int i = 0
    while i < la and i < lb:
        if a[i] != b[i]:
            return a[i] < b[i]
        i += 1
    return la < lb


def all_pairs_dag(int n, topo, in_ptr, in_src, in_w, double rtol):
    cdef const int32_t[:] t_topo = np.ascontiguousarray(topo, dtype=np.int32)
    cdef const int64_t[:] t_ptr = np.ascontiguousarray(in_ptr, dtype=np.int64)
    cdef const int32_t[:] t_src = np.ascontiguousarray(in_src, dtype=np.int32)
    cdef const double[:] t_w = np.ascontiguousarray(in_w, dtype=np.float64)

    dist_arr = np.full((n, n), np.inf)
    sigma_arr = np.zeros((n, n), dtype=np.int64)
    pred_arr = np.full((n, n), -1, dtype=np.int32)
    bc_arr = np.zeros(n)
    cdef double[:, :] dist = dist_arr
    cdef int64_t[:, :] sigma = sigma_arr
    cdef int32_t[:, :] pred = pred_arr
    cdef double[:] bc = bc_arr

    cdef int32_t[:] pos = np.empty(n, dtype=np.int32)
    cdef int32_t[:] reached = np.empty(n, dtype=np.int32)
    cdef double[:] delta = np.empty(n)
    cdef int32_t *buf_a = <int32_t *> malloc((n + 1) * sizeof(int32_t))
    cdef int32_t *buf_b = <int32_t *> malloc((n + 1) * sizeof(int32_t))
    if buf_a == NULL or buf_b == NULL:
        free(buf_a)
        free(buf_b)
        raise MemoryError()

    cdef int s, k, v, u, nreach, chosen, overflow = 0
    cdef int64_t e, lo, hi, count
    cdef double best, c, du, limit, coeff
    try:
        with nogil:
            for k in range(n):
                pos[t_topo[k]] = k
            for s in range(n):
                dist[s, s] = 0.0
                sigma[s, s] = 1
                reached[0] = s
                nreach = 1
                for k in range(pos[s] + 1, n):
                    v = t_topo[k]
                    lo = t_ptr[v]
                    hi = t_ptr[v + 1]
                    best = INFINITY
                    for e in range(lo, hi):
                        du = dist[s, t_src[e]]
                        if du != INFINITY:
                            c = du + t_w[e]
                            if c < best:
                                best = c
                    if best == INFINITY:
                        continue
                    limit = best + rtol * fabs(best)
                    count = 0
                    chosen = -1
                    for e in range(lo, hi):
                        u = t_src[e]
                        du = dist[s, u]
                        if du == INFINITY or du + t_w[e] > limit:
                            continue
                        if _add_checked(count, sigma[s, u], &count):
                            overflow = 1
                            break
                        if chosen < 0:
                            chosen = u
                        elif u != chosen:
                            if _lex_less(pred[s], s, u, chosen, v, buf_a, buf_b):
                                chosen = u
                    if overflow:
                        break
                    dist[s, v] = best
                    sigma[s, v] = count
                    pred[s, v] = chosen
                    reached[nreach] = v
                    nreach += 1
                if overflow:
                    break

                for k in range(nreach):
                    delta[reached[k]] = 0.0
                for k in range(nreach - 1, 0, -1):
                    v = reached[k]
                    limit = dist[s, v] + rtol * fabs(dist[s, v])
                    coeff = (1.0 + delta[v]) / <double> sigma[s, v]
                    for e in range(t_ptr[v], t_ptr[v + 1]):
                        u = t_src[e]
                        du = dist[s, u]
                        if du == INFINITY or du + t_w[e] > limit:
                            continue
                        delta[u] += <double> sigma[s, u] * coeff
                    bc[v] += delta[v]
    finally:
        free(buf_a)
        free(buf_b)
    if overflow:
        raise OverflowError("shortest-path count exceeds 64 bits")
    return dist_arr, sigma_arr, pred_arr, bc_arr


def extract_paths(pred_in, dist_in):
    cdef const int32_t[:, :] pred = np.ascontiguousarray(pred_in, dtype=np.int32)
    reach = np.isfinite(dist_in)
    np.fill_diagonal(reach, False)
    cdef const uint8_t[:, :] ok = reach.view(np.uint8)
    cdef int n = pred.shape[0]
    cdef int s, t, v
    cdef Py_ssize_t npairs = 0, nnodes = 0, p, q, i, j

    # first pass: sizes
    for s in range(n):
        for t in range(n):
            if ok[s, t]:
                npairs += 1
                v = pred[s, t]
                while v != s:
                    nnodes += 1
                    v = pred[s, v]

    src_arr = np.empty(npairs, dtype=np.int32)
    tgt_arr = np.empty(npairs, dtype=np.int32)
    ptr_arr = np.empty(npairs + 1, dtype=np.int64)
    nodes_arr = np.empty(nnodes, dtype=np.int32)
    cdef int32_t[:] src = src_arr
    cdef int32_t[:] tgt = tgt_arr
    cdef int64_t[:] ptr = ptr_arr
    cdef int32_t[:] nodes = nodes_arr
    cdef int32_t tmp

    p = 0
    q = 0
    ptr[0] = 0
    for s in range(n):
        for t in range(n):
            if not ok[s, t]:
                continue
            src[p] = s
            tgt[p] = t
            i = q
            v = pred[s, t]
            while v != s:
                nodes[q] = v
                q += 1
                v = pred[s, v]
            j = q - 1
            while i < j:
                tmp = nodes[i]
                nodes[i] = nodes[j]
                nodes[j] = tmp
                i += 1
                j -= 1
            p += 1
            ptr[p] = q
    return src_arr, tgt_arr, ptr_arr, nodes_arr


def count_augmented(int n, topo, in_ptr, in_src, in_w, is_decoy, sources, is_target,
                    double rtol):
    cdef const int32_t[:] t_topo = np.ascontiguousarray(topo, dtype=np.int32)
    cdef const int64_t[:] t_ptr = np.ascontiguousarray(in_ptr, dtype=np.int64)
    cdef const int32_t[:] t_src = np.ascontiguousarray(in_src, dtype=np.int32)
    cdef const double[:] t_w = np.ascontiguousarray(in_w, dtype=np.float64)
    cdef const uint8_t[:] dec = np.ascontiguousarray(is_decoy, dtype=np.uint8)
    cdef const uint8_t[:] tgt = np.ascontiguousarray(is_target, dtype=np.uint8)
    cdef const int32_t[:] srcs = np.ascontiguousarray(sources, dtype=np.int32)
    cdef Py_ssize_t m = srcs.shape[0]

    tp_arr = np.zeros(m, dtype=np.int64)
    tc_arr = np.zeros(m, dtype=np.int64)
    td_arr = np.zeros(m, dtype=np.int64)
    cdef int64_t[:] tot_p = tp_arr
    cdef int64_t[:] tot_c = tc_arr
    cdef int64_t[:] tot_d = td_arr

    cdef int32_t[:] pos = np.empty(n, dtype=np.int32)
    cdef double[:] dist = np.empty(n)
    cdef int64_t[:] cnt = np.empty(n, dtype=np.int64)
    cdef int64_t[:] clean = np.empty(n, dtype=np.int64)
    cdef int64_t[:] dsum = np.empty(n, dtype=np.int64)

    cdef Py_ssize_t j
    cdef int s, k, v, u, overflow = 0
    cdef int64_t e, lo, hi, c_all, c_clean, c_dec, acc_p, acc_c, acc_d
    cdef double best, c, du, limit
    with nogil:
        for k in range(n):
            pos[t_topo[k]] = k
        for j in range(m):
            s = srcs[j]
            for k in range(n):
                dist[k] = INFINITY
                cnt[k] = 0
                clean[k] = 0
                dsum[k] = 0
            dist[s] = 0.0
            cnt[s] = 1
            clean[s] = 0 if dec[s] else 1
            dsum[s] = 1 if dec[s] else 0
            acc_p = 0
            acc_c = 0
            acc_d = 0
            for k in range(pos[s] + 1, n):
                v = t_topo[k]
                lo = t_ptr[v]
                hi = t_ptr[v + 1]
                best = INFINITY
                for e in range(lo, hi):
                    du = dist[t_src[e]]
                    if du != INFINITY:
                        c = du + t_w[e]
                        if c < best:
                            best = c
                if best == INFINITY:
                    continue
                limit = best + rtol * fabs(best)
                c_all = 0
                c_clean = 0
                c_dec = 0
                for e in range(lo, hi):
                    u = t_src[e]
                    du = dist[u]
                    if du == INFINITY or du + t_w[e] > limit:
                        continue
                    if (_add_checked(c_all, cnt[u], &c_all)
                            or _add_checked(c_clean, clean[u], &c_clean)
                            or _add_checked(c_dec, dsum[u], &c_dec)):
                        overflow = 1
                        break
                if overflow:
                    break
                if dec[v]:
                    if _add_checked(c_dec, c_all, &c_dec):
                        overflow = 1
                        break
                    c_clean = 0
                dist[v] = best
                cnt[v] = c_all
                clean[v] = c_clean
                dsum[v] = c_dec
                if tgt[v]:
                    if (_add_checked(acc_p, c_all, &acc_p)
                            or _add_checked(acc_c, c_clean, &acc_c)
                            or _add_checked(acc_d, c_dec, &acc_d)):
                        overflow = 1
                        break
            if overflow:
                break
            tot_p[j] = acc_p
            tot_c[j] = acc_c
            tot_d[j] = acc_d
    if overflow:
        raise OverflowError("shortest-path count exceeds 64 bits")
    return tp_arr, tc_arr, td_arr
