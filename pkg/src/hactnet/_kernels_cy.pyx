# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the hot kernels in hactnet._kernels_np.

Every function reproduces the numpy backend's float64 operation order
(sequential scans, strict-improvement updates, ties by ascending index),
so outputs are bit-identical across backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, INFINITY

cnp.import_array()

BACKEND_NAME = "cython"

GLCM_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))


def slic_assign(const double[:, ::1] l, const double[:, ::1] a, const double[:, ::1] b,
                const double[::1] cl, const double[::1] ca, const double[::1] cb,
                const double[::1] cx, const double[::1] cy,
                int half_window, double spatial_weight):
    cdef Py_ssize_t h = l.shape[0], w = l.shape[1], nk = cl.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] labels_arr = np.full((h, w), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] best_arr = np.full((h, w), np.inf)
    cdef long long[:, ::1] labels = labels_arr
    cdef double[:, ::1] best = best_arr
    cdef Py_ssize_t k, y, x, y0, y1, x0, x1
    cdef double dl, da, db, dx, dy, d, ckl, cka, ckb, ckx, cky

    for k in range(nk):
        y0 = <Py_ssize_t>floor(cy[k]) - half_window
        y1 = <Py_ssize_t>floor(cy[k]) + half_window + 1
        x0 = <Py_ssize_t>floor(cx[k]) - half_window
        x1 = <Py_ssize_t>floor(cx[k]) + half_window + 1
        if y0 < 0: y0 = 0
        if x0 < 0: x0 = 0
        if y1 > h: y1 = h
        if x1 > w: x1 = w
        if y0 >= y1 or x0 >= x1:
            continue
        ckl = cl[k]; cka = ca[k]; ckb = cb[k]; ckx = cx[k]; cky = cy[k]
        for y in range(y0, y1):
            dy = <double>y - cky
            for x in range(x0, x1):
                dl = l[y, x] - ckl
                da = a[y, x] - cka
                db = b[y, x] - ckb
                dx = <double>x - ckx
                d = ((dl * dl + da * da) + db * db) + spatial_weight * (dx * dx + dy * dy)
                if d < best[y, x]:
                    best[y, x] = d
                    labels[y, x] = k
    return labels_arr, best_arr


def glcm_counts(quant, mask, int levels):
    cdef const long long[:, ::1] q = np.ascontiguousarray(quant, dtype=np.int64)
    cdef const cnp.uint8_t[:, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = q.shape[0], w = q.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=3] out_arr = np.zeros(
        (4, levels, levels), dtype=np.int64)
    cdef long long[:, :, ::1] out = out_arr
    cdef int offs_y[4]
    cdef int offs_x[4]
    offs_y[0] = 0;  offs_x[0] = 1
    offs_y[1] = -1; offs_x[1] = 1
    offs_y[2] = -1; offs_x[2] = 0
    offs_y[3] = -1; offs_x[3] = -1
    cdef Py_ssize_t i, y, x, yy, xx
    cdef long long qa, qb

    for i in range(4):
        for y in range(h):
            yy = y + offs_y[i]
            if yy < 0 or yy >= h:
                continue
            for x in range(w):
                xx = x + offs_x[i]
                if xx < 0 or xx >= w:
                    continue
                if m[y, x] and m[yy, xx]:
                    qa = q[y, x]
                    qb = q[yy, xx]
                    out[i, qa, qb] += 1
                    out[i, qb, qa] += 1
    return out_arr


def region_adjacency(labels, int num_regions):
    cdef const long long[:, ::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t h = lab.shape[0], w = lab.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] adj_arr = np.zeros(
        (num_regions, num_regions), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] adj = adj_arr
    cdef Py_ssize_t y, x
    cdef long long p, q

    for y in range(h):
        for x in range(w):
            p = lab[y, x]
            if y + 1 < h:
                q = lab[y + 1, x]
                if p != q:
                    adj[p, q] = 1
                    adj[q, p] = 1
            if x + 1 < w:
                q = lab[y, x + 1]
                if p != q:
                    adj[p, q] = 1
                    adj[q, p] = 1
    return adj_arr.astype(bool)


def grid_knn_select(x, y, int k, double d_min):
    cdef const double[::1] px = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] py = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = px.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out_arr = np.full((n, k), -1, dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    if n <= 1:
        return out_arr

    cdef double limit = d_min * d_min
    cx_arr = np.floor(np.asarray(x, dtype=np.float64) / d_min).astype(np.int64)
    cy_arr = np.floor(np.asarray(y, dtype=np.float64) / d_min).astype(np.int64)
    cx_arr -= cx_arr.min()
    cy_arr -= cy_arr.min()
    cdef long long ncx = int(cx_arr.max()) + 1
    cdef long long ncy = int(cy_arr.max()) + 1
    cell_arr = cy_arr * ncx + cx_arr
    order_arr = np.argsort(cell_arr, kind="stable")
    starts_arr = np.searchsorted(cell_arr[order_arr], np.arange(ncx * ncy + 1))

    cdef const long long[::1] cxv = cx_arr
    cdef const long long[::1] cyv = cy_arr
    cdef const long long[::1] order = np.ascontiguousarray(order_arr, dtype=np.int64)
    cdef const long long[::1] starts = np.ascontiguousarray(starts_arr, dtype=np.int64)

    # scratch: candidate index/distance buffers, worst case all points
    cand_arr = np.empty(n, dtype=np.int64)
    d2_arr = np.empty(n, dtype=np.float64)
    used_arr = np.empty(n, dtype=np.uint8)
    cdef long long[::1] cand = cand_arr
    cdef double[::1] d2 = d2_arr
    cdef cnp.uint8_t[::1] used = used_arr

    cdef Py_ssize_t i, j, m, slot, best_j
    cdef long long gy, gx, c, idx
    cdef double ddx, ddy, dd, best_d
    cdef long long best_idx

    for i in range(n):
        m = 0
        for gy in range(cyv[i] - 1, cyv[i] + 2):
            if gy < 0 or gy >= ncy:
                continue
            for gx in range(cxv[i] - 1, cxv[i] + 2):
                if gx < 0 or gx >= ncx:
                    continue
                c = gy * ncx + gx
                for j in range(starts[c], starts[c + 1]):
                    idx = order[j]
                    if idx == i:
                        continue
                    ddx = px[idx] - px[i]
                    ddy = py[idx] - py[i]
                    dd = ddx * ddx + ddy * ddy
                    if dd < limit:
                        cand[m] = idx
                        d2[m] = dd
                        used[m] = 0
                        m += 1
        # k passes of selection by (distance, index)
        for slot in range(k):
            best_j = -1
            best_d = INFINITY
            best_idx = -1
            for j in range(m):
                if used[j]:
                    continue
                if d2[j] < best_d or (d2[j] == best_d and cand[j] < best_idx):
                    best_j = j
                    best_d = d2[j]
                    best_idx = cand[j]
            if best_j < 0:
                break
            used[best_j] = 1
            out[i, slot] = cand[best_j]
    return out_arr
