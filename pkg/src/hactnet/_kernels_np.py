"""Pure-numpy implementations of the hot per-pixel kernels.

This is the fallback backend; hactnet._kernels_cy implements the same four
functions compiled. Both backends are written as the same sequence of
float64 operations (sequential accumulation, strict-improvement scans,
ties by ascending index), so their outputs are bit-identical and the test
suite can assert exact agreement.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

# distance-1 co-occurrence offsets at 0, 45, 90, 135 degrees as (dy, dx)
GLCM_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))


def slic_assign(l, a, b, cl, ca, cb, cx, cy, half_window, spatial_weight):
    """One assignment sweep of the superpixel k-means.

    Each center k scans a (2*half_window+1)^2 window around its rounded
    position; a pixel takes label k when the combined distance

        d = ((dL^2 + da^2) + db^2) + spatial_weight * (dx^2 + dy^2)

    strictly improves on its current best, so distance ties resolve to the
    lowest center index. Returns (labels, best_distance); unreached pixels
    keep label -1.
    """
    h, w = l.shape
    labels = np.full((h, w), -1, dtype=np.int64)
    best = np.full((h, w), np.inf)
    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    for k in range(len(cl)):
        y0 = max(0, int(np.floor(cy[k])) - half_window)
        y1 = min(h, int(np.floor(cy[k])) + half_window + 1)
        x0 = max(0, int(np.floor(cx[k])) - half_window)
        x1 = min(w, int(np.floor(cx[k])) + half_window + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        dl = l[y0:y1, x0:x1] - cl[k]
        da = a[y0:y1, x0:x1] - ca[k]
        db = b[y0:y1, x0:x1] - cb[k]
        dx = xs[x0:x1] - cx[k]
        dy = ys[y0:y1] - cy[k]
        d = ((dl * dl + da * da) + db * db) + spatial_weight * (
            dx[None, :] * dx[None, :] + dy[:, None] * dy[:, None]
        )
        win = best[y0:y1, x0:x1]
        better = d < win
        win[better] = d[better]
        labels[y0:y1, x0:x1][better] = k
    return labels, best


def glcm_counts(quant, mask, levels):
    """Symmetric co-occurrence counts per offset.

    quant is an int level image, mask selects the pixels that belong to the
    region; a pair is counted only when both endpoints are inside the mask.
    Returns int64 of shape (4, levels, levels).
    """
    q = np.ascontiguousarray(quant, dtype=np.int64)
    m = np.ascontiguousarray(mask, dtype=bool)
    h, w = q.shape
    out = np.zeros((len(GLCM_OFFSETS), levels, levels), dtype=np.int64)
    for i, (dy, dx) in enumerate(GLCM_OFFSETS):
        s0 = slice(max(0, -dy), h - max(0, dy))
        s1 = slice(max(0, -dx), w - max(0, dx))
        t0 = slice(max(0, dy), h - max(0, -dy))
        t1 = slice(max(0, dx), w - max(0, -dx))
        valid = m[s0, s1] & m[t0, t1]
        qa = q[s0, s1][valid]
        qb = q[t0, t1][valid]
        counts = np.bincount(qa * levels + qb, minlength=levels * levels)
        mat = counts.reshape(levels, levels)
        out[i] = mat + mat.T
    return out


def region_adjacency(labels, num_regions):
    """Boolean matrix with True where two region ids share a 4-adjacent
    pixel pair."""
    lab = np.ascontiguousarray(labels, dtype=np.int64)
    adj = np.zeros((num_regions, num_regions), dtype=bool)
    va, vb = lab[:-1, :], lab[1:, :]
    dv = va != vb
    adj[va[dv], vb[dv]] = True
    ha, hb = lab[:, :-1], lab[:, 1:]
    dh = ha != hb
    adj[ha[dh], hb[dh]] = True
    return adj | adj.T


def grid_knn_select(x, y, k, d_min):
    """For each point, the indices of its k nearest neighbors closer than
    d_min, ordered by (squared distance, index); unused slots are -1.

    Candidates come from a uniform grid with cell size d_min, so the 3x3
    cell neighborhood covers every point within the pruning radius.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = len(x)
    out = np.full((n, k), -1, dtype=np.int64)
    if n <= 1:
        return out
    limit = d_min * d_min
    cx = np.floor(x / d_min).astype(np.int64)
    cy = np.floor(y / d_min).astype(np.int64)
    cx -= cx.min()
    cy -= cy.min()
    ncx = int(cx.max()) + 1
    ncy = int(cy.max()) + 1
    cell = cy * ncx + cx
    order = np.argsort(cell, kind="stable")
    sorted_cell = cell[order]
    ncells = ncx * ncy
    starts = np.searchsorted(sorted_cell, np.arange(ncells + 1))
    for i in range(n):
        cand_chunks = []
        for gy in (cy[i] - 1, cy[i], cy[i] + 1):
            if gy < 0 or gy >= ncy:
                continue
            for gx in (cx[i] - 1, cx[i], cx[i] + 1):
                if gx < 0 or gx >= ncx:
                    continue
                c = gy * ncx + gx
                cand_chunks.append(order[starts[c] : starts[c + 1]])
        cand = np.concatenate(cand_chunks)
        cand = cand[cand != i]
        if not len(cand):
            continue
        dx = x[cand] - x[i]
        dy = y[cand] - y[i]
        d2 = dx * dx + dy * dy
        keep = d2 < limit
        cand, d2 = cand[keep], d2[keep]
        if not len(cand):
            continue
        sel = np.lexsort((cand, d2))[:k]
        out[i, : len(sel)] = cand[sel]
    return out
