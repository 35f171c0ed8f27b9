"""Cell graph construction: kNN topology over nucleus centroids with
distance pruning, plus the 17 per-nucleus node features.

An edge (v, u) exists when u is among v's k nearest neighbors AND closer
than d_min, or vice versa (union symmetrization). Distance ties resolve to
the smaller node index. The k-th neighbor distance excludes the node
itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .features import (
    NUCLEUS_TEXTURE_SCHEMA,
    SHAPE_SCHEMA,
    EntityMask,
    shape_features,
    texture_features_nucleus,
)
from .graph import Graph

BRUTE_FORCE_LIMIT = 64

CELL_SCHEMA = SHAPE_SCHEMA + NUCLEUS_TEXTURE_SCHEMA + ("centroid_x_norm", "centroid_y_norm")


class EmptyCellGraphError(ValueError):
    """Raised when an RoI yields no nuclei; callers may skip the RoI."""


@dataclass(frozen=True)
class CgParams:
    k: int = 5
    d_min: float = 50.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.d_min <= 0:
            raise ValueError("d_min must be positive")


def _brute_force_select(x: np.ndarray, y: np.ndarray, k: int, d_min: float) -> np.ndarray:
    """All-pairs variant of the grid query, used below the grid's break-even
    point. Same selection rule: k smallest by (squared distance, index),
    strictly inside d_min."""
    n = len(x)
    out = np.full((n, k), -1, dtype=np.int64)
    limit = d_min * d_min
    idx = np.arange(n)
    for i in range(n):
        dx = x - x[i]
        dy = y - y[i]
        d2 = dx * dx + dy * dy
        keep = (d2 < limit) & (idx != i)
        cand, cd2 = idx[keep], d2[keep]
        if not len(cand):
            continue
        sel = np.lexsort((cand, cd2))[:k]
        out[i, : len(sel)] = cand[sel]
    return out


def knn_edges(centroids: np.ndarray, params: CgParams) -> np.ndarray:
    """Undirected pruned-kNN edges over (x, y) centroids, as sorted unique
    (min, max) pairs."""
    pts = np.asarray(centroids, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("need at least one centroid")
    if n == 1:
        return np.zeros((0, 2), dtype=np.int64)
    x, y = np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])
    if n < BRUTE_FORCE_LIMIT:
        sel = _brute_force_select(x, y, params.k, params.d_min)
    else:
        sel = kernels.grid_knn_select(x, y, params.k, params.d_min)
    src = np.repeat(np.arange(n, dtype=np.int64), params.k)
    dst = sel.reshape(-1)
    ok = dst >= 0
    src, dst = src[ok], dst[ok]
    if not len(src):
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.stack([np.minimum(src, dst), np.maximum(src, dst)], axis=1)
    return np.unique(pairs, axis=0)


def build_cell_graph(image: np.ndarray, nuclei: list[EntityMask], params: CgParams) -> Graph:
    """Nucleus-per-node graph: 7 shape + 8 texture features plus the
    centroid normalized by image size."""
    if not nuclei:
        raise EmptyCellGraphError("empty cell graph")
    h, w = image.shape[:2]
    rows = []
    centroids = np.empty((len(nuclei), 2))
    for i, mask in enumerate(nuclei):
        cx, cy = mask.centroid()
        centroids[i] = (cx, cy)
        rows.append(
            np.concatenate(
                [
                    shape_features(mask).values,
                    texture_features_nucleus(image, mask).values,
                    [cx / w, cy / h],
                ]
            )
        )
    return Graph(
        num_nodes=len(nuclei),
        edges=knn_edges(centroids, params),
        node_features=np.stack(rows),
        feature_schema=CELL_SCHEMA,
    )
