"""Tissue graph construction: superpixel over-segmentation, greedy
agglomerative merging of similar adjacent regions, region adjacency
topology and per-region node features.

The over-segmentation is a plain k-means in (L, a, b, x, y) with
grid-seeded centers at spacing S = sqrt(H*W / target) and squared distance

    d = dLab^2 + (compactness / S)^2 * dxy^2,

run for a fixed iteration count on a block-mean downscaled image, followed
by connectivity enforcement (orphan components absorbed into the largest
adjacent region) and nearest-neighbor upsampling of the labels.

Merging walks the region adjacency structure greedily: the adjacent pair
with the smallest distance between z-scored 45-dim region features merges
first, while that distance stays under merge_threshold and more than
min_final_regions regions remain. The distance is the Euclidean norm
scaled by 1/sqrt(45), i.e. the RMS per-feature z-discrepancy, so the
threshold is calibrated in per-feature z-score units rather than growing
with the feature count. The z-score statistics are frozen at the initial
over-segmentation; merged-region features are always recomputed exactly
from the full-resolution pixels, never averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .backend import kernels
from .color import srgb_to_lab
from .features import REGION_SCHEMA, superpixel_features
from .graph import Graph

TISSUE_CENTROID_SCHEMA = ("centroid_x_norm", "centroid_y_norm")
SELECTED_FEATURE_COUNT = 24


@dataclass(frozen=True)
class TgParams:
    target_superpixels: int = 200
    slic_compactness: float = 10.0
    slic_iterations: int = 10
    downscale: int = 4
    merge_threshold: float = 0.5
    min_final_regions: int = 4
    tg_features: str = "top24"  # or "all"

    def __post_init__(self):
        if self.target_superpixels < self.min_final_regions:
            raise ValueError("target_superpixels must be >= min_final_regions")
        if self.downscale < 1:
            raise ValueError("downscale must be >= 1")
        if self.tg_features not in ("top24", "all"):
            raise ValueError("tg_features must be 'top24' or 'all'")


@dataclass(frozen=True)
class SuperpixelLabeling:
    """Partition of the image into 4-connected regions with contiguous ids."""

    label_map: np.ndarray
    num_regions: int

    def __post_init__(self):
        self.label_map.setflags(write=False)


def _block_mean(image: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    hs, ws = math.ceil(h / factor), math.ceil(w / factor)
    iy = np.arange(h) // factor
    ix = np.arange(w) // factor
    idx = (iy[:, None] * ws + ix[None, :]).ravel()
    counts = np.bincount(idx, minlength=hs * ws).astype(np.float64)
    out = np.empty((hs, ws, 3))
    img = np.asarray(image, dtype=np.float64)
    for c in range(3):
        sums = np.bincount(idx, weights=img[..., c].ravel(), minlength=hs * ws)
        out[..., c] = (sums / counts).reshape(hs, ws)
    return out


def _seed_grid(h: int, w: int, target: int) -> tuple[int, int]:
    """Seed counts (ny, nx) with nx*ny closest to target, tie-broken toward
    square cells and then toward more columns."""
    best = None
    for nx in range(1, target + 1):
        ny = max(1, round(target / nx))
        nx_c = min(nx, w)
        ny_c = min(ny, h)
        key = (
            abs(nx_c * ny_c - target),
            abs(w / nx_c - h / ny_c),
            -nx_c,
        )
        if best is None or key < best[0]:
            best = (key, (ny_c, nx_c))
    return best[1]


def _relabel_contiguous(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Remap ids to 0..R-1 in order of first raster appearance."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = uniq[np.argsort(first)]
    mapping = np.empty(int(flat.max()) + 1, dtype=np.int64)
    mapping[order] = np.arange(len(order))
    return mapping[labels], len(order)


def _absorb_orphans(labels: np.ndarray, num_regions: int) -> np.ndarray:
    """Keep only the largest component of each region id (ties to the first
    in raster order); every other component joins its largest 4-adjacent
    region, largest by current pixel count with ties to the smallest id."""
    labels = labels.copy()
    sizes = np.bincount(labels.ravel(), minlength=num_regions)
    for r in range(num_regions):
        mask = labels == r
        comp, nc = ndimage.label(mask)
        if nc <= 1:
            continue
        counts = np.bincount(comp.ravel())[1:]
        keep = int(np.argmax(counts)) + 1
        for c in range(1, nc + 1):
            if c == keep:
                continue
            cmask = comp == c
            ring = ndimage.binary_dilation(cmask) & ~cmask
            neigh = labels[ring]
            cand = np.unique(neigh)
            best = min(cand, key=lambda rr: (-sizes[rr], rr))
            n = int(cmask.sum())
            labels[cmask] = best
            sizes[best] += n
            sizes[r] -= n
    return labels


def slic(image: np.ndarray, params: TgParams) -> SuperpixelLabeling:
    """Over-segment into roughly target_superpixels 4-connected regions."""
    h, w = image.shape[:2]
    if h < 16 or w < 16:
        raise ValueError(f"image too small for segmentation: {h}x{w}")
    small = _block_mean(image if image.dtype != np.uint8 else image, params.downscale)
    if image.dtype == np.uint8:
        small = small / 255.0
    hs, ws = small.shape[:2]
    lab = srgb_to_lab(small)
    l = np.ascontiguousarray(lab[..., 0])
    a = np.ascontiguousarray(lab[..., 1])
    b = np.ascontiguousarray(lab[..., 2])

    ny, nx = _seed_grid(hs, ws, params.target_superpixels)
    # seeds on the pixel-center lattice: cell midpoints shifted by -0.5 so
    # Voronoi boundaries fall between integer coordinates, not on them
    sy = (np.arange(ny) + 0.5) * hs / ny - 0.5
    sx = (np.arange(nx) + 0.5) * ws / nx - 0.5
    cy = np.repeat(sy, nx)
    cx = np.tile(sx, ny)
    py = np.clip(np.floor(cy).astype(np.int64), 0, hs - 1)
    px = np.clip(np.floor(cx).astype(np.int64), 0, ws - 1)
    cl, ca, cb = l[py, px].copy(), a[py, px].copy(), b[py, px].copy()

    s = math.sqrt(hs * ws / (nx * ny))
    spatial_weight = (params.slic_compactness / s) ** 2
    half_window = max(1, int(round(2.0 * s)))

    ygrid = np.arange(hs, dtype=np.float64)
    xgrid = np.arange(ws, dtype=np.float64)
    labels = None
    for _ in range(params.slic_iterations):
        labels, _best = kernels.slic_assign(
            l, a, b, cl, ca, cb, cx, cy, half_window, spatial_weight
        )
        if (labels < 0).any():
            labels = _assign_unreached(labels, l, a, b, cl, ca, cb, cx, cy, spatial_weight)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(cl)).astype(np.float64)
        ok = counts > 0
        for arr, src in ((cl, l), (ca, a), (cb, b)):
            sums = np.bincount(flat, weights=src.ravel(), minlength=len(cl))
            arr[ok] = sums[ok] / counts[ok]
        xs_sum = np.bincount(flat, weights=np.broadcast_to(xgrid, (hs, ws)).ravel(), minlength=len(cl))
        ys_sum = np.bincount(flat, weights=np.broadcast_to(ygrid[:, None], (hs, ws)).ravel(), minlength=len(cl))
        cx[ok] = xs_sum[ok] / counts[ok]
        cy[ok] = ys_sum[ok] / counts[ok]

    labels, num = _relabel_contiguous(labels)
    labels = _absorb_orphans(labels, num)
    labels, num = _relabel_contiguous(labels)

    if params.downscale > 1:
        labels = np.repeat(np.repeat(labels, params.downscale, axis=0), params.downscale, axis=1)
        labels = labels[:h, :w]
    return SuperpixelLabeling(label_map=labels, num_regions=num)


def _assign_unreached(labels, l, a, b, cl, ca, cb, cx, cy, spatial_weight):
    """Fallback for pixels outside every center window: full scan over all
    centers with the same distance, first minimum wins."""
    labels = labels.copy()
    ys, xs = np.nonzero(labels < 0)
    for y, x in zip(ys, xs):
        dl = l[y, x] - cl
        da = a[y, x] - ca
        db = b[y, x] - cb
        dx = x - cx
        dy = y - cy
        d = ((dl * dl + da * da) + db * db) + spatial_weight * (dx * dx + dy * dy)
        labels[y, x] = int(np.argmin(d))
    return labels


def rag_edges(labeling: SuperpixelLabeling) -> np.ndarray:
    """Region adjacency edges: (a, b) with a < b iff some pixel of a is
    4-adjacent to a pixel of b. Sorted lexicographically."""
    adj = kernels.region_adjacency(labeling.label_map, labeling.num_regions)
    return np.argwhere(np.triu(adj, 1)).astype(np.int64)


def _region_coords(labels: np.ndarray, num_regions: int) -> list[tuple[np.ndarray, np.ndarray]]:
    ys, xs = np.nonzero(labels >= 0)
    ids = labels[ys, xs]
    order = np.argsort(ids, kind="stable")
    ys, xs, ids = ys[order], xs[order], ids[order]
    bounds = np.searchsorted(ids, np.arange(num_regions + 1))
    return [
        (ys[bounds[i] : bounds[i + 1]], xs[bounds[i] : bounds[i + 1]])
        for i in range(num_regions)
    ]


def _region_features(image: np.ndarray, coords, shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[coords[0], coords[1]] = True
    return superpixel_features(image, mask).values


def merge_superpixels(
    image: np.ndarray, labeling: SuperpixelLabeling, params: TgParams
) -> SuperpixelLabeling:
    """Greedy agglomerative merging of adjacent similar regions."""
    labels = labeling.label_map.copy()
    num = labeling.num_regions
    shape = labels.shape
    coords = _region_coords(labels, num)
    feats = np.stack([_region_features(image, c, shape) for c in coords])

    mu = feats.mean(axis=0)
    sd = feats.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)

    adj = kernels.region_adjacency(labels, num)
    alive = np.ones(num, dtype=bool)
    z = (feats - mu) / sd
    scale = 1.0 / np.sqrt(feats.shape[1])  # per-feature (RMS) units

    dist = np.full((num, num), np.inf)
    ii, jj = np.nonzero(np.triu(adj, 1))
    for a_, b_ in zip(ii, jj):
        dist[a_, b_] = np.linalg.norm(z[a_] - z[b_]) * scale

    count = num
    while count > params.min_final_regions:
        flat_idx = int(np.argmin(dist))
        a_, b_ = divmod(flat_idx, num)
        if dist[a_, b_] >= params.merge_threshold:
            break
        # merge b into a, recompute a's features exactly from pixels
        coords[a_] = (
            np.concatenate([coords[a_][0], coords[b_][0]]),
            np.concatenate([coords[a_][1], coords[b_][1]]),
        )
        labels[coords[b_][0], coords[b_][1]] = a_
        alive[b_] = False
        count -= 1
        adj[a_] |= adj[b_]
        adj[:, a_] |= adj[:, b_]
        adj[b_, :] = False
        adj[:, b_] = False
        adj[a_, a_] = False
        dist[b_, :] = np.inf
        dist[:, b_] = np.inf
        feats[a_] = _region_features(image, coords[a_], shape)
        z[a_] = (feats[a_] - mu) / sd
        neigh = np.nonzero(adj[a_] & alive)[0]
        dist[a_, :] = np.inf
        dist[:, a_] = np.inf
        for n_ in neigh:
            lo, hi = (a_, n_) if a_ < n_ else (n_, a_)
            dist[lo, hi] = np.linalg.norm(z[a_] - z[n_]) * scale

    merged, num_final = _relabel_contiguous(labels)
    return SuperpixelLabeling(label_map=merged, num_regions=num_final)


def rank_features_by_variance(feature_rows: np.ndarray, n_keep: int = SELECTED_FEATURE_COUNT) -> np.ndarray:
    """Indices of the n_keep highest-variance columns, returned in ascending
    column order; variance ties resolve to the lower index."""
    var = feature_rows.var(axis=0)
    order = np.lexsort((np.arange(len(var)), -var))
    return np.sort(order[:n_keep])


def region_feature_matrix(image: np.ndarray, labeling: SuperpixelLabeling) -> np.ndarray:
    """45-dim feature rows for every region of the labeling."""
    coords = _region_coords(labeling.label_map, labeling.num_regions)
    return np.stack([_region_features(image, c, labeling.label_map.shape) for c in coords])


def build_tissue_graph(
    image: np.ndarray,
    params: TgParams,
    feature_indices: np.ndarray | None = None,
) -> tuple[Graph, SuperpixelLabeling]:
    """Full tissue-graph pipeline; returns the graph and the final labeling
    so the hierarchy assembly can map cells into regions.

    feature_indices selects columns of the 45-dim region features (the CLI
    passes a dataset-level variance ranking so every graph shares one
    schema); by default the ranking is computed from this image alone, or
    all 45 are kept with tg_features="all".
    """
    labeling = merge_superpixels(image, slic(image, params), params)
    feats = region_feature_matrix(image, labeling)
    if params.tg_features == "all":
        idx = np.arange(feats.shape[1])
    elif feature_indices is not None:
        idx = np.asarray(feature_indices, dtype=np.int64)
    else:
        idx = rank_features_by_variance(feats)

    h, w = image.shape[:2]
    coords = _region_coords(labeling.label_map, labeling.num_regions)
    cent = np.array([(c[1].mean() / w, c[0].mean() / h) for c in coords])
    schema = tuple(REGION_SCHEMA[i] for i in idx) + TISSUE_CENTROID_SCHEMA
    graph = Graph(
        num_nodes=labeling.num_regions,
        edges=rag_edges(labeling),
        node_features=np.concatenate([feats[:, idx], cent], axis=1),
        feature_schema=schema,
    )
    return graph, labeling
