"""Hierarchy assembly: map each cell to the tissue region containing its
centroid, and compose the full cell-graph / tissue-graph / assignment unit.
"""

from __future__ import annotations

import warnings

import numpy as np

from .cell_graph import CgParams, build_cell_graph
from .features import EntityMask
from .graph import HactGraph
from .tissue_graph import SuperpixelLabeling, TgParams, build_tissue_graph


def assign_cells(
    cell_centroids: np.ndarray,
    labeling: SuperpixelLabeling,
    region_to_node: np.ndarray | None = None,
) -> np.ndarray:
    """Tissue-node index per cell, decided by the centroid's pixel alone.

    Because the labeling partitions the image, every cell lands in exactly
    one region. Out-of-bounds centroids are clamped to the nearest
    in-bounds pixel with a warning.
    """
    pts = np.asarray(cell_centroids, dtype=np.float64).reshape(-1, 2)
    h, w = labeling.label_map.shape
    xs = np.rint(pts[:, 0]).astype(np.int64)
    ys = np.rint(pts[:, 1]).astype(np.int64)
    oob = (xs < 0) | (xs >= w) | (ys < 0) | (ys >= h)
    if oob.any():
        warnings.warn(f"{int(oob.sum())} centroid(s) outside image; clamped")
        xs = np.clip(xs, 0, w - 1)
        ys = np.clip(ys, 0, h - 1)
    regions = labeling.label_map[ys, xs]
    if region_to_node is None:
        return regions
    return np.asarray(region_to_node, dtype=np.int64)[regions]


def build_hact(
    image: np.ndarray,
    nuclei: list[EntityMask],
    cg_params: CgParams,
    tg_params: TgParams,
    slide_id: str = "",
    label: int | None = None,
    tg_feature_indices: np.ndarray | None = None,
) -> HactGraph:
    """Compose the cell-graph and tissue-graph builders with the centroid
    assignment. Raises EmptyCellGraphError for an RoI with no nuclei."""
    cg = build_cell_graph(image, nuclei, cg_params)
    tg, labeling = build_tissue_graph(image, tg_params, tg_feature_indices)
    centroids = np.array([m.centroid() for m in nuclei])
    assignment = assign_cells(centroids, labeling)
    return HactGraph(
        cell_graph=cg,
        tissue_graph=tg,
        assignment=assignment,
        slide_id=slide_id,
        label=label,
    )
