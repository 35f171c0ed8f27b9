"""Dataset-scale graph building shared by the CLI and the test harness.

Tissue features are selected dataset-wide: every RoI is first built with
all 45 region features, the columns are ranked by variance over all
regions of the dataset, and the top 24 are kept so every graph shares one
schema. Workers rebuild their RoI from (config, slide, roi) indices, which
are pure, so parallel builds reproduce the sequential output exactly.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .assembly import assign_cells
from .cell_graph import CgParams, build_cell_graph
from .features import masks_from_detections
from .graph import Graph, HactGraph, deserialize, serialize
from .synth import SynthConfig, SynthSample, generate_sample
from .tissue_graph import (
    SELECTED_FEATURE_COUNT,
    TISSUE_CENTROID_SCHEMA,
    TgParams,
    build_tissue_graph,
    rank_features_by_variance,
)


def build_sample_graph(sample: SynthSample, cg_params: CgParams, tg_params: TgParams) -> HactGraph:
    """One RoI from generator output, using the ground-truth nuclei."""
    masks = masks_from_detections(sample.nuclei, sample.image.shape[:2])
    cg = build_cell_graph(sample.image, masks, cg_params)
    tg, labeling = build_tissue_graph(sample.image, tg_params)
    centroids = np.array([m.centroid() for m in masks])
    return HactGraph(
        cell_graph=cg,
        tissue_graph=tg,
        assignment=assign_cells(centroids, labeling),
        slide_id=sample.slide_id,
        label=sample.label,
    )


def select_tissue_columns(hact: HactGraph, idx: np.ndarray) -> HactGraph:
    """Keep tissue feature columns idx (plus the trailing centroids)."""
    tg = hact.tissue_graph
    ncols = tg.feature_dim - len(TISSUE_CENTROID_SCHEMA)
    keep = np.concatenate([np.asarray(idx, dtype=np.int64), np.arange(ncols, tg.feature_dim)])
    sliced = Graph(
        num_nodes=tg.num_nodes,
        edges=tg.edges,
        node_features=tg.node_features[:, keep],
        feature_schema=tuple(tg.feature_schema[i] for i in keep),
    )
    return HactGraph(
        cell_graph=hact.cell_graph,
        tissue_graph=sliced,
        assignment=hact.assignment,
        slide_id=hact.slide_id,
        label=hact.label,
    )


def apply_dataset_selection(graphs: list[HactGraph], n_keep: int = SELECTED_FEATURE_COUNT) -> list[HactGraph]:
    """Dataset-level variance ranking over all-45-feature graphs."""
    ncols = graphs[0].tissue_graph.feature_dim - len(TISSUE_CENTROID_SCHEMA)
    rows = np.concatenate([h.tissue_graph.node_features[:, :ncols] for h in graphs])
    idx = rank_features_by_variance(rows, n_keep)
    return [select_tissue_columns(h, idx) for h in graphs]


def _build_one_synthetic(task) -> bytes:
    cfg, slide, roi, cg_params, tg_params = task
    sample = generate_sample(cfg, slide, roi)
    return serialize(build_sample_graph(sample, cg_params, tg_params))


def build_synthetic_graphs(
    cfg: SynthConfig,
    cg_params: CgParams = CgParams(),
    tg_params: TgParams = TgParams(),
    jobs: int = 1,
) -> list[HactGraph]:
    """All graphs of the synthetic dataset, with dataset-level tissue
    feature selection unless tg_params.tg_features == "all"."""
    all_params = TgParams(
        target_superpixels=tg_params.target_superpixels,
        slic_compactness=tg_params.slic_compactness,
        slic_iterations=tg_params.slic_iterations,
        downscale=tg_params.downscale,
        merge_threshold=tg_params.merge_threshold,
        min_final_regions=tg_params.min_final_regions,
        tg_features="all",
    )
    tasks = [
        (cfg, s, r, cg_params, all_params)
        for s in range(cfg.num_slides)
        for r in range(cfg.rois_per_slide)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            payloads = list(pool.map(_build_one_synthetic, tasks, chunksize=8))
    else:
        payloads = [_build_one_synthetic(t) for t in tasks]
    graphs = [deserialize(p) for p in payloads]
    if tg_params.tg_features == "all":
        return graphs
    return apply_dataset_selection(graphs)
