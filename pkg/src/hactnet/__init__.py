"""Hierarchical cell-to-tissue graph representations and GIN classifiers."""

from .assembly import assign_cells, build_hact
from .backend import active_backend
from .cell_graph import CgParams, build_cell_graph, knn_edges
from .graph import Graph, GraphBatch, HactGraph, deserialize, disjoint_union, serialize, validate
from .models import Model, ModelConfig, load_checkpoint, save_checkpoint
from .synth import SynthConfig, SynthSample, generate_dataset
from .tissue_graph import SuperpixelLabeling, TgParams, build_tissue_graph
from .training import TrainParams, split_by_slide, train, weighted_f1

__version__ = "0.1.0"

__all__ = [
    "CgParams",
    "Graph",
    "GraphBatch",
    "HactGraph",
    "Model",
    "ModelConfig",
    "SuperpixelLabeling",
    "SynthConfig",
    "SynthSample",
    "TgParams",
    "TrainParams",
    "active_backend",
    "assign_cells",
    "build_cell_graph",
    "build_hact",
    "build_tissue_graph",
    "deserialize",
    "disjoint_union",
    "generate_dataset",
    "knn_edges",
    "load_checkpoint",
    "save_checkpoint",
    "serialize",
    "split_by_slide",
    "train",
    "validate",
    "weighted_f1",
]
