"""Graph, hierarchy and batch containers shared by every other module.

All containers are immutable after construction (arrays are marked
read-only), so they are safe to share across threads. Edges of an
undirected graph are stored once as (min, max) pairs, sorted
lexicographically; adjacency is materialized on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1


class GraphFormatError(ValueError):
    """Raised when parsing a malformed or unsupported graph file."""


def _normalize_edges(edges, num_nodes: int) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise ValueError(f"edge array must be (E, 2), got {e.shape}")
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    e = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return e


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected graph with per-node feature rows.

    edges are deduplicated (min, max) pairs sorted lexicographically;
    node_features is (num_nodes, feature_dim) float64.
    """

    num_nodes: int
    edges: np.ndarray
    node_features: np.ndarray
    feature_schema: tuple[str, ...]

    def __init__(self, num_nodes, edges, node_features, feature_schema):
        object.__setattr__(self, "num_nodes", int(num_nodes))
        object.__setattr__(self, "edges", _frozen(_normalize_edges(edges, num_nodes)))
        nf = np.ascontiguousarray(np.asarray(node_features, dtype=np.float64))
        if nf.ndim == 1:
            nf = nf.reshape(num_nodes, -1) if num_nodes else nf.reshape(0, 0)
        object.__setattr__(self, "node_features", _frozen(nf))
        object.__setattr__(self, "feature_schema", tuple(feature_schema))

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix."""
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=np.int64)
        if len(self.edges):
            a[self.edges[:, 0], self.edges[:, 1]] = 1
            a[self.edges[:, 1], self.edges[:, 0]] = 1
        return a

    def directed_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge, as (src, dst) index arrays."""
        if not len(self.edges):
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        return src, dst


@dataclass(frozen=True)
class HactGraph:
    """Cell graph, tissue graph and the cell->tissue assignment as one unit.

    assignment[i] is the tissue-node index whose region contains cell i's
    centroid; every cell maps to exactly one tissue node by construction.
    """

    cell_graph: Graph
    tissue_graph: Graph
    assignment: np.ndarray
    slide_id: str
    label: int | None = None

    def __init__(self, cell_graph, tissue_graph, assignment, slide_id, label=None):
        object.__setattr__(self, "cell_graph", cell_graph)
        object.__setattr__(self, "tissue_graph", tissue_graph)
        a = np.asarray(assignment, dtype=np.int64)
        object.__setattr__(self, "assignment", _frozen(a))
        object.__setattr__(self, "slide_id", str(slide_id))
        object.__setattr__(self, "label", None if label is None else int(label))


@dataclass(frozen=True)
class GraphBatch:
    """Disjoint union of graphs plus the bookkeeping to undo the pooling.

    graph_offsets[i]:graph_offsets[i+1] is the node range of graph i in the
    merged graph; graph_ids maps each merged node to its owning graph.
    """

    merged: Graph
    graph_offsets: np.ndarray
    graph_ids: np.ndarray

    @property
    def num_graphs(self) -> int:
        return len(self.graph_offsets) - 1


def validate(g: Graph) -> list[str]:
    """Check Graph invariants; returns one message per violation.

    Violations are data, not errors: an empty list means the graph is
    well-formed.
    """
    out: list[str] = []
    if g.node_features.shape[0] != g.num_nodes:
        out.append(
            f"feature row count {g.node_features.shape[0]} != num_nodes {g.num_nodes}"
        )
    if len(g.feature_schema) != g.feature_dim:
        out.append(
            f"schema length {len(g.feature_schema)} != feature_dim {g.feature_dim}"
        )
    bad = ~np.isfinite(g.node_features)
    if bad.any():
        for k in np.flatnonzero(bad.any(axis=1)):
            out.append(f"non-finite feature, node {k}")
    e = g.edges
    if len(e):
        oob = (e < 0) | (e >= g.num_nodes)
        for i in np.flatnonzero(oob.any(axis=1)):
            out.append(f"edge ({e[i, 0]},{e[i, 1]}) references invalid node index")
        for i in np.flatnonzero(e[:, 0] == e[:, 1]):
            out.append(f"self-loop at node {e[i, 0]}")
        # duplicates cannot survive construction, but files can carry them
        uniq = np.unique(np.sort(e, axis=1), axis=0)
        if len(uniq) != len(e):
            out.append("duplicate unordered edge pairs")
    return out


def validate_hact(h: HactGraph) -> list[str]:
    """Graph invariants of both levels plus the assignment invariants."""
    out = [f"cell_graph: {v}" for v in validate(h.cell_graph)]
    out += [f"tissue_graph: {v}" for v in validate(h.tissue_graph)]
    if len(h.assignment) != h.cell_graph.num_nodes:
        out.append(
            f"assignment length {len(h.assignment)} != cell nodes"
            f" {h.cell_graph.num_nodes}"
        )
    if len(h.assignment):
        oob = (h.assignment < 0) | (h.assignment >= h.tissue_graph.num_nodes)
        for i in np.flatnonzero(oob):
            out.append(f"assignment[{i}]={h.assignment[i]} outside tissue graph")
    return out


def neighbors(g: Graph, v: int) -> list[int]:
    """Sorted neighbor indices of node v."""
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node index {v} out of range for {g.num_nodes} nodes")
    if not len(g.edges):
        return []
    out = np.concatenate(
        [g.edges[g.edges[:, 0] == v, 1], g.edges[g.edges[:, 1] == v, 0]]
    )
    return sorted(int(u) for u in out)


def disjoint_union(graphs: Sequence[Graph]) -> GraphBatch:
    """Merge graphs into one, offsetting edge indices per graph."""
    if not graphs:
        raise ValueError("cannot union zero graphs")
    schema = graphs[0].feature_schema
    for g in graphs[1:]:
        if g.feature_schema != schema:
            raise ValueError(
                f"feature schema mismatch: {g.feature_schema[:3]}... vs"
                f" {schema[:3]}..."
            )
    counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    edges = [g.edges + off for g, off in zip(graphs, offsets) if len(g.edges)]
    merged = Graph(
        num_nodes=int(offsets[-1]),
        edges=np.concatenate(edges) if edges else np.zeros((0, 2), np.int64),
        node_features=np.concatenate([g.node_features for g in graphs])
        if offsets[-1]
        else np.zeros((0, len(schema))),
        feature_schema=schema,
    )
    graph_ids = np.repeat(np.arange(len(graphs), dtype=np.int64), counts)
    return GraphBatch(merged=merged, graph_offsets=_frozen(offsets), graph_ids=_frozen(graph_ids))


def _graph_to_dict(g: Graph) -> dict:
    return {
        "num_nodes": g.num_nodes,
        "edges": [[int(a), int(b)] for a, b in g.edges],
        "feature_schema": list(g.feature_schema),
        "node_features": [[float(x) for x in row] for row in g.node_features],
    }


def _graph_from_dict(d: dict) -> Graph:
    try:
        return Graph(
            num_nodes=d["num_nodes"],
            edges=d["edges"],
            node_features=np.array(d["node_features"], dtype=np.float64).reshape(
                d["num_nodes"], len(d["feature_schema"])
            ),
            feature_schema=d["feature_schema"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"malformed graph section: {exc}") from exc


def serialize(h: HactGraph) -> bytes:
    """Versioned JSON encoding; round-trips bit-exactly through deserialize."""
    doc = {
        "version": FORMAT_VERSION,
        "slide_id": h.slide_id,
        "label": h.label,
        "cell_graph": _graph_to_dict(h.cell_graph),
        "tissue_graph": _graph_to_dict(h.tissue_graph),
        "assignment": [int(i) for i in h.assignment],
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def deserialize(data: bytes) -> HactGraph:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise GraphFormatError(f"not a valid graph file: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise GraphFormatError("missing version field")
    if doc["version"] != FORMAT_VERSION:
        raise GraphFormatError(f"unsupported format version {doc['version']}")
    try:
        return HactGraph(
            cell_graph=_graph_from_dict(doc["cell_graph"]),
            tissue_graph=_graph_from_dict(doc["tissue_graph"]),
            assignment=doc["assignment"],
            slide_id=doc["slide_id"],
            label=doc["label"],
        )
    except KeyError as exc:
        raise GraphFormatError(f"missing field: {exc}") from exc
