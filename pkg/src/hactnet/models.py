"""GIN message passing and the four graph classifiers.

Node update per layer: h(u) <- MLP(h(u) + sum of neighbor states), the
epsilon-free form, with a 2-layer MLP and ReLU after both linear layers.
Graph embeddings concatenate the sum-pooled node states of every layer
including the input (t = 0). Variants:

  cg      GIN stack on the cell graph only
  tg      GIN stack on the tissue graph only
  concat  both stacks, graph embeddings concatenated, one classifier
  hact    cell stack, cell-to-tissue transfer (tissue features concatenated
          with the summed final cell states per region), tissue stack,
          readout over the tissue states

The classifier is a 2-layer MLP (ReLU after the hidden layer only).
Weights init uniform in +-sqrt(6 / (fan_in + fan_out)) from a seeded
counter-based stream; biases start at zero. Node features are z-scored
with training-split statistics carried in the checkpoint.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat,
    matmul,
    parameter,
    relu,
    row_gather,
    segment_sum,
)
from .graph import Graph, GraphBatch, HactGraph, disjoint_union

VARIANTS = ("cg", "tg", "concat", "hact")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "hact"
    t_cg: int = 4
    t_tg: int = 4
    hidden: int = 32
    classifier_hidden: int = 64
    num_classes: int = 5
    cell_dim: int = 17
    tissue_dim: int = 26

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.t_cg < 1 or self.t_tg < 1:
            raise ValueError("need at least one GIN layer per stack")
        if min(self.hidden, self.classifier_hidden, self.num_classes, self.cell_dim, self.tissue_dim) < 1:
            raise ValueError("dimensions must be positive")


@dataclass
class FeatureStats:
    """Per-feature z-score statistics from the training split."""

    cg_mean: np.ndarray
    cg_std: np.ndarray
    tg_mean: np.ndarray
    tg_std: np.ndarray

    @classmethod
    def from_graphs(cls, graphs: list[HactGraph]) -> "FeatureStats":
        cg = np.concatenate([h.cell_graph.node_features for h in graphs])
        tg = np.concatenate([h.tissue_graph.node_features for h in graphs])

        def stats(m):
            mean = m.mean(axis=0)
            std = m.std(axis=0)
            return mean, np.where(std > 1e-12, std, 1.0)

        cg_mean, cg_std = stats(cg)
        tg_mean, tg_std = stats(tg)
        return cls(cg_mean, cg_std, tg_mean, tg_std)

    @classmethod
    def identity(cls, cell_dim: int, tissue_dim: int) -> "FeatureStats":
        return cls(
            np.zeros(cell_dim), np.ones(cell_dim), np.zeros(tissue_dim), np.ones(tissue_dim)
        )

    def to_dict(self) -> dict:
        return {
            "cg_mean": self.cg_mean.tolist(),
            "cg_std": self.cg_std.tolist(),
            "tg_mean": self.tg_mean.tolist(),
            "tg_std": self.tg_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(*(np.array(d[k], dtype=np.float64) for k in ("cg_mean", "cg_std", "tg_mean", "tg_std")))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Mlp2:
    """Two linear layers; ReLU after both when inner=True (GIN update MLP),
    after the first only when inner=False (classifier head)."""

    def __init__(self, rng, d_in, d_hidden, d_out, name, inner=True):
        self.w1 = parameter(_glorot(rng, d_in, d_hidden))
        self.b1 = parameter(np.zeros(d_hidden))
        self.w2 = parameter(_glorot(rng, d_hidden, d_out))
        self.b2 = parameter(np.zeros(d_out))
        self.name = name
        self.inner = inner

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(add(matmul(x, self.w1), self.b1))
        out = add(matmul(h, self.w2), self.b2)
        return relu(out) if self.inner else out

    def named(self) -> list[tuple[str, Tensor]]:
        return [
            (f"{self.name}.w1", self.w1),
            (f"{self.name}.b1", self.b1),
            (f"{self.name}.w2", self.w2),
            (f"{self.name}.b2", self.b2),
        ]


class GinLayer:
    """One epsilon-free GIN update with a 2-layer MLP."""

    def __init__(self, rng, d_in, hidden, name):
        self.mlp = Mlp2(rng, d_in, hidden, hidden, name, inner=True)

    def __call__(self, states: Tensor, src: np.ndarray, dst: np.ndarray, num_nodes: int) -> Tensor:
        if num_nodes != states.shape[0]:
            raise ValueError(f"state rows {states.shape[0]} != num_nodes {num_nodes}")
        if len(src):
            gathered = row_gather(states, src)
            agg = segment_sum(gathered, dst, num_nodes)
            return self.mlp(add(states, agg))
        return self.mlp(states)


def gin_forward(layer: GinLayer, node_states: Tensor, graph: Graph) -> Tensor:
    """Apply one GIN layer on a standalone graph."""
    if node_states.shape[1] != layer.mlp.w1.shape[0]:
        raise ValueError(
            f"state dim {node_states.shape[1]} != layer input dim {layer.mlp.w1.shape[0]}"
        )
    src, dst = graph.directed_pairs()
    return layer(node_states, src, dst, graph.num_nodes)


def cell_to_tissue_transfer(cell_states: Tensor, assignment: np.ndarray, f_tg: Tensor) -> Tensor:
    """Initial tissue states: region features concatenated with the sum of
    the final cell states mapped into each region (zero for empty regions)."""
    pooled = segment_sum(cell_states, assignment, f_tg.shape[0])
    return concat([f_tg, pooled], axis=1)


def readout(layer_states: list[Tensor], graph_ids: np.ndarray, num_graphs: int) -> Tensor:
    """Per-graph concatenation of sum-pooled node states across all layers
    (t = 0 included)."""
    pooled = [segment_sum(s, graph_ids, num_graphs) for s in layer_states]
    return concat(pooled, axis=1)


class Model:
    """Parameter container plus the variant forward pass."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.stats = FeatureStats.identity(config.cell_dim, config.tissue_dim)
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, 0x6D6F64656C], dtype=np.uint64))
        )
        c = config
        self.cg_layers: list[GinLayer] = []
        self.tg_layers: list[GinLayer] = []
        if c.variant in ("cg", "concat", "hact"):
            dims = [c.cell_dim] + [c.hidden] * c.t_cg
            self.cg_layers = [
                GinLayer(rng, dims[i], c.hidden, f"cg_gin{i}") for i in range(c.t_cg)
            ]
        if c.variant in ("tg", "concat", "hact"):
            t_in = c.tissue_dim + (c.hidden if c.variant == "hact" else 0)
            dims = [t_in] + [c.hidden] * c.t_tg
            self.tg_layers = [
                GinLayer(rng, dims[i], c.hidden, f"tg_gin{i}") for i in range(c.t_tg)
            ]
        self.classifier = Mlp2(
            rng, self._embedding_dim(), c.classifier_hidden, c.num_classes, "classifier", inner=False
        )

    def _embedding_dim(self) -> int:
        c = self.config
        cg_dim = c.cell_dim + c.t_cg * c.hidden
        tg_dim = c.tissue_dim + c.t_tg * c.hidden
        hact_dim = (c.tissue_dim + c.hidden) + c.t_tg * c.hidden
        return {
            "cg": cg_dim,
            "tg": tg_dim,
            "concat": cg_dim + tg_dim,
            "hact": hact_dim,
        }[c.variant]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for layer in self.cg_layers + self.tg_layers:
            out.extend(layer.mlp.named())
        out.extend(self.classifier.named())
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def _batch(self, hacts: list[HactGraph]) -> tuple[GraphBatch, GraphBatch, np.ndarray]:
        cg = disjoint_union([h.cell_graph for h in hacts])
        tg = disjoint_union([h.tissue_graph for h in hacts])
        assignment = np.concatenate(
            [h.assignment + off for h, off in zip(hacts, tg.graph_offsets[:-1])]
        ) if cg.merged.num_nodes else np.zeros(0, dtype=np.int64)
        return cg, tg, assignment

    def _stack(self, layers, x: Tensor, batch: GraphBatch) -> list[Tensor]:
        src, dst = batch.merged.directed_pairs()
        states = [x]
        for layer in layers:
            states.append(layer(states[-1], src, dst, batch.merged.num_nodes))
        return states

    def forward(self, hacts: list[HactGraph]) -> Tensor:
        """Logits (len(hacts), num_classes)."""
        if not hacts:
            raise ValueError("empty batch")
        c = self.config
        for h in hacts:
            if h.cell_graph.feature_dim != c.cell_dim:
                raise ValueError(
                    f"cell feature dim {h.cell_graph.feature_dim} != configured {c.cell_dim}"
                )
            if h.tissue_graph.feature_dim != c.tissue_dim:
                raise ValueError(
                    f"tissue feature dim {h.tissue_graph.feature_dim} != configured {c.tissue_dim}"
                )
            if c.variant != "cg" and h.tissue_graph.num_nodes == 0:
                raise ValueError(f"variant {c.variant} needs a non-empty tissue graph")
            if c.variant != "tg" and h.cell_graph.num_nodes == 0:
                raise ValueError(f"variant {c.variant} needs a non-empty cell graph")
        cg, tg, assignment = self._batch(hacts)
        n = len(hacts)
        x_cg = Tensor((cg.merged.node_features - self.stats.cg_mean) / self.stats.cg_std)
        x_tg = Tensor((tg.merged.node_features - self.stats.tg_mean) / self.stats.tg_std)

        if c.variant == "cg":
            emb = readout(self._stack(self.cg_layers, x_cg, cg), cg.graph_ids, n)
        elif c.variant == "tg":
            emb = readout(self._stack(self.tg_layers, x_tg, tg), tg.graph_ids, n)
        elif c.variant == "concat":
            e1 = readout(self._stack(self.cg_layers, x_cg, cg), cg.graph_ids, n)
            e2 = readout(self._stack(self.tg_layers, x_tg, tg), tg.graph_ids, n)
            emb = concat([e1, e2], axis=1)
        else:  # hact
            cell_states = self._stack(self.cg_layers, x_cg, cg)[-1]
            h0 = cell_to_tissue_transfer(cell_states, assignment, x_tg)
            emb = readout(self._stack(self.tg_layers, h0, tg), tg.graph_ids, n)
        return self.classifier(emb)


def model_forward(model: Model, hacts: list[HactGraph]) -> Tensor:
    return model.forward(hacts)


def save_checkpoint(model: Model, extra: dict | None = None) -> bytes:
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": {
            **asdict(model.config),
            "feature_stats": model.stats.to_dict(),
            **(extra or {}),
        },
        "params": [
            {"name": name, "shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in model.named_parameters()
        ],
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def load_checkpoint(data: bytes) -> tuple[Model, dict]:
    doc = json.loads(data.decode("utf-8"))
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    cfg_dict = dict(doc["config"])
    stats = FeatureStats.from_dict(cfg_dict.pop("feature_stats"))
    extra = {k: cfg_dict.pop(k) for k in list(cfg_dict) if k not in ModelConfig.__dataclass_fields__}
    config = ModelConfig(**cfg_dict)
    model = Model(config)
    model.stats = stats
    by_name = dict(model.named_parameters())
    if set(by_name) != {p["name"] for p in doc["params"]}:
        raise ValueError("checkpoint parameters do not match the model architecture")
    for p in doc["params"]:
        t = by_name[p["name"]]
        arr = np.array(p["data"], dtype=np.float64).reshape(p["shape"])
        if arr.shape != t.data.shape:
            raise ValueError(f"shape mismatch for {p['name']}")
        t.data = arr
    return model, extra
