"""Slide-level splitting, the training loop with validation-based model
selection, and weighted-F1 reporting.

Splits are made at the slide level: slides are shuffled by a seeded
counter-based stream, then assigned to train/val/test in order until each
partition reaches its sample-count target, so no slide ever straddles two
partitions. Model selection keeps the checkpoint with the best validation
weighted F1 (ties keep the earlier epoch); the reported metrics always
come from that checkpoint evaluated on the test split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, adam_step, backward, softmax_cross_entropy, zero_grads
from .graph import HactGraph
from .models import FeatureStats, Model, ModelConfig

# sample-count shape of the published fold tables (~67.5/17/15.5)
DEFAULT_FRACTIONS = (0.675, 0.17, 0.155)
PARTITIONS = ("train", "val", "test")


class TrainingDivergence(RuntimeError):
    """Raised when the loss goes non-finite; names the epoch and batch."""


@dataclass(frozen=True)
class SplitSpec:
    fold_seed: int
    fractions: tuple[float, float, float]
    slide_partition: dict[str, str]  # slide_id -> train | val | test

    def indices(self, samples) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {p: [] for p in PARTITIONS}
        for i, s in enumerate(samples):
            out[self.slide_partition[s.slide_id]].append(i)
        return out

    def select(self, samples) -> dict[str, list]:
        idx = self.indices(samples)
        return {p: [samples[i] for i in idx[p]] for p in PARTITIONS}


def split_by_slide(samples, fold_seed: int, fractions=DEFAULT_FRACTIONS) -> SplitSpec:
    """Partition slides so per-partition sample counts approximate the
    fractions; deterministic per fold_seed."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    slide_counts: dict[str, int] = {}
    for s in samples:
        slide_counts[s.slide_id] = slide_counts.get(s.slide_id, 0) + 1
    slides = list(slide_counts)
    if len(slides) < len(PARTITIONS):
        raise ValueError(f"need at least {len(PARTITIONS)} slides, got {len(slides)}")
    rng = np.random.Generator(
        np.random.Philox(key=np.array([fold_seed & 0xFFFFFFFFFFFFFFFF, 0x73706C6974], dtype=np.uint64))
    )
    order = rng.permutation(len(slides))
    total = sum(slide_counts.values())
    targets = [fractions[0] * total, (fractions[0] + fractions[1]) * total]

    partition: dict[str, str] = {}
    filled = 0
    part = 0
    for j, pos in enumerate(order):
        slide = slides[int(pos)]
        remaining = len(slides) - j  # this slide plus the ones after it
        # advance when the target is met, or when the later partitions
        # would otherwise be left without a slide each
        while part < 2 and (filled >= targets[part] or remaining <= 2 - part):
            part += 1
        partition[slide] = PARTITIONS[part]
        filled += slide_counts[slide]
    if set(partition.values()) != set(PARTITIONS):
        raise ValueError("a partition received no slides; adjust fractions or add slides")
    return SplitSpec(fold_seed=fold_seed, fractions=tuple(fractions), slide_partition=partition)


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    yt = np.asarray(y_true, dtype=np.int64)
    yp = np.asarray(y_pred, dtype=np.int64)
    if yt.shape != yp.shape or yt.ndim != 1:
        raise ValueError("y_true and y_pred must be equal-length 1-D")
    if len(yt) == 0:
        raise ValueError("empty input")
    if yt.min() < 0 or yt.max() >= num_classes or yp.min() < 0 or yp.max() >= num_classes:
        raise ValueError(f"labels outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (yt, yp), 1)
    return cm


def per_class_metrics(cm: np.ndarray) -> list[dict]:
    out = []
    for c in range(cm.shape[0]):
        tp = float(cm[c, c])
        fp = float(cm[:, c].sum() - cm[c, c])
        fn = float(cm[c, :].sum() - cm[c, c])
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        out.append(
            {
                "precision": precision,
                "recall": recall,
                "f1": f1,
                "support": int(cm[c, :].sum()),
            }
        )
    return out


def weighted_f1(y_true, y_pred, num_classes: int) -> float:
    """Support-weighted mean of per-class F1; a class with zero precision
    and recall contributes F1 = 0."""
    cm = confusion_matrix(y_true, y_pred, num_classes)
    per = per_class_metrics(cm)
    n = cm.sum()
    return float(sum(p["support"] / n * p["f1"] for p in per))


@dataclass
class MetricsReport:
    weighted_f1: float
    per_class: list[dict]
    confusion: list[list[int]]
    fold_id: int
    selected_epoch: int

    def to_dict(self) -> dict:
        return {
            "weighted_f1": self.weighted_f1,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "fold_id": self.fold_id,
            "selected_epoch": self.selected_epoch,
        }

    @classmethod
    def from_predictions(cls, y_true, y_pred, num_classes, fold_id=0, selected_epoch=0):
        cm = confusion_matrix(y_true, y_pred, num_classes)
        return cls(
            weighted_f1=weighted_f1(y_true, y_pred, num_classes),
            per_class=per_class_metrics(cm),
            confusion=cm.tolist(),
            fold_id=fold_id,
            selected_epoch=selected_epoch,
        )


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 5e-4
    patience: int = 20
    shuffle_seed: int = 0


@dataclass
class TrainResult:
    model: Model
    report: MetricsReport
    log: list[dict] = field(default_factory=list)  # epoch, loss, val_wf1


def predict(model: Model, graphs: list[HactGraph], batch_size: int = 16) -> np.ndarray:
    preds = []
    for i in range(0, len(graphs), batch_size):
        logits = model.forward(graphs[i : i + batch_size]).data
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def _snapshot(model: Model) -> list[np.ndarray]:
    return [p.data.copy() for p in model.parameters()]


def _restore(model: Model, snap: list[np.ndarray]) -> None:
    for p, d in zip(model.parameters(), snap):
        p.data = d.copy()


def train(
    config: ModelConfig,
    train_graphs: list[HactGraph],
    val_graphs: list[HactGraph],
    test_graphs: list[HactGraph],
    params: TrainParams = TrainParams(),
    fold_id: int = 0,
    model_seed: int = 0,
) -> TrainResult:
    if not train_graphs or not val_graphs:
        raise ValueError("train and val splits must be non-empty")
    model = Model(config, seed=model_seed)
    model.stats = FeatureStats.from_graphs(train_graphs)
    tensors = model.parameters()
    state = AdamState.for_params(tensors, lr=params.lr, weight_decay=params.weight_decay)

    labels = np.array([g.label for g in train_graphs], dtype=np.int64)
    if (labels < 0).any() or labels.max() >= config.num_classes:
        raise ValueError("training graphs carry labels outside the configured classes")

    best_f1 = -1.0
    best_epoch = -1
    best_snap = _snapshot(model)
    log: list[dict] = []
    for epoch in range(params.epochs):
        rng = np.random.Generator(
            np.random.Philox(
                key=np.array(
                    [params.shuffle_seed & 0xFFFFFFFFFFFFFFFF, (1 << 40) + epoch],
                    dtype=np.uint64,
                )
            )
        )
        order = rng.permutation(len(train_graphs))
        losses = []
        for bi, start in enumerate(range(0, len(order), params.batch_size)):
            idx = order[start : start + params.batch_size]
            batch = [train_graphs[int(i)] for i in idx]
            zero_grads(tensors)
            loss = softmax_cross_entropy(model.forward(batch), labels[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDivergence(
                    f"non-finite loss at epoch {epoch}, batch {bi}"
                )
            backward(loss)
            adam_step(tensors, [p.grad for p in tensors], state)
            losses.append(value)
        val_pred = predict(model, val_graphs, params.batch_size)
        val_true = np.array([g.label for g in val_graphs], dtype=np.int64)
        val_f1 = weighted_f1(val_true, val_pred, config.num_classes)
        log.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_wf1": val_f1})
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_epoch = epoch
            best_snap = _snapshot(model)
        elif epoch - best_epoch >= params.patience:
            break

    _restore(model, best_snap)
    if test_graphs:
        test_pred = predict(model, test_graphs, params.batch_size)
        test_true = np.array([g.label for g in test_graphs], dtype=np.int64)
        report = MetricsReport.from_predictions(
            test_true, test_pred, config.num_classes, fold_id=fold_id, selected_epoch=best_epoch
        )
    else:
        report = MetricsReport(
            weighted_f1=best_f1,
            per_class=[],
            confusion=[],
            fold_id=fold_id,
            selected_epoch=best_epoch,
        )
    return TrainResult(model=model, report=report, log=log)


def aggregate_folds(results: dict[str, list[MetricsReport]]) -> dict:
    """Mean and std of fold-wise weighted F1 per variant, plus per-class
    aggregates; the report JSON mirrors a variants x folds table."""
    out: dict = {"variants": {}}
    for variant, reports in results.items():
        fold_f1 = [r.weighted_f1 for r in reports]
        num_classes = len(reports[0].per_class) if reports[0].per_class else 0
        per_class = {}
        for c in range(num_classes):
            vals = [r.per_class[c]["f1"] for r in reports]
            per_class[str(c)] = {
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals)),
            }
        out["variants"][variant] = {
            "folds": {str(r.fold_id): r.weighted_f1 for r in reports},
            "mean": float(np.mean(fold_f1)),
            "std": float(np.std(fold_f1)),
            "per_class": per_class,
        }
    return out


def format_report_table(agg: dict) -> str:
    """Plain-text table of the aggregate: one row per variant."""
    lines = []
    variants = agg["variants"]
    fold_ids = sorted({f for v in variants.values() for f in v["folds"]}, key=int)
    header = ["variant"] + [f"fold{f}" for f in fold_ids] + ["mean", "std"]
    rows = [header]
    for name, v in variants.items():
        row = [name]
        for f in fold_ids:
            val = v["folds"].get(f)
            row.append(f"{val:.4f}" if val is not None else "-")
        row += [f"{v['mean']:.4f}", f"{v['std']:.4f}"]
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))
    return "\n".join(lines)
