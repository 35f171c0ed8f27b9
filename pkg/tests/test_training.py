"""Split integrity, the weighted-F1 oracle, and training-loop behavior."""

import numpy as np
import pytest

from hactnet.graph import Graph, HactGraph
from hactnet.models import ModelConfig
from hactnet.training import (
    MetricsReport,
    TrainParams,
    aggregate_folds,
    confusion_matrix,
    format_report_table,
    split_by_slide,
    train,
    weighted_f1,
)


class Sample:
    def __init__(self, slide_id):
        self.slide_id = slide_id


def make_samples(slides, per_slide):
    return [Sample(f"s{i}") for i in range(slides) for _ in range(per_slide)]


def wf1_oracle(y_true, y_pred, num_classes):
    """Independent confusion-matrix recomputation."""
    total = len(y_true)
    score = 0.0
    for c in range(num_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        support = tp + fn
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        score += support / total * f1
    return score


# ------------------------------------------------------------- splits


def test_split_10_slides_fractions():
    samples = make_samples(10, 4)
    spec = split_by_slide(samples, fold_seed=0, fractions=(0.6, 0.2, 0.2))
    sizes = {p: 0 for p in ("train", "val", "test")}
    for part in spec.slide_partition.values():
        sizes[part] += 1
    assert sizes == {"train": 6, "val": 2, "test": 2}


def test_split_deterministic():
    samples = make_samples(12, 3)
    a = split_by_slide(samples, fold_seed=5)
    b = split_by_slide(samples, fold_seed=5)
    assert a.slide_partition == b.slide_partition
    c = split_by_slide(samples, fold_seed=6)
    assert any(a.slide_partition[s] != c.slide_partition[s] for s in a.slide_partition)


def test_split_no_slide_straddles_over_seeds():
    samples = make_samples(15, 3)
    for seed in range(100):
        spec = split_by_slide(samples, fold_seed=seed)
        idx = spec.indices(samples)
        assert sorted(i for part in idx.values() for i in part) == list(range(len(samples)))
        for part_name, part in idx.items():
            for i in part:
                assert spec.slide_partition[samples[i].slide_id] == part_name


def test_split_too_few_slides():
    with pytest.raises(ValueError, match="slides"):
        split_by_slide(make_samples(2, 5), fold_seed=0)


def test_split_every_partition_nonempty_tiny():
    spec = split_by_slide(make_samples(3, 2), fold_seed=1)
    assert set(spec.slide_partition.values()) == {"train", "val", "test"}


# --------------------------------------------------------- weighted F1


def test_weighted_f1_perfect():
    assert weighted_f1([0, 1, 2, 1], [0, 1, 2, 1], 3) == pytest.approx(1.0)


def test_weighted_f1_hand_case():
    got = weighted_f1([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert got == pytest.approx(11 / 15, abs=1e-12)


def test_weighted_f1_all_one_class():
    got = weighted_f1([0, 0, 1, 1], [1, 1, 1, 1], 2)
    assert got == pytest.approx(0.5 * (2 / 3), abs=1e-12)


def test_weighted_f1_empty_raises():
    with pytest.raises(ValueError):
        weighted_f1([], [], 3)


def test_weighted_f1_matches_oracle_random():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 40))
        c = int(rng.integers(2, 6))
        y_true = rng.integers(0, c, size=n)
        y_pred = rng.integers(0, c, size=n)
        got = weighted_f1(y_true, y_pred, c)
        assert abs(got - wf1_oracle(list(y_true), list(y_pred), c)) < 1e-12


def test_confusion_row_sums_are_supports():
    rng = np.random.default_rng(1)
    y_true = rng.integers(0, 4, size=50)
    y_pred = rng.integers(0, 4, size=50)
    cm = confusion_matrix(y_true, y_pred, 4)
    for c in range(4):
        assert cm[c].sum() == (y_true == c).sum()


# ------------------------------------------------------------ training


def toy_hact(rng, label, cell_dim=5, tissue_dim=3):
    """Tiny graphs whose features encode the label, so anything learns."""
    n_c = int(rng.integers(4, 9))
    n_t = int(rng.integers(2, 4))
    cf = rng.normal(size=(n_c, cell_dim)) * 0.1
    cf[:, label % cell_dim] += 3.0
    tf = rng.normal(size=(n_t, tissue_dim)) * 0.1
    tf[:, label % tissue_dim] += 3.0
    edges_c = [(i, i + 1) for i in range(n_c - 1)]
    edges_t = [(i, i + 1) for i in range(n_t - 1)]
    return HactGraph(
        cell_graph=Graph(n_c, edges_c, cf, tuple(f"c{i}" for i in range(cell_dim))),
        tissue_graph=Graph(n_t, edges_t, tf, tuple(f"t{i}" for i in range(tissue_dim))),
        assignment=rng.integers(0, n_t, size=n_c),
        slide_id=f"slide{int(rng.integers(0, 12))}",
        label=label,
    )


def toy_dataset(rng, n=60, classes=3):
    return [toy_hact(rng, int(rng.integers(0, classes))) for _ in range(n)]


def toy_config(variant="hact", classes=3):
    return ModelConfig(
        variant=variant, t_cg=2, t_tg=2, hidden=8, classifier_hidden=16,
        num_classes=classes, cell_dim=5, tissue_dim=3,
    )


def split_lists(graphs):
    spec = split_by_slide(graphs, fold_seed=0)
    parts = spec.select(graphs)
    return parts["train"], parts["val"], parts["test"]


def test_lr_zero_leaves_parameters_and_f1_constant():
    rng = np.random.default_rng(2)
    tr, va, te = split_lists(toy_dataset(rng))
    params = TrainParams(epochs=4, lr=0.0, weight_decay=0.0, patience=10)
    result = train(toy_config(), tr, va, te, params)
    f1s = {row["val_wf1"] for row in result.log}
    assert len(f1s) == 1
    from hactnet.models import Model

    fresh = Model(toy_config(), seed=0)
    fresh.stats = result.model.stats
    for (_, a), (_, b) in zip(result.model.named_parameters(), fresh.named_parameters()):
        assert a.data.tobytes() == b.data.tobytes()


def test_training_deterministic_rerun():
    rng = np.random.default_rng(3)
    data = toy_dataset(rng)
    tr, va, te = split_lists(data)
    params = TrainParams(epochs=5, patience=10)
    log_a = train(toy_config(), tr, va, te, params).log
    log_b = train(toy_config(), tr, va, te, params).log
    assert log_a == log_b


def test_training_learns_toy_problem():
    rng = np.random.default_rng(4)
    tr, va, te = split_lists(toy_dataset(rng, n=90))
    params = TrainParams(epochs=30, lr=1e-2, patience=30)
    result = train(toy_config(), tr, va, te, params)
    assert result.report.weighted_f1 >= 0.9


def test_selected_checkpoint_has_max_validation_f1():
    rng = np.random.default_rng(5)
    tr, va, te = split_lists(toy_dataset(rng, n=80))
    params = TrainParams(epochs=12, lr=5e-3, patience=30)
    result = train(toy_config(), tr, va, te, params)
    best = max(row["val_wf1"] for row in result.log)
    chosen = [row for row in result.log if row["epoch"] == result.report.selected_epoch]
    assert chosen[0]["val_wf1"] == best
    # ties resolve to the earliest epoch
    first_best = min(row["epoch"] for row in result.log if row["val_wf1"] == best)
    assert result.report.selected_epoch == first_best


def test_divergence_detected():
    rng = np.random.default_rng(6)
    tr, va, te = split_lists(toy_dataset(rng))
    # a step this size overflows the second layer to inf, and the
    # max-shifted log-sum-exp turns inf - inf into NaN
    params = TrainParams(epochs=3, lr=1e160, patience=5)
    from hactnet.training import TrainingDivergence

    with pytest.raises(TrainingDivergence, match="epoch"):
        with np.errstate(over="ignore", invalid="ignore"):
            train(toy_config(), tr, va, te, params)


def test_empty_split_rejected():
    rng = np.random.default_rng(7)
    data = toy_dataset(rng)
    with pytest.raises(ValueError):
        train(toy_config(), [], data, data, TrainParams(epochs=1))


# ----------------------------------------------------------- reporting


def fake_report(f1, fold, classes=3):
    per = [{"precision": f1, "recall": f1, "f1": f1, "support": 5} for _ in range(classes)]
    return MetricsReport(
        weighted_f1=f1, per_class=per, confusion=[[5] * classes] * classes,
        fold_id=fold, selected_epoch=1,
    )


def test_aggregate_single_fold_zero_std():
    agg = aggregate_folds({"hact": [fake_report(0.8, 0)]})
    assert agg["variants"]["hact"]["std"] == 0.0
    assert agg["variants"]["hact"]["mean"] == pytest.approx(0.8)


def test_aggregate_matches_hand_recomputation():
    scores = [0.62, 0.59, 0.69, 0.60]
    agg = aggregate_folds({"hact": [fake_report(s, i) for i, s in enumerate(scores)]})
    assert agg["variants"]["hact"]["mean"] == pytest.approx(np.mean(scores), abs=1e-12)
    assert agg["variants"]["hact"]["std"] == pytest.approx(np.std(scores), abs=1e-12)


def test_report_table_structure():
    agg = aggregate_folds(
        {
            "hact": [fake_report(0.9, 0), fake_report(0.8, 1)],
            "cg": [fake_report(0.7, 0), fake_report(0.6, 1)],
        }
    )
    table = format_report_table(agg)
    lines = table.splitlines()
    assert lines[0].split() == ["variant", "fold0", "fold1", "mean", "std"]
    assert len(lines) == 3
