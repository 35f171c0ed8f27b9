"""Command-line pipeline: synth -> build-graphs -> train -> eval -> report.

Every source of randomness flows from explicit --seed / --fold-seed flags.
A JSON --config file supplies defaults for the active subcommand; flags
given on the command line win. Exit codes: 0 success, 1 usage error,
2 data or validation error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from .assembly import assign_cells
from .cell_graph import CgParams, EmptyCellGraphError, build_cell_graph
from .features import detect_nuclei, masks_from_detections, read_nuclei_csv
from .graph import GraphFormatError, HactGraph, deserialize, serialize, validate_hact
from .models import ModelConfig, load_checkpoint, save_checkpoint
from .pipeline import select_tissue_columns
from .synth import SynthConfig, generate_sample
from .tissue_graph import (
    SELECTED_FEATURE_COUNT,
    TISSUE_CENTROID_SCHEMA,
    TgParams,
    build_tissue_graph,
    rank_features_by_variance,
)
from .training import (
    MetricsReport,
    TrainParams,
    TrainingDivergence,
    aggregate_folds,
    format_report_table,
    predict,
    split_by_slide,
    weighted_f1,
)

USAGE_ERROR, DATA_ERROR, DIVERGENCE_ERROR = 1, 2, 3


class DataError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here reserves 2 for
    # data errors, so remap to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    p = _Parser(prog="hactnet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[_config_parent()], help="generate a synthetic dataset")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--slides", type=int, default=40)
    sp.add_argument("--rois-per-slide", type=int, default=10)
    sp.add_argument("--num-classes", type=int, default=5)
    sp.add_argument("--noise-level", type=float, default=0.25)
    sp.add_argument("--size-min", type=int, default=128)
    sp.add_argument("--size-max", type=int, default=192)
    sp.add_argument("--motif-mode", choices=["default", "hard"], default="default")

    bp = sub.add_parser("build-graphs", parents=[_config_parent()], help="build .hact.json graphs")
    bp.add_argument("--in", dest="in_dir", required=True)
    bp.add_argument("--out", required=True)
    bp.add_argument("--knn-k", type=int, default=5)
    bp.add_argument("--d-min-px", type=float, default=50.0)
    bp.add_argument("--sp-target", type=int, default=200)
    bp.add_argument("--sp-compactness", type=float, default=10.0)
    bp.add_argument("--merge-threshold", type=float, default=0.5)
    bp.add_argument("--downscale", type=int, default=4)
    bp.add_argument("--tg-features", choices=["top24", "all"], default="top24")
    bp.add_argument("--jobs", type=int, default=1)
    bp.add_argument("--debug-labels", action="store_true", help="also write label maps as 16-bit PNGs")

    tp = sub.add_parser("train", parents=[_config_parent()], help="train one variant on one fold")
    tp.add_argument("--graphs", required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--variant", choices=["cg", "tg", "concat", "hact"], default="hact")
    tp.add_argument("--fold-seed", type=int, default=0)
    tp.add_argument("--epochs", type=int, default=100)
    tp.add_argument("--batch-size", type=int, default=16)
    tp.add_argument("--lr", type=float, default=1e-3)
    tp.add_argument("--weight-decay", type=float, default=5e-4)
    tp.add_argument("--patience", type=int, default=20)
    tp.add_argument("--seed", type=int, default=0)

    ep = sub.add_parser("eval", parents=[_config_parent()], help="evaluate a checkpoint")
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--graphs", required=True)
    ep.add_argument("--fold-seed", type=int, default=None,
                    help="evaluate the test partition of this fold (default: all graphs)")
    ep.add_argument("--out", default=None)

    rp = sub.add_parser("report", parents=[_config_parent()], help="aggregate run metrics")
    rp.add_argument("--runs", required=True)
    rp.add_argument("--out", default=None)
    return p, {"synth": sp, "build-graphs": bp, "train": tp, "eval": ep, "report": rp}


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=None, help="JSON file with flag defaults")
    return parent


def _apply_config(
    parser: _Parser, subparsers: dict[str, argparse.ArgumentParser], argv: list[str]
) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}")
        if not isinstance(overrides, dict):
            raise DataError(f"config {args.config} must hold a JSON object")
        known = vars(args)
        unknown = [k for k in overrides if k not in known]
        if unknown:
            raise DataError(f"config keys not recognized: {', '.join(sorted(unknown))}")
        # re-parse with config values as the subcommand's defaults so
        # explicitly given flags win
        subparsers[args.command].set_defaults(**overrides)
        args = parser.parse_args(argv)
    return args


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        num_slides=args.slides,
        rois_per_slide=args.rois_per_slide,
        image_size_range=(args.size_min, args.size_max),
        num_classes=args.num_classes,
        noise_level=args.noise_level,
        motif_mode=args.motif_mode,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"seed": cfg.seed, "num_classes": cfg.num_classes, "samples": []}
    for s in range(cfg.num_slides):
        for r in range(cfg.rois_per_slide):
            sample = generate_sample(cfg, s, r)
            Image.fromarray(sample.image).save(out / f"{sample.roi_id}.png")
            with open(out / f"{sample.roi_id}.nuclei.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "y", "radius", "intensity"])
                for row in sample.nuclei:
                    writer.writerow([repr(float(v)) for v in row])
            manifest["samples"].append(
                {
                    "roi_id": sample.roi_id,
                    "slide_id": sample.slide_id,
                    "label": sample.label,
                    "height": int(sample.image.shape[0]),
                    "width": int(sample.image.shape[1]),
                }
            )
    _dump_json(out / "manifest.json", manifest)
    print(f"wrote {len(manifest['samples'])} RoIs to {out}")
    return 0


def _list_inputs(in_dir: Path) -> list[dict]:
    manifest_path = in_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        entries = [
            {
                "roi_id": s["roi_id"],
                "slide_id": s["slide_id"],
                "label": s["label"],
                "image": in_dir / f"{s['roi_id']}.png",
            }
            for s in manifest["samples"]
        ]
    else:
        entries = [
            {"roi_id": p.stem, "slide_id": p.stem, "label": None, "image": p}
            for p in sorted(in_dir.glob("*.png"))
        ]
    for e in entries:
        csv_path = in_dir / f"{e['roi_id']}.nuclei.csv"
        e["nuclei_csv"] = csv_path if csv_path.exists() else None
    return entries


def _build_one(task: dict) -> tuple[str, bytes | None, str | None]:
    """Worker: build one RoI into a serialized graph with all 45 tissue
    features (column selection happens dataset-wide afterwards)."""
    entry, cg_kw, tg_kw = task["entry"], task["cg"], task["tg"]
    image = np.asarray(Image.open(entry["image"]).convert("RGB"))
    if entry["nuclei_csv"] is not None:
        masks = masks_from_detections(read_nuclei_csv(entry["nuclei_csv"]), image.shape[:2])
    else:
        masks = detect_nuclei(image)
    cg_params = CgParams(**cg_kw)
    tg_params = TgParams(**{**tg_kw, "tg_features": "all"})
    try:
        cg = build_cell_graph(image, masks, cg_params)
    except EmptyCellGraphError:
        return entry["roi_id"], None, "no nuclei found; RoI skipped"
    tg, labeling = build_tissue_graph(image, tg_params)
    centroids = np.array([m.centroid() for m in masks])
    hact = HactGraph(
        cell_graph=cg,
        tissue_graph=tg,
        assignment=assign_cells(centroids, labeling),
        slide_id=entry["slide_id"],
        label=entry["label"],
    )
    label_png = None
    if task.get("debug_labels"):
        arr = labeling.label_map.astype(np.uint16)
        Image.fromarray(arr, mode="I;16").save(task["out_dir"] / f"{entry['roi_id']}.labels.png")
    return entry["roi_id"], serialize(hact), label_png


def cmd_build_graphs(args) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out)
    entries = _list_inputs(in_dir) if in_dir.is_dir() else []
    if not entries:
        raise DataError(f"no inputs found in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        {
            "entry": e,
            "cg": {"k": args.knn_k, "d_min": args.d_min_px},
            "tg": {
                "target_superpixels": args.sp_target,
                "slic_compactness": args.sp_compactness,
                "merge_threshold": args.merge_threshold,
                "downscale": args.downscale,
            },
            "debug_labels": args.debug_labels,
            "out_dir": out_dir,
        }
        for e in entries
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_build_one, tasks))
    else:
        results = [_build_one(t) for t in tasks]

    built: list[tuple[str, HactGraph]] = []
    for roi_id, payload, note in results:
        if payload is None:
            print(f"warning: {roi_id}: {note}", file=sys.stderr)
            continue
        built.append((roi_id, deserialize(payload)))
    if not built:
        raise DataError("every RoI was skipped; nothing to write")

    if args.tg_features == "top24":
        ncols = built[0][1].tissue_graph.feature_dim - len(TISSUE_CENTROID_SCHEMA)
        rows = np.concatenate([h.tissue_graph.node_features[:, :ncols] for _, h in built])
        idx = rank_features_by_variance(rows, SELECTED_FEATURE_COUNT)
        built = [(roi_id, select_tissue_columns(h, idx)) for roi_id, h in built]

    for roi_id, hact in built:
        problems = validate_hact(hact)
        if problems:
            raise DataError(f"{roi_id}: invalid graph: {problems[0]}")
        (out_dir / f"{roi_id}.hact.json").write_bytes(serialize(hact))
    print(f"wrote {len(built)} graphs to {out_dir}")
    return 0


def _load_graphs(graphs_dir: Path) -> list[HactGraph]:
    paths = sorted(graphs_dir.glob("*.hact.json"))
    if not paths:
        raise DataError(f"no .hact.json files in {graphs_dir}")
    out = []
    for p in paths:
        try:
            out.append(deserialize(p.read_bytes()))
        except GraphFormatError as exc:
            raise DataError(f"{p.name}: {exc}")
    dims = {(h.cell_graph.feature_dim, h.tissue_graph.feature_dim) for h in out}
    if len(dims) > 1:
        raise DataError(f"inconsistent feature dimensions across graphs: {sorted(dims)}")
    return out


def cmd_train(args) -> int:
    from .training import train as run_train  # local import keeps startup light

    graphs = _load_graphs(Path(args.graphs))
    missing = [h.slide_id for h in graphs if h.label is None]
    if missing:
        raise DataError(f"{len(missing)} graphs lack labels; cannot train")
    labels = sorted({h.label for h in graphs})
    num_classes = max(labels) + 1
    split = split_by_slide(graphs, args.fold_seed)
    parts = split.select(graphs)
    config = ModelConfig(
        variant=args.variant,
        num_classes=num_classes,
        cell_dim=graphs[0].cell_graph.feature_dim,
        tissue_dim=graphs[0].tissue_graph.feature_dim,
    )
    params = TrainParams(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        patience=args.patience,
        shuffle_seed=args.seed,
    )
    result = run_train(
        config,
        parts["train"],
        parts["val"],
        parts["test"],
        params,
        fold_id=args.fold_seed,
        model_seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoint.json").write_bytes(
        save_checkpoint(result.model, extra={"fold_seed": args.fold_seed})
    )
    metrics = result.report.to_dict()
    metrics["variant"] = args.variant
    _dump_json(out / "metrics.json", metrics)
    with open(out / "train_log.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "val_wf1"])
        for row in result.log:
            writer.writerow([row["epoch"], repr(row["loss"]), repr(row["val_wf1"])])
    print(
        f"{args.variant} fold {args.fold_seed}: test weighted F1 = "
        f"{result.report.weighted_f1:.4f} (epoch {result.report.selected_epoch})"
    )
    return 0


def cmd_eval(args) -> int:
    model, extra = load_checkpoint(Path(args.checkpoint).read_bytes())
    graphs = _load_graphs(Path(args.graphs))
    if args.fold_seed is not None:
        graphs = split_by_slide(graphs, args.fold_seed).select(graphs)["test"]
        if not graphs:
            raise DataError("fold test partition is empty")
    if any(h.label is None for h in graphs):
        raise DataError("graphs lack labels; cannot evaluate")
    y_true = np.array([h.label for h in graphs])
    y_pred = predict(model, graphs)
    report = MetricsReport.from_predictions(
        y_true, y_pred, model.config.num_classes,
        fold_id=args.fold_seed if args.fold_seed is not None else -1,
    )
    doc = report.to_dict()
    doc["variant"] = model.config.variant
    if args.out:
        _dump_json(Path(args.out), doc)
    print(f"weighted F1 = {report.weighted_f1:.4f} on {len(graphs)} graphs")
    return 0


def cmd_report(args) -> int:
    runs = Path(args.runs)
    metric_files = sorted(runs.glob("**/metrics.json"))
    if not metric_files:
        raise DataError(f"no metrics.json files under {runs}")
    by_variant: dict[str, list[MetricsReport]] = {}
    for path in metric_files:
        doc = json.loads(path.read_text())
        report = MetricsReport(
            weighted_f1=doc["weighted_f1"],
            per_class=doc["per_class"],
            confusion=doc["confusion"],
            fold_id=doc["fold_id"],
            selected_epoch=doc["selected_epoch"],
        )
        by_variant.setdefault(doc.get("variant", "unknown"), []).append(report)
    agg = aggregate_folds(by_variant)
    table = format_report_table(agg)
    print(table)
    if args.out:
        _dump_json(Path(args.out), agg)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser, subparsers = _build_parser()
    try:
        args = _apply_config(parser, subparsers, sys.argv[1:] if argv is None else argv)
        handler = {
            "synth": cmd_synth,
            "build-graphs": cmd_build_graphs,
            "train": cmd_train,
            "eval": cmd_eval,
            "report": cmd_report,
        }[args.command]
        return handler(args)
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DIVERGENCE_ERROR
    except (DataError, GraphFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
