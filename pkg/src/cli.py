"""Command-line surface: synth, train, predict, softnms and eval subcommands."""

import argparse
import logging
import shutil
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
import torch
from tqdm import tqdm

from src.checkpoints import load_members, save_checkpoint
from src.dataset_loader import DatasetLayout, dump_layout, format_yolo_boxes, load_dataset, load_images, load_layout, split_dataset
from src.detection_io import list_box_files, read_detection_file, read_ground_truth_file, write_detection_file
from src.ensemble import predict_batch
from src.evaluator import ImageRecord, classification_metrics, detection_metrics
from src.frames import BoundingBox, ClassLabel, Detection, ImageFrame
from src.image_io import write_mask, write_rgb
from src.mask_boxes import mask_detections
from src.metrics_logger import MetricsLogger, read_label_table
from src.report_generator import MetricsReport, ReportGenerator
from src.run_config import RunConfig, dump_run_config, load_run_config
from src.seeding import DEFAULT_SEED, configure_determinism, set_seed
from src.segmentation import as_predicted_mask, explain, overlay
from src.soft_nms import SuppressionConfig, soft_nms
from src.synthetic import generate_synthetic_set
from src.trainer import evaluate_split, train
from src.utils.workers import ordered_map

logger = logging.getLogger(__name__)

PREDICT_BATCH = 16


class UsageError(Exception):
    """Bad command-line arguments (exit code 2)."""


def _ensure_empty(directory: Path, force: bool) -> None:
    if directory.exists() and any(directory.iterdir()) and not force:
        raise ValueError(f"Output directory {directory} is not empty (use --force to overwrite)")
    directory.mkdir(parents=True, exist_ok=True)


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {"seed": args.seed, "deterministic": args.deterministic}
    if args.config:
        return load_run_config(args.config, overrides)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


# synth

def _clear_dataset(root: Path, layout: DatasetLayout) -> None:
    """Remove a previous synthetic dataset: layout subtrees, labels.csv and layout.yaml."""
    for sub in layout.model_dump().values():
        shutil.rmtree(root / sub, ignore_errors=True)
    for name in ("labels.csv", "layout.yaml"):
        (root / name).unlink(missing_ok=True)


def cmd_synth(args: argparse.Namespace) -> int:
    if args.count < 2:
        raise UsageError(f"--count must be at least 2, got {args.count}")
    seed = DEFAULT_SEED if args.seed is None else args.seed
    out = Path(args.out)
    _ensure_empty(out, args.force)

    layout = DatasetLayout()
    if args.force:
        _clear_dataset(out, layout)
    frames = generate_synthetic_set(args.count, seed, size=args.size)
    rows = []
    for frame in tqdm(frames, desc="Writing frames", unit="frame", file=sys.stderr):
        if frame.label is ClassLabel.BLEEDING:
            write_rgb(frame.image.pixels, out / layout.images_bleeding / f"{frame.id}.png")
            write_mask(frame.mask.values, out / layout.masks_bleeding / f"{frame.id}.png")
            box_path = out / layout.boxes_bleeding / f"{frame.id}.txt"
            box_path.parent.mkdir(parents=True, exist_ok=True)
            text = format_yolo_boxes([(0, b) for b in frame.gt_boxes], frame.image.width, frame.image.height)
            with open(box_path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        else:
            write_rgb(frame.image.pixels, out / layout.images_nonbleeding / f"{frame.id}.png")
        rows.append({"id": frame.id, "label": frame.label.tag})
    dump_layout(layout, out / "layout.yaml")
    pd.DataFrame(rows, columns=["id", "label"]).to_csv(out / "labels.csv", index=False)
    logger.info(f"Wrote {len(frames)} synthetic frames to {out} (seed {seed})")
    return 0


# train

def _dataset_layout(config: RunConfig) -> DatasetLayout:
    if config.layout_path is not None:
        return load_layout(config.layout_path)
    candidate = config.dataset_root / "layout.yaml"
    return load_layout(candidate) if candidate.is_file() else DatasetLayout()


def cmd_train(args: argparse.Namespace) -> int:
    if not args.config:
        raise UsageError("train requires --config")
    config = _run_config(args)
    _configure_logging(config.logging_level)
    config.validate_paths()
    out = config.output_dir
    ckpt_dir = out / "checkpoints"
    if ckpt_dir.exists() and any(ckpt_dir.iterdir()) and not args.force:
        raise ValueError(f"Checkpoints already exist in {ckpt_dir} (use --force to overwrite)")

    train_config = config.train_config()
    frames = load_dataset(config.dataset_root, _dataset_layout(config), train_config.stage_count)
    split = split_dataset(frames, config.val_fraction, config.seed)
    result = train(split, train_config)

    for index, state in enumerate(result.checkpoints):
        save_checkpoint(state, ckpt_dir / f"member_{index}.ckpt")
    MetricsLogger(out).log_epochs(result.log)
    dump_run_config(config, out / "resolved_config.yaml")
    split_rows = [{"id": f.id, "subset": "train"} for f in split.train]
    split_rows += [{"id": f.id, "subset": "val"} for f in split.val]
    pd.DataFrame(split_rows, columns=["id", "subset"]).to_csv(out / "split.csv", index=False)

    if split.val:
        val = evaluate_split(result.members, split.val, batch_size=config.batch_size, with_dice=False)
        scores = classification_metrics(val.labels, [f.label for f in split.val])
        ReportGenerator(out).write(MetricsReport.build(classification=scores), "val_metrics.json")
    logger.info(f"Training run written to {out}")
    return 0


# predict

def _write_image_outputs(
    frame: ImageFrame, values: torch.Tensor, out: Path, config: RunConfig, boxes: bool
) -> None:
    h, w = frame.original_shape
    mask = as_predicted_mask(values[:h, :w])
    write_mask(mask.values, out / "masks" / f"{frame.id}.png")
    cropped = ImageFrame(frame.pixels[:h, :w], frame.id)
    write_rgb(overlay(cropped, mask, config.overlay_alpha).pixels, out / "overlays" / f"{frame.id}.png")
    if boxes:
        dets = mask_detections(mask, config.mask_threshold, config.min_box_area)
        normalized = [Detection(_normalize_box(d.box, w, h), d.score, d.class_id) for d in dets]
        write_detection_file(normalized, out / "boxes" / f"{frame.id}.txt")


def _normalize_box(box: BoundingBox, width: int, height: int) -> BoundingBox:
    return BoundingBox(box.x_min / width, box.y_min / height, box.x_max / width, box.y_max / height)


def cmd_predict(args: argparse.Namespace) -> int:
    config = _run_config(args)
    _configure_logging(config.logging_level)
    configure_determinism(config.deterministic)
    set_seed(config.seed)

    members = load_members(args.checkpoints)
    stage_count = max(m.spec.backbone.stage_count for m in members)
    frames = load_images(args.images, stage_count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with_masks = all(m.decoder is not None for m in members)

    # same-size frames batch together
    groups: Dict[tuple, List[ImageFrame]] = {}
    for frame in frames:
        groups.setdefault((frame.height, frame.width), []).append(frame)
    results: Dict[str, tuple] = {}
    for group in groups.values():
        for start in tqdm(range(0, len(group), PREDICT_BATCH), desc="Predicting", unit="batch", file=sys.stderr):
            chunk = group[start:start + PREDICT_BATCH]
            batch_labels, probs = predict_batch(chunk, members)
            masks = explain(chunk, members) if with_masks else None
            for i, frame in enumerate(chunk):
                results[frame.id] = (batch_labels[i], float(probs[i, 1]))
                if masks is not None:
                    _write_image_outputs(frame, masks[i], out, config, args.boxes)
    MetricsLogger(out).log_predictions(
        [f.id for f in frames],
        [results[f.id][0] for f in frames],
        [results[f.id][1] for f in frames],
    )
    logger.info(f"Predicted {len(frames)} images with {len(members)} model(s)")
    return 0


# softnms

def cmd_softnms(args: argparse.Namespace) -> int:
    base = _run_config(args).suppression_config() if args.config else SuppressionConfig()
    updates = {
        "method": args.method, "sigma": args.sigma,
        "overlap_threshold": args.nt, "score_floor": args.floor,
    }
    cfg = SuppressionConfig(**{**base.model_dump(), **{k: v for k, v in updates.items() if v is not None}})
    files = list_box_files(args.detections)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run(path: Path):
        dets = read_detection_file(path)
        kept = soft_nms(dets, cfg)
        write_detection_file(kept, out / path.name)
        return len(dets), len(kept)

    counts = ordered_map(run, list(files.values()))
    n_in = sum(c[0] for c in counts)
    n_out = sum(c[1] for c in counts)
    print(f"files={len(counts)} input={n_in} output={n_out}")
    return 0


# eval

def _check_ids(pred_ids: Sequence[str], gt_ids: Sequence[str]) -> None:
    pred_set, gt_set = set(pred_ids), set(gt_ids)
    if pred_set == gt_set:
        return
    offenders = sorted(pred_set ^ gt_set)
    raise ValueError(
        f"Prediction/ground-truth ids differ ({len(offenders)} mismatched); first: {offenders[:5]}"
    )


def evaluate_classification(pred_path: Path, gt_path: Path) -> MetricsReport:
    pred = read_label_table(pred_path)
    gt = read_label_table(gt_path)
    _check_ids(pred["id"].tolist(), gt["id"].tolist())
    merged = gt.merge(pred, on="id", suffixes=("_gt", "_pred"))
    scores = classification_metrics(merged["label_pred"].tolist(), merged["label_gt"].tolist())
    return MetricsReport.build(classification=scores)


def evaluate_detection(pred_dir: Path, gt_dir: Path, interpolation: str) -> MetricsReport:
    pred_files = list_box_files(pred_dir)
    gt_files = list_box_files(gt_dir)
    _check_ids(list(pred_files), list(gt_files))
    records = ordered_map(
        lambda stem: ImageRecord(stem, read_detection_file(pred_files[stem]), read_ground_truth_file(gt_files[stem])),
        sorted(gt_files),
    )
    return MetricsReport.build(detection=detection_metrics(records, interpolation))


def cmd_eval(args: argparse.Namespace) -> int:
    config: Optional[RunConfig] = _run_config(args) if args.config else None
    interpolation = args.interpolation or (config.ap_interpolation if config else "all_points")
    if args.mode == "classify":
        report = evaluate_classification(Path(args.pred), Path(args.gt))
    else:
        report = evaluate_detection(Path(args.pred), Path(args.gt), interpolation)
    out = Path(args.out)
    ReportGenerator(out.parent).write(report, out.name)
    print(ReportGenerator.render(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Flat YAML run config")
    common.add_argument("--seed", type=int, default=None, help=f"Root seed (default: config value or {DEFAULT_SEED})")
    common.add_argument("--force", action="store_true", help="Overwrite existing outputs")
    common.add_argument(
        "--deterministic", action=argparse.BooleanOptionalAction, default=None,
        help="Deterministic kernels and serial reductions (default: on)",
    )

    parser = argparse.ArgumentParser(
        prog="vistanet",
        description="Bleeding-frame classification ensemble with segmentation explanations and Soft-NMS",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="Write a synthetic dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="Train the ensemble from a run config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="Classify images and write explanation masks")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--boxes", action="store_true", help="Also write mask-derived detection files")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("softnms", parents=[common], help="Apply Soft-NMS to a directory of detection files")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["gaussian", "linear", "hard"], default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--nt", type=float, default=None, help="Overlap threshold for linear/hard")
    p.add_argument("--floor", type=float, default=None, help="Score floor")
    p.set_defaults(func=cmd_softnms)

    p = sub.add_parser("eval", parents=[common], help="Score predictions against ground truth")
    p.add_argument("--mode", choices=["classify", "detect"], required=True)
    p.add_argument("--pred", required=True, help="predictions.csv (classify) or detection dir (detect)")
    p.add_argument("--gt", required=True, help="labels.csv (classify) or YOLO box dir (detect)")
    p.add_argument("--out", required=True, help="Metrics JSON path")
    p.add_argument("--interpolation", choices=["all_points", "coco101"], default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging("INFO")
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return 1
