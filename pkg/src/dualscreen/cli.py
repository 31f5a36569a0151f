"""Command-line orchestration for the whole pipeline."""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np
from PIL import Image, ImageDraw

from . import classifier as cls_mod
from . import detector as det_mod
from .config import ConfigError, RunConfig
from .data import DataError, load_dataset, load_split, save_split, stratified_split
from .metrics import EvalConfig, evaluate_detections
from .pipeline import evaluate_pipeline, screen_image
from .reports import (
    dump_report,
    render_detection_table,
    render_pipeline_table,
    report_document,
)
from .synth import generate_dataset
from .types import CLASS_NAMES, AnomalyLabel, ImageRecord, ObjectClass

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

BOX_COLORS = {
    ObjectClass.BOTTLE: (31, 119, 180),
    ObjectClass.HAIRDRYER: (255, 127, 14),
    ObjectClass.IRON: (44, 160, 44),
    ObjectClass.TOASTER: (148, 103, 189),
    ObjectClass.MOBILE: (214, 39, 40),
    ObjectClass.LAPTOP: (23, 190, 207),
}


def _fail(code: int, message: str):
    click.echo(f"ERROR: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except (DataError, FileNotFoundError) as exc:
            _fail(EXIT_DATA, str(exc))
        except RuntimeError as exc:
            _fail(EXIT_NUMERIC, str(exc))
        except ValueError as exc:
            _fail(EXIT_CONFIG, str(exc))

    return wrapper


def config_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                      help="Flat dotted-key config file; flags win over it.")(fn)
    fn = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                      help="Override a config key.")(fn)
    return fn


def _archive_run(out_dir: Path, config: RunConfig, artifacts: list[str]) -> None:
    """Archive the resolved config and the artifact manifest; timestamps go
    to a separate metadata file so reports stay byte-stable."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.json").write_text(
        json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / "artifacts.json").write_text(
        json.dumps(sorted(artifacts), indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / "run_meta.json").write_text(
        json.dumps({"finished_at": time.strftime("%Y-%m-%dT%H:%M:%S")}) + "\n", encoding="utf-8"
    )


def _load_records(data: str, split_file: str | None, part: str):
    records = load_dataset(data)
    if split_file is None:
        return records
    split = load_split(split_file)
    wanted = set(getattr(split, part))
    return [r for r in records if r.id in wanted]


@click.group()
def main():
    """Dual-stage anomaly screening pipeline."""


@main.command()
@config_options
@click.option("--out", required=True, type=click.Path())
@click.option("--count", type=int, default=None)
@handle_errors
def gen(config_path, overrides, out, count):
    """Generate a synthetic dataset with ground-truth annotations."""
    cfg = RunConfig.load(config_path, overrides)
    n = count if count is not None else int(cfg.get("gen.count", 100))
    manifest = generate_dataset(cfg.scene_config(), n, out)
    _archive_run(Path(out), cfg, [str(manifest)])
    click.echo(f"wrote {n} scenes to {out}")


@main.command()
@config_options
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--ratios", nargs=3, type=float, default=(0.6, 0.2, 0.2), show_default=True)
@click.option("--seed", type=int, default=None)
@handle_errors
def split(config_path, overrides, data, out, ratios, seed):
    """Stratified train/validation/test split of a dataset."""
    cfg = RunConfig.load(config_path, overrides)
    seed = seed if seed is not None else cfg.seed()
    result = stratified_split(load_dataset(data), tuple(ratios), seed)
    save_split(result, out)
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"split {len(result.train)}/{len(result.validation)}/{len(result.test)} -> {out}")


@main.command("train-detector")
@config_options
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", "split_file", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@handle_errors
def train_detector_cmd(config_path, overrides, data, split_file, out):
    """Train the stage-1 detector and save the best checkpoint."""
    cfg = RunConfig.load(config_path, overrides)
    train = _load_records(data, split_file, "train")
    val = _load_records(data, split_file, "validation")
    model = det_mod.train_detector(train, val, cfg.detector_config())
    det_mod.save_checkpoint(model, out)
    _archive_run(Path(out).parent, cfg, [out])
    click.echo(f"detector checkpoint -> {out}")


@main.command("train-classifier")
@config_options
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", "split_file", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--full-image", is_flag=True, help="Train the whole-image baseline instead of crops.")
@handle_errors
def train_classifier_cmd(config_path, overrides, data, split_file, out, full_image):
    """Train the stage-2 anomaly classifier and save the best checkpoint."""
    cfg = RunConfig.load(config_path, overrides)
    ccfg = cfg.classifier_config()
    train = _load_records(data, split_file, "train")
    val = _load_records(data, split_file, "validation")
    if full_image:
        crops = cls_mod.full_image_samples(train, ccfg.input_size)
        val_crops = cls_mod.full_image_samples(val, ccfg.input_size)
    else:
        pad = float(cfg.get("cls.pad_fraction", 0.1))
        crops = cls_mod.crops_from_ground_truth(train, pad, ccfg.input_size)
        val_crops = cls_mod.crops_from_ground_truth(val, pad, ccfg.input_size)
    model = cls_mod.train_classifier(crops, val_crops, ccfg)
    cls_mod.save_checkpoint(model, out)
    _archive_run(Path(out).parent, cfg, [out])
    click.echo(f"classifier checkpoint -> {out}")


def _eval_config(cfg: RunConfig) -> EvalConfig:
    thetas = cfg.get("eval.theta_set")
    return EvalConfig(theta_set=tuple(thetas)) if thetas else EvalConfig()


def _load_detections_file(path: str, known_ids: set[str]) -> dict[str, list]:
    """Read a detections sidecar (one JSON object per line) into per-image lists."""
    from .types import BoundingBox, Detection

    out: dict[str, list] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            rec_id = doc["id"]
            out[rec_id] = [
                Detection(
                    bbox=BoundingBox(*d["bbox"]),
                    object_class=ObjectClass.from_name(d["class"]),
                    score=float(d["score"]),
                )
                for d in doc["detections"]
            ]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}:{lineno}: bad detections line ({exc})") from exc
        if rec_id not in known_ids:
            raise DataError(f"{path}:{lineno}: unknown image id {rec_id!r}")
    return out


@main.command("eval-detector")
@config_options
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", "split_file", type=click.Path(exists=True), default=None)
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--detections", "detections_file", type=click.Path(exists=True), default=None,
              help="Score a stored detections file instead of running a checkpoint.")
@click.option("--out", required=True, type=click.Path())
@handle_errors
def eval_detector_cmd(config_path, overrides, data, split_file, checkpoint, detections_file, out):
    """Evaluate detection AP/mAP on the test split."""
    cfg = RunConfig.load(config_path, overrides)
    if (checkpoint is None) == (detections_file is None):
        raise ConfigError("provide exactly one of --checkpoint or --detections")
    test = _load_records(data, split_file, "test")
    if detections_file is not None:
        stored = _load_detections_file(detections_file, {rec.id for rec in test})
        dets = {rec.id: stored.get(rec.id, []) for rec in test}
    else:
        model = det_mod.load_checkpoint(checkpoint)
        dets = {
            rec.id: det_mod.detect(
                model, rec,
                float(cfg.get("eval.score_threshold", 0.3)),
                float(cfg.get("eval.nms_threshold", 0.5)),
            )
            for rec in test
        }
    report = evaluate_detections(dets, test, _eval_config(cfg))
    doc = report_document(detection=report, config=cfg.to_dict())
    dump_report(doc, out)
    _archive_run(Path(out).parent, cfg, [out])
    click.echo(render_detection_table({"detector": report}))


@main.command("eval-pipeline")
@config_options
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", "split_file", type=click.Path(exists=True), default=None)
@click.option("--detector", "det_ckpt", required=True, type=click.Path(exists=True))
@click.option("--classifier", "cls_ckpt", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@handle_errors
def eval_pipeline_cmd(config_path, overrides, data, split_file, det_ckpt, cls_ckpt, out):
    """Evaluate the full dual pipeline: detection plus anomaly classification."""
    cfg = RunConfig.load(config_path, overrides)
    det_model = det_mod.load_checkpoint(det_ckpt)
    cls_model = cls_mod.load_checkpoint(cls_ckpt)
    test = _load_records(data, split_file, "test")
    cls_report, det_report = evaluate_pipeline(
        det_model, cls_model, test,
        score_threshold=float(cfg.get("eval.score_threshold", 0.3)),
        nms_threshold=float(cfg.get("eval.nms_threshold", 0.5)),
        pad_fraction=float(cfg.get("cls.pad_fraction", 0.1)),
        eval_config=_eval_config(cfg),
    )
    doc = report_document(detection=det_report, classification=cls_report, config=cfg.to_dict())
    dump_report(doc, out)
    _archive_run(Path(out).parent, cfg, [out])
    click.echo(render_detection_table({"detector": det_report}))
    click.echo(render_pipeline_table({"dual pipeline": cls_report}))


def _records_for_inference(path: Path) -> list[ImageRecord]:
    if path.is_dir():
        return load_dataset(path)
    with Image.open(path) as img:
        pixels = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    h, w = pixels.shape[:2]
    return [ImageRecord(id=path.stem, width=w, height=h, pixels=pixels, annotations=[])]


@main.command()
@config_options
@click.option("--detector", "det_ckpt", required=True, type=click.Path(exists=True))
@click.option("--classifier", "cls_ckpt", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@handle_errors
def infer(config_path, overrides, det_ckpt, cls_ckpt, input_path, out):
    """Annotate images with detections and anomaly verdicts."""
    cfg = RunConfig.load(config_path, overrides)
    det_model = det_mod.load_checkpoint(det_ckpt)
    cls_model = cls_mod.load_checkpoint(cls_ckpt)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    sidecar = out_dir / "detections.jsonl"
    tmp = sidecar.with_suffix(".jsonl.tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for rec in _records_for_inference(Path(input_path)):
            screened = screen_image(
                det_model, cls_model, rec,
                score_threshold=float(cfg.get("eval.score_threshold", 0.3)),
                nms_threshold=float(cfg.get("eval.nms_threshold", 0.5)),
                pad_fraction=float(cfg.get("cls.pad_fraction", 0.1)),
            )
            img = Image.fromarray(np.round(rec.pixels * 255).astype(np.uint8), mode="RGB")
            draw = ImageDraw.Draw(img)
            for s in screened:
                det = s.detection
                color = BOX_COLORS[det.object_class]
                draw.rectangle(
                    [det.bbox.x_min, det.bbox.y_min, det.bbox.x_max - 1, det.bbox.y_max - 1],
                    outline=color, width=2,
                )
                verdict = "anomaly" if s.anomaly is AnomalyLabel.ANOMALOUS else "benign"
                caption = f"{det.object_class.label} {det.score:.2f} | {verdict} {s.anomaly_score:.2f}"
                draw.text((det.bbox.x_min + 2, max(0.0, det.bbox.y_min - 11)), caption, fill=color)
            png_path = out_dir / f"{rec.id}_annotated.png"
            img.save(png_path)
            artifacts.append(str(png_path))
            fh.write(json.dumps({
                "id": rec.id,
                "detections": [
                    {
                        "bbox": [s.detection.bbox.x_min, s.detection.bbox.y_min,
                                 s.detection.bbox.x_max, s.detection.bbox.y_max],
                        "class": s.detection.object_class.label,
                        "score": s.detection.score,
                        "anomaly": s.anomaly is AnomalyLabel.ANOMALOUS,
                        "anomaly_score": s.anomaly_score,
                    }
                    for s in screened
                ],
            }) + "\n")
    tmp.replace(sidecar)
    artifacts.append(str(sidecar))
    _archive_run(out_dir, cfg, artifacts)
    click.echo(f"annotated output -> {out_dir}")


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
@handle_errors
def report(report_path):
    """Render a stored report JSON as aligned tables."""
    doc = json.loads(Path(report_path).read_text(encoding="utf-8"))
    det = doc.get("detection")
    if det:
        header = "Class".ljust(12) + "AP".rjust(9) + "AP@0.5".rjust(9)
        click.echo(header)
        click.echo("-" * len(header))
        for name in CLASS_NAMES:
            entry = det["per_class"].get(name)
            if entry:
                click.echo(
                    name.ljust(12)
                    + f"{100 * entry['ap']:.1f}".rjust(9)
                    + f"{100 * entry['ap50']:.1f}".rjust(9)
                )
        click.echo("mAP".ljust(12) + f"{100 * det['map']:.1f}".rjust(9) + f"{100 * det['map50']:.1f}".rjust(9))
    cls = doc.get("classification")
    if cls:
        cols = ("A", "P", "R", "F1", "TP_pct", "FP_pct")
        click.echo("  ".join(c.rjust(7) for c in cols))
        click.echo("  ".join(
            ("-".rjust(7) if cls[c] is None else f"{cls[c]:.2f}".rjust(7)) for c in cols
        ))


if __name__ == "__main__":
    main()
