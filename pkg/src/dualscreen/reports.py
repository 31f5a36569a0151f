"""Report serialisation and plain-text table rendering."""

from __future__ import annotations

import json
from pathlib import Path

from .metrics import DetectionReport, PipelineReport
from .types import CLASS_NAMES

DETECTION_COLUMNS = tuple(name.capitalize() for name in CLASS_NAMES)
PIPELINE_COLUMNS = ("A", "P", "R", "F1", "TP(%)", "FP(%)")


def report_document(
    detection: DetectionReport | None = None,
    classification: PipelineReport | None = None,
    config: dict | None = None,
) -> dict:
    doc: dict = {"config": config or {}}
    if detection is not None:
        doc["detection"] = detection.to_dict()
    if classification is not None:
        doc["classification"] = classification.to_dict()
    return doc


def dump_report(doc: dict, path: str | Path) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)


def _fmt(value, pct: bool = False, width: int = 9) -> str:
    if value is None:
        return "-".rjust(width)
    return (f"{100 * value:.1f}" if pct else f"{value:.2f}").rjust(width)


def render_detection_table(
    rows: dict[str, DetectionReport], ap_key: str = "ap50"
) -> str:
    """Aligned per-class AP table: one row per model, six class columns + mAP.

    ap_key selects "ap50" (AP at threshold 0.5) or "ap" (threshold-range
    averaged AP).
    """
    header = "Model".ljust(28) + "".join(c.rjust(10) for c in DETECTION_COLUMNS) + "mAP".rjust(10)
    lines = [header, "-" * len(header)]
    for name, rep in rows.items():
        per_class = rep.per_class_ap50 if ap_key == "ap50" else rep.per_class_ap
        map_val = rep.map50 if ap_key == "ap50" else rep.map
        cells = "".join(_fmt(per_class[cls], pct=True, width=10) for cls in per_class)
        lines.append(name.ljust(28) + cells + _fmt(map_val, pct=True, width=10))
    return "\n".join(lines)


def render_pipeline_table(rows: dict[str, PipelineReport]) -> str:
    """Aligned classification table: A, P, R, F1, TP%, FP% per configuration."""
    header = "Configuration".ljust(36) + "".join(c.rjust(9) for c in PIPELINE_COLUMNS)
    lines = [header, "-" * len(header)]
    for name, rep in rows.items():
        cells = (
            _fmt(rep.accuracy)
            + _fmt(rep.precision)
            + _fmt(rep.recall)
            + _fmt(rep.f1)
            + (f"{rep.tp_pct:.2f}".rjust(9) if rep.tp_pct is not None else "-".rjust(9))
            + (f"{rep.fp_pct:.2f}".rjust(9) if rep.fp_pct is not None else "-".rjust(9))
        )
        lines.append(name.ljust(36) + cells)
    return "\n".join(lines)
