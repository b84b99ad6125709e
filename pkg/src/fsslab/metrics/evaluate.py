"""Attribute-sliced evaluation and report/gallery rendering.

Predictions live as ``pred/<pair_id>.png``. Grayscale predictions are scored
against the sketch reference, RGB predictions against the photo. References
are resized to the stored prediction resolution before scoring.
"""

import importlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError, UsageError
from ..fs2k import SLICE_KEYS
from .ssim import ssim

NUM_FMT = "%.4f"


@dataclass(frozen=True)
class MetricPlugin:
    """A named scoring function (prediction, reference) -> value in [0, 1]."""

    name: str
    fn: object


def builtin_metrics():
    return {"ssim": MetricPlugin("ssim", ssim)}


def load_metric_plugin(spec):
    """Load an external metric given "module:attribute" (e.g. a SCOOT impl)."""
    if ":" not in spec:
        raise UsageError(f"plugin spec {spec!r} must look like module:attr")
    module_name, attr = spec.split(":", 1)
    try:
        module = importlib.import_module(module_name)
        fn = getattr(module, attr)
    except (ImportError, AttributeError) as exc:
        raise UsageError(f"cannot load metric plugin {spec!r}: {exc}") from exc
    return MetricPlugin(name=attr, fn=fn)


@dataclass
class MetricReport:
    metric: str
    label: str
    overall_mean: float
    overall_count: int
    slices: dict = field(default_factory=dict)  # key -> {"count", "mean"}


def _load_prediction(path):
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "I;16", "1"):
                return np.asarray(im.convert("L")), "sketch"
            return np.asarray(im.convert("RGB")), "photo"
    except OSError as exc:
        raise DataError(f"unreadable prediction {path}: {exc}") from exc


def _load_reference(entry, kind, size):
    path = entry.sketch_path if kind == "sketch" else entry.photo_path
    with Image.open(path) as im:
        im = im.convert("L" if kind == "sketch" else "RGB")
        if im.size != (size[1], size[0]):
            im = im.resize((size[1], size[0]), Image.BILINEAR)
        return np.asarray(im)


def evaluate_pairs(pred_dir, manifest, split, metric, label=None):
    """Score every pair of a split and aggregate per attribute slice."""
    pred_dir = Path(pred_dir)
    entries = manifest.split_entries(split)
    if not entries:
        raise DataError(f"split {split!r} is empty")

    sums = {key: 0.0 for key in SLICE_KEYS}
    counts = {key: 0 for key in SLICE_KEYS}
    total_sum = 0.0

    for entry in entries:
        pred_path = pred_dir / f"{entry.pair_id}.png"
        if not pred_path.exists():
            raise DataError(
                f"missing prediction for pair {entry.pair_id!r}: {pred_path}")
        pred, kind = _load_prediction(pred_path)
        ref = _load_reference(entry, kind, pred.shape[:2])
        score = float(metric.fn(pred, ref))
        total_sum += score
        for key in entry.slice_keys():
            sums[key] += score
            counts[key] += 1

    slices = {}
    for key in SLICE_KEYS:
        n = counts[key]
        slices[key] = {"count": n, "mean": (sums[key] / n) if n else float("nan")}

    return MetricReport(
        metric=metric.name,
        label=label or metric.name,
        overall_mean=total_sum / len(entries),
        overall_count=len(entries),
        slices=slices,
    )


def report_to_dict(report):
    return {
        "metric": report.metric,
        "label": report.label,
        "overall_mean": report.overall_mean,
        "overall_count": report.overall_count,
        "slices": report.slices,
    }


def report_from_dict(d):
    return MetricReport(
        metric=d["metric"],
        label=d["label"],
        overall_mean=d["overall_mean"],
        overall_count=d["overall_count"],
        slices=d["slices"],
    )


def _fmt(value):
    if value != value:  # NaN slice (no samples)
        return "-"
    return NUM_FMT % value


def emit_report(reports, fmt, out_path):
    """Render reports as one comparison table, one row per report.

    Columns: overall mean followed by the attribute-slice means. csv and
    markdown carry identical numbers; output bytes are deterministic.
    """
    if not reports:
        raise DataError("no reports to render")
    keys = list(reports[0].slices.keys())
    for report in reports[1:]:
        if list(report.slices.keys()) != keys:
            raise DataError("reports have inconsistent slice keys")

    header = ["model", "overall"] + keys
    rows = [[r.label, _fmt(r.overall_mean)] +
            [_fmt(r.slices[k]["mean"]) for k in keys] for r in reports]

    out_path = Path(out_path)
    if fmt == "csv":
        lines = [",".join(header)]
        lines += [",".join(row) for row in rows]
    elif fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(row) + " |" for row in rows]
    else:
        raise UsageError(f"unknown report format {fmt!r}")
    out_path.write_text("\n".join(lines) + "\n")
    return out_path


def _to_cell(img, cell):
    if isinstance(img, (str, Path)):
        with Image.open(img) as im:
            img = im.convert("RGB").copy()
    else:
        arr = np.asarray(img)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        img = Image.fromarray(arr.astype(np.uint8))
    return img.resize((cell, cell), Image.BILINEAR)


def gallery(inputs, references, predictions, out_path, cell=192):
    """Side-by-side qualitative grid: one row per (input, reference, prediction)."""
    if not (len(inputs) == len(references) == len(predictions)):
        raise DataError("inputs, references and predictions must have equal "
                        "lengths")
    if not inputs:
        raise DataError("empty gallery")

    rows = len(inputs)
    sheet = Image.new("RGB", (3 * cell, rows * cell), (255, 255, 255))
    for r, triplet in enumerate(zip(inputs, references, predictions)):
        for c, img in enumerate(triplet):
            sheet.paste(_to_cell(img, cell), (c * cell, r * cell))
    out_path = Path(out_path)
    sheet.save(out_path, format="PNG")
    return out_path
