"""Detection / segmentation scoring against COCO ground truth.

Implements COCO-style 101-point interpolated average precision at a single
IoU threshold (the benchmark metric is mAP@50). Score ties break by input
order so results are deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .annotate import CocoDataset, fill_polygons

RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass
class Detection:
    image_id: int
    category_id: int
    score: float
    bbox: tuple[float, float, float, float]
    segmentation: list[list[float]] | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.score):
            raise ValueError("detection score must be finite")
        if self.bbox[2] < 0 or self.bbox[3] < 0:
            raise ValueError("bbox extents must be non-negative")


@dataclass
class EvalReport:
    ap_per_category_box: dict[int, float]
    ap_per_category_mask: dict[int, float]
    map50_box: float
    map50_mask: float | None
    gt_count: int
    detection_count: int
    true_positive_count: int
    empty_categories_flagged: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "map50_box": self.map50_box,
            "map50_mask": self.map50_mask,
            "ap_per_category_box": {str(k): v for k, v in self.ap_per_category_box.items()},
            "ap_per_category_mask": {str(k): v for k, v in self.ap_per_category_mask.items()},
            "counts": {
                "ground_truths": self.gt_count,
                "detections": self.detection_count,
                "true_positives": self.true_positive_count,
            },
            "empty_categories_flagged": self.empty_categories_flagged,
        }

    def to_table(self) -> str:
        lines = ["category  ap50_box  ap50_mask"]
        for cat in sorted(self.ap_per_category_box):
            mask_ap = self.ap_per_category_mask.get(cat)
            mask_s = f"{mask_ap:9.4f}" if mask_ap is not None else "        -"
            lines.append(f"{cat:8d}  {self.ap_per_category_box[cat]:8.4f}  {mask_s}")
        mask_m = f"{self.map50_mask:.4f}" if self.map50_mask is not None else "-"
        lines.append(f"mAP@50 box {self.map50_box:.4f}  mask {mask_m}")
        lines.append(f"gt {self.gt_count}  det {self.detection_count}  "
                     f"tp {self.true_positive_count}")
        return "\n".join(lines)


def iou_bbox(a, b) -> float:
    """Intersection over union of (x, y, w, h) boxes; 0 when the union is empty."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou_mask(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shape mismatch: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def compute_ap(detections, ground_truths, iou_threshold: float, iou_fn) -> tuple[float, int]:
    """101-point interpolated AP; returns (ap, true_positive_count).

    detections: list of (image_id, score, payload), matched greedily in
    score order (ties by input order) to the highest-IoU unmatched ground
    truth of the same image with IoU >= threshold.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    n_gt = len(ground_truths)
    if not detections:
        return 0.0, 0

    gt_by_image: dict[int, list[int]] = {}
    for gi, (image_id, _payload) in enumerate(ground_truths):
        gt_by_image.setdefault(image_id, []).append(gi)

    order = sorted(range(len(detections)), key=lambda i: -detections[i][1])
    matched = np.zeros(n_gt, dtype=bool)
    tp = np.zeros(len(detections), dtype=bool)
    for rank, di in enumerate(order):
        image_id, _score, payload = detections[di]
        best_iou = 0.0
        best_gi = -1
        for gi in gt_by_image.get(image_id, ()):
            if matched[gi]:
                continue
            iou = iou_fn(payload, ground_truths[gi][1])
            if iou >= iou_threshold and iou > best_iou:
                best_iou = iou
                best_gi = gi
        if best_gi >= 0:
            matched[best_gi] = True
            tp[rank] = True

    if n_gt == 0:
        return 0.0, 0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(detections) + 1)
    recall = cum_tp / n_gt
    # precision envelope: max precision at any recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    for r in RECALL_POINTS:
        idx = np.searchsorted(recall, r, side="left")
        ap += env[idx] if idx < len(env) else 0.0
    return ap / len(RECALL_POINTS), int(cum_tp[-1])


def _rasterize(segmentation, height: int, width: int) -> np.ndarray:
    return fill_polygons(segmentation, height, width)


def evaluate(dataset: CocoDataset, detections: list[Detection],
             iou_threshold: float = 0.5) -> EvalReport:
    """Per-category AP for boxes (and masks when present), mAP over categories."""
    image_dims = {im["id"]: (im["height"], im["width"]) for im in dataset.images}
    categories = [c["id"] for c in dataset.categories]
    cat_set = set(categories)
    for det in detections:
        if det.image_id not in image_dims:
            raise ValueError(f"detection references unknown image id {det.image_id}")
        if det.category_id not in cat_set:
            raise ValueError(f"detection references unknown category {det.category_id}")

    any_masks = any(d.segmentation for d in detections)
    ap_box: dict[int, float] = {}
    ap_mask: dict[int, float] = {}
    total_tp = 0
    flagged: list[int] = []
    for cat in categories:
        gts = [a for a in dataset.annotations if a["category_id"] == cat]
        dets = [d for d in detections if d.category_id == cat]
        gt_boxes = [(a["image_id"], tuple(a["bbox"])) for a in gts]
        det_boxes = [(d.image_id, d.score, d.bbox) for d in dets]
        if not gts and not dets:
            flagged.append(cat)
        ap, tp = compute_ap(det_boxes, gt_boxes, iou_threshold, iou_bbox)
        ap_box[cat] = ap
        total_tp += tp
        if any_masks:
            gt_masks = [
                (a["image_id"], _rasterize(a["segmentation"], *image_dims[a["image_id"]]))
                for a in gts
            ]
            det_masks = [
                (d.image_id, d.score,
                 _rasterize(d.segmentation or [], *image_dims[d.image_id]))
                for d in dets
            ]
            ap_mask[cat], _ = compute_ap(det_masks, gt_masks, iou_threshold, iou_mask)

    map_box = float(np.mean([ap_box[c] for c in categories])) if categories else 0.0
    map_mask = float(np.mean([ap_mask[c] for c in categories])) if any_masks else None
    return EvalReport(
        ap_per_category_box=ap_box,
        ap_per_category_mask=ap_mask,
        map50_box=map_box,
        map50_mask=map_mask,
        gt_count=len(dataset.annotations),
        detection_count=len(detections),
        true_positive_count=total_tp,
        empty_categories_flagged=flagged,
    )


def load_detections(path) -> list[Detection]:
    """COCO results format: JSON array of detection records."""
    with open(path) as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ValueError("predictions file must be a JSON array")
    dets = []
    for i, rec in enumerate(records):
        try:
            dets.append(Detection(
                image_id=int(rec["image_id"]),
                category_id=int(rec["category_id"]),
                score=float(rec["score"]),
                bbox=tuple(float(v) for v in rec["bbox"]),
                segmentation=rec.get("segmentation"),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"predictions[{i}]: {exc}") from exc
    return dets
