"""COCO-style mAP@50 over coarse or fine label spaces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scene import Box, Dataset, iou_matrix

IOU_THRESHOLD = 0.5


class EvaluationError(ValueError):
    pass


def match_detections(preds: Sequence[tuple[Box, float]], gts: Sequence[Box],
                     iou_thresh: float = IOU_THRESHOLD) -> list[tuple[int, bool]]:
    """Greedy matching of scored predictions to ground truth within one image and class.

    Predictions are visited by descending score (lower index first on ties); each
    takes the still-unmatched ground truth of highest IoU, provided IoU >= threshold.
    Returns (prediction index, matched) in visiting order.
    """
    order = sorted(range(len(preds)), key=lambda k: (-preds[k][1], k))
    if not gts:
        return [(k, False) for k in order]
    overlap = iou_matrix(np.array([p[0].corners() for p in preds]).reshape(-1, 4),
                         np.array([g.corners() for g in gts]))
    taken = np.zeros(len(gts), dtype=bool)
    out = []
    for k in order:
        cand = np.where(taken, -1.0, overlap[k])
        g = int(np.argmax(cand))
        if cand[g] >= iou_thresh:
            taken[g] = True
            out.append((k, True))
        else:
            out.append((k, False))
    return out


def average_precision(scored_matches: Sequence[tuple[float, bool]], num_gt: int,
                      points: int = 101) -> float:
    """Interpolated AP from (score, is_true_positive) pairs pooled across images.

    `scored_matches` must already be in ranking order (descending score, ties
    resolved by the caller). `points` is 101 (COCO) or 11 (VOC-style).
    """
    if points not in (101, 11):
        raise ValueError("points must be 101 or 11")
    if num_gt == 0:
        return 0.0
    tp = np.cumsum([m for _, m in scored_matches], dtype=np.int64)
    n = np.arange(1, len(tp) + 1)
    if len(tp) == 0:
        return 0.0
    precision = tp / n
    # precision envelope: best precision at this rank or any later one
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    step = 100 // (points - 1)
    total = 0.0
    for k in range(0, 101, step):
        # recall >= k/100 in exact integer arithmetic
        reached = np.nonzero(100 * tp >= k * num_gt)[0]
        if len(reached):
            total += envelope[reached[0]]
    return float(total / points)


@dataclass
class EvalReport:
    per_class_ap: dict = field(default_factory=dict)
    map: float = 0.0
    counts: dict = field(default_factory=dict)
    label_space: str = "fine"

    def to_dict(self) -> dict:
        return {"label_space": self.label_space, "per_class_ap": self.per_class_ap,
                "map": self.map, "counts": self.counts}

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalReport":
        return cls(dict(obj["per_class_ap"]), float(obj["map"]),
                   {k: dict(v) for k, v in obj["counts"].items()}, obj.get("label_space", "fine"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _labels(d: Dataset, label_space: str, what: str) -> tuple[list[str], list[list[int]]]:
    per_scene = []
    for s in d.scenes:
        labels = []
        for k, det in enumerate(s.detections):
            if label_space == "coarse":
                labels.append(d.coarse_of_fine[det.fine_label] if det.fine_label is not None
                              else det.coarse)
            else:
                if det.fine_label is None:
                    raise EvaluationError(
                        f"{what} scene {s.image_id}: detection {k} has no fine label")
                labels.append(det.fine_label)
        per_scene.append(labels)
    names = list(d.coarse_classes if label_space == "coarse" else d.fine_classes)
    return names, per_scene


def evaluate_map(pred: Dataset, gt: Dataset, label_space: str = "fine",
                 points: int = 101) -> EvalReport:
    """Per-class AP@50 and their mean.

    Classes with neither ground truth nor predictions are left out of the mean;
    a class with predictions but no ground truth scores 0.
    """
    if label_space not in ("coarse", "fine"):
        raise ValueError("label_space must be 'coarse' or 'fine'")
    if not pred.same_header(gt):
        raise EvaluationError("prediction and ground-truth headers differ")
    gt_ids = {s.image_id: k for k, s in enumerate(gt.scenes)}
    for s in pred.scenes:
        if s.image_id not in gt_ids:
            raise EvaluationError(f"prediction image_id {s.image_id!r} not in ground truth")

    names, gt_labels = _labels(gt, label_space, "ground-truth")
    _, pred_labels = _labels(pred, label_space, "prediction")
    pred_by_id = {s.image_id: (s, lab) for s, lab in zip(pred.scenes, pred_labels)}

    report = EvalReport(label_space=label_space)
    aps = []
    for c, name in enumerate(names):
        pooled = []  # (score, image position, pred index, matched)
        num_gt = 0
        num_pred = 0
        for g_pos, (g_scene, g_lab) in enumerate(zip(gt.scenes, gt_labels)):
            gts = [det.box for det, lab in zip(g_scene.detections, g_lab) if lab == c]
            num_gt += len(gts)
            if g_scene.image_id not in pred_by_id:
                continue
            p_scene, p_lab = pred_by_id[g_scene.image_id]
            idx = [k for k, lab in enumerate(p_lab) if lab == c]
            preds = [(p_scene.detections[k].box, p_scene.detections[k].score) for k in idx]
            num_pred += len(preds)
            for k, hit in match_detections(preds, gts):
                pooled.append((preds[k][1], g_pos, k, hit))
        report.counts[name] = {"gt": num_gt, "pred": num_pred}
        if num_gt == 0 and num_pred == 0:
            continue
        pooled.sort(key=lambda t: (-t[0], t[1], t[2]))
        ap = average_precision([(s, hit) for s, _, _, hit in pooled], num_gt, points)
        report.per_class_ap[name] = ap
        aps.append(ap)
    report.map = float(np.mean(aps)) if aps else 0.0
    return report


def render_report(r: EvalReport) -> str:
    """Fixed-width text table: one row per scored class, then the mean."""
    lines = [f"{'class':<20} {'AP@50':>10} {'gt':>6} {'pred':>6}"]
    for name, ap in r.per_class_ap.items():
        c = r.counts.get(name, {})
        lines.append(f"{name:<20} {ap:>10.6f} {c.get('gt', 0):>6d} {c.get('pred', 0):>6d}")
    if r.per_class_ap:
        lines.append(f"{'mAP':<20} {r.map:>10.6f}")
    return "\n".join(lines) + "\n"
