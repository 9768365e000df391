"""End-to-end fine-grained inference: NMS, neighborhoods, relations, knowledge-base query."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .annotate import DEFAULT_TAU_FRAC
from .kb import KnowledgeBase, Neighbor, kb_match
from .relpredict import RelModel
from .scene import DEFAULT_PROVENANCE, Dataset, Detection, Provenance, Scene, iou_matrix

SCORE_MODES = ("composed", "raw")


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class InferConfig:
    tau_frac: float = DEFAULT_TAU_FRAC
    nms_iou: float = 0.5
    rel_threshold: float = 0.5
    score_mode: str = "composed"
    per_coarse_nms: bool = True

    def __post_init__(self):
        if self.score_mode not in SCORE_MODES:
            raise ValueError(f"score_mode must be one of {SCORE_MODES}")
        if self.tau_frac <= 0:
            raise ValueError("tau_frac must be positive")


def nms(detections: Sequence[Detection], iou_thresh: float = 0.5,
        per_coarse: bool = True) -> list[int]:
    """Greedy non-maximum suppression; returns surviving indices in ascending order.

    Boxes are visited by descending score (lower index first on ties) and a box
    is dropped when its IoU with an already kept box exceeds `iou_thresh`.
    """
    if not detections:
        return []
    boxes = np.array([d.box.corners() for d in detections])
    overlap = iou_matrix(boxes, boxes)
    classes = [d.coarse for d in detections]
    order = sorted(range(len(detections)), key=lambda k: (-detections[k].score, k))
    keep: list[int] = []
    for k in order:
        if all(overlap[k, q] <= iou_thresh or (per_coarse and classes[k] != classes[q])
               for q in keep):
            keep.append(k)
    return sorted(keep)


def build_neighborhood(scene: Scene, tau: float) -> list[list[int]]:
    """For every detection, the other detections whose centers lie within `tau` (inclusive)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = len(scene.detections)
    if n == 0:
        return []
    centers = np.array([(d.box.cx, d.box.cy) for d in scene.detections])
    dist = np.hypot(centers[:, None, 0] - centers[None, :, 0],
                    centers[:, None, 1] - centers[None, :, 1])
    return [[j for j in range(n) if j != i and dist[i, j] <= tau] for i in range(n)]


class OracleRelations:
    """Relation source that reads annotated ``rel_labels`` as certain (probability 1)."""

    def __init__(self, num_relations: int):
        self.num_relations = num_relations

    def predict_scene(self, scene: Scene, pairs) -> dict:
        out = {}
        for i, j in pairs:
            p = np.zeros(self.num_relations + 1)
            rels = dict(scene.detections[i].rel_labels or ())
            p[rels.get(j, self.num_relations)] = 1.0
            out[(i, j)] = p
        return out


@dataclass(frozen=True)
class SceneResult:
    detections: tuple[Detection, ...]
    # (i, j, relation, p) for every neighborhood pair whose top relation clears rel_threshold
    arrows: tuple[tuple[int, int, int, float], ...]


def _infer(scene: Scene, model, kb: KnowledgeBase, cfg: InferConfig) -> SceneResult:
    keep = nms(scene.detections, cfg.nms_iou, cfg.per_coarse_nms)
    scene = scene.subset(keep)
    dets = scene.detections
    nb = build_neighborhood(scene, cfg.tau_frac * scene.diagonal) if dets else []
    pairs = [(i, j) for i in range(len(dets)) for j in nb[i]]
    probs = model.predict_scene(scene, pairs)
    no_rel = kb.no_relation
    out = []
    arrows = []
    for i, det in enumerate(dets):
        neighbors = []
        for j in nb[i]:
            p = probs[(i, j)]
            r = int(np.argmax(p))
            neighbors.append(Neighbor(dets[j].coarse, r, float(p[r])))
            if r != no_rel and p[r] >= cfg.rel_threshold:
                arrows.append((i, j, r, float(p[r])))
        match = kb_match(kb, det.coarse, neighbors)
        if match.witness is None:
            score, prov = det.score, DEFAULT_PROVENANCE
        else:
            nbr = neighbors[match.witness]
            prov = Provenance(nb[i][match.witness], nbr.relation, nbr.support)
            score = det.score * match.support if cfg.score_mode == "composed" else det.score
        out.append(Detection(det.box, score, det.coarse_probs, match.fine, None, prov))
    return SceneResult(tuple(out), tuple(arrows))


def _check_compat(model, kb: KnowledgeBase) -> None:
    if isinstance(model, RelModel) and model.no_relation != kb.no_relation:
        raise PipelineError("model relations do not match the dataset's relation list")


def infer_scene(scene: Scene, model, kb: KnowledgeBase,
                cfg: InferConfig = InferConfig()) -> list[Detection]:
    """Fine-labelled detections for one scene.

    `model` is anything with ``predict_scene(scene, pairs)``: a trained
    :class:`RelModel` or an :class:`OracleRelations`. Output indices refer to
    the detections that survive NMS.
    """
    _check_compat(model, kb)
    return list(_infer(scene, model, kb, cfg).detections)


def _check_dataset(d: Dataset, model) -> None:
    if isinstance(model, RelModel):
        if model.relations != d.relations or model.num_coarse != len(d.coarse_classes):
            raise PipelineError("model class/relation lists do not match the dataset header")


def infer_dataset(d: Dataset, model, kb: KnowledgeBase,
                  cfg: InferConfig = InferConfig()) -> tuple[Dataset, dict]:
    """Prediction dataset (scenes sorted by image_id) and the per-scene relation arrows."""
    _check_dataset(d, model)
    _check_compat(model, kb)
    scenes = []
    graph = {}
    for s in sorted(d.scenes, key=lambda s: s.image_id):
        res = _infer(s, model, kb, cfg)
        scenes.append(replace(s, detections=res.detections))
        graph[s.image_id] = [[i, j, d.relations[r], p] for i, j, r, p in res.arrows]
    return d.with_scenes(scenes), graph


def save_graph(graph: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(graph, sort_keys=True) + "\n", encoding="utf-8")
