"""Automatic relationship annotation from fine labels, the knowledge base and a distance cutoff."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

from .kb import KnowledgeBase
from .relpredict import pair_features
from .scene import Dataset, Scene, center_distance

DEFAULT_TAU_FRAC = 0.25


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class AutoConfig:
    tau_frac: float = DEFAULT_TAU_FRAC
    fraction_x: float = 1.0

    def __post_init__(self):
        if not 0 < self.tau_frac <= math.sqrt(2):
            raise ValueError(f"tau_frac must lie in (0, sqrt(2)], got {self.tau_frac}")
        if not 0 < self.fraction_x <= 1:
            raise ValueError(f"fraction_x must lie in (0, 1], got {self.fraction_x}")


def auto_annotate_scene(scene: Scene, kb: KnowledgeBase, tau: float,
                        coarse_of_fine=None) -> list[tuple[int, int, int]]:
    """All (i, j, relation) licensed by a rule whose fine class is i's label, within `tau`.

    Coarse classes are taken from the fine labels when `coarse_of_fine` is given,
    otherwise from the detections' coarse probabilities.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    dets = scene.detections
    for k, det in enumerate(dets):
        if det.fine_label is None:
            raise AnnotationError(f"scene {scene.image_id}: detection {k} has no fine label")
    coarse = [coarse_of_fine[d.fine_label] if coarse_of_fine is not None else d.coarse
              for d in dets]
    found: dict[tuple[int, int], int] = {}
    for t in sorted(kb.tuples):
        for i, di in enumerate(dets):
            if di.fine_label != t.fine or coarse[i] != t.subj_coarse:
                continue
            for j, dj in enumerate(dets):
                if j == i or coarse[j] != t.obj_coarse:
                    continue
                if center_distance(di.box, dj.box) > tau:
                    continue
                prev = found.setdefault((i, j), t.relation)
                if prev != t.relation:
                    raise AnnotationError(
                        f"scene {scene.image_id}: pair ({i}, {j}) receives relations "
                        f"{prev} and {t.relation}")
    return sorted((i, j, r) for (i, j), r in found.items())


def select_scenes(num_scenes: int, fraction: float, seed: int) -> list[int]:
    """Indices of ceil(fraction * N) scenes chosen by a seeded shuffle, in ascending order."""
    k = math.ceil(fraction * num_scenes - 1e-9)
    order = np.random.default_rng(seed).permutation(num_scenes)
    return sorted(int(i) for i in order[:k])


def auto_annotate_dataset(d: Dataset, kb: KnowledgeBase, cfg: AutoConfig,
                          seed: int) -> tuple[Dataset, dict]:
    """Annotate a seeded subset of scenes; return the new dataset and the selection record.

    Selected scenes get ``rel_labels`` on every detection. Unselected scenes lose
    their fine labels and carry no relation annotation, so nothing downstream can
    use them for supervision.
    """
    for s in d.scenes:
        if any(det.fine_label is None for det in s.detections):
            raise AnnotationError(f"scene {s.image_id}: fine labels are required on every detection")
    selected = set(select_scenes(len(d.scenes), cfg.fraction_x, seed))
    scenes = []
    for idx, s in enumerate(d.scenes):
        if idx in selected:
            rels = auto_annotate_scene(s, kb, cfg.tau_frac * s.diagonal, d.coarse_of_fine)
            per_det: list[list] = [[] for _ in s.detections]
            for i, j, r in rels:
                per_det[i].append((j, r))
            dets = tuple(replace(det, rel_labels=tuple(per_det[k]))
                         for k, det in enumerate(s.detections))
        else:
            dets = tuple(replace(det, fine_label=None, rel_labels=None) for det in s.detections)
        scenes.append(replace(s, detections=dets))
    record = {
        "seed": seed,
        "fraction": cfg.fraction_x,
        "selected": [d.scenes[i].image_id for i in sorted(selected)],
    }
    return d.with_scenes(scenes), record


def save_selection(record: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(record) + "\n", encoding="utf-8")


def training_examples(d: Dataset, tau_frac: float = DEFAULT_TAU_FRAC) -> list:
    """(features, label) pairs from annotated scenes.

    Positives are the annotated relations; every other ordered pair within tau
    is a no-relation negative. Scenes without annotations are skipped.
    """
    K = len(d.coarse_classes)
    examples = []
    for s in d.scenes:
        dets = s.detections
        if not dets or any(det.rel_labels is None for det in dets):
            continue
        tau = tau_frac * s.diagonal
        labels = {(i, j): r for i, det in enumerate(dets) for j, r in det.rel_labels}
        for i, di in enumerate(dets):
            for j, dj in enumerate(dets):
                if i == j:
                    continue
                if (i, j) in labels:
                    label = labels[(i, j)]
                elif center_distance(di.box, dj.box) <= tau:
                    label = d.no_relation
                else:
                    continue
                examples.append((pair_features(s, i, j, di.coarse, dj.coarse, K), label))
    return examples
