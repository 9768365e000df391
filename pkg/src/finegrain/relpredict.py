"""Pairwise relationship classifier: softmax over geometric and coarse-class features.

Each ordered pair (i, j) is encoded as

    [onehot(coarse_i), onehot(coarse_j),
     dx/W, dy/H, log(w_j/w_i), log(h_j/h_i), iou, dist/diag,
     area_i/(W*H), area_j/(W*H), area(union box)/(W*H), 1]

and scored with one weight row per relation, the last row being no-relation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .scene import Scene, center_distance, iou, union_box

NUM_GEOMETRIC = 10


class DivergedError(RuntimeError):
    """Training produced a non-finite loss."""


def num_features(num_coarse: int) -> int:
    return 2 * num_coarse + NUM_GEOMETRIC


def pair_features(scene: Scene, i: int, j: int, coarse_i: int, coarse_j: int,
                  num_coarse: int) -> np.ndarray:
    if i == j:
        raise ValueError("pair features need two distinct detections")
    a = scene.detections[i].box
    b = scene.detections[j].box
    W, H = scene.width, scene.height
    img_area = W * H
    f = np.zeros(num_features(num_coarse))
    f[coarse_i] = 1.0
    f[num_coarse + coarse_j] = 1.0
    f[2 * num_coarse:] = (
        (b.cx - a.cx) / W,
        (b.cy - a.cy) / H,
        math.log(b.w / a.w),
        math.log(b.h / a.h),
        iou(a, b),
        center_distance(a, b) / scene.diagonal,
        a.area / img_area,
        b.area / img_area,
        union_box(a, b).area / img_area,
        1.0,
    )
    return f


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class RelModel:
    """Weights of shape (L+1, F); row L scores the no-relation label."""

    weights: np.ndarray
    relations: tuple[str, ...]
    num_coarse: int
    history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(self.relations) + 1, num_features(self.num_coarse)):
            raise ValueError(f"weight matrix has shape {w.shape}, expected "
                             f"({len(self.relations) + 1}, {num_features(self.num_coarse)})")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, relations: Sequence[str], num_coarse: int) -> "RelModel":
        return cls(np.zeros((len(relations) + 1, num_features(num_coarse))), tuple(relations),
                   num_coarse)

    @property
    def no_relation(self) -> int:
        return len(self.relations)

    def predict_scene(self, scene: Scene, pairs: Iterable[tuple[int, int]]) -> dict:
        return predict_scene(self, scene, pairs)

    def to_json(self) -> str:
        return json.dumps({
            "relations": list(self.relations),
            "num_coarse": self.num_coarse,
            "weights": self.weights.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "RelModel":
        obj = json.loads(text)
        try:
            return cls(np.array(obj["weights"], dtype=float), tuple(obj["relations"]),
                       int(obj["num_coarse"]))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed model file: {exc}") from None

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RelModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def predict_pair(m: RelModel, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (m.weights.shape[1],):
        raise ValueError(f"feature length {f.shape} does not match model width {m.weights.shape[1]}")
    return softmax(m.weights @ f)


def predict_scene(m: RelModel, scene: Scene, pairs: Iterable[tuple[int, int]]) -> dict:
    """Relation distribution for every requested ordered pair, each computed independently."""
    out = {}
    for i, j in pairs:
        ci = scene.detections[i].coarse
        cj = scene.detections[j].coarse
        out[(i, j)] = predict_pair(m, pair_features(scene, i, j, ci, cj, m.num_coarse))
    return out


def _stack(batch: Sequence) -> tuple[np.ndarray, np.ndarray]:
    if len(batch) == 0:
        raise ValueError("empty batch")
    X = np.stack([np.asarray(f, dtype=float) for f, _ in batch])
    y = np.array([label for _, label in batch], dtype=np.int64)
    return X, y


def _loss_grad(W: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    n = X.shape[0]
    logits = X @ W.T
    logits -= logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits).sum(axis=1))
    nll = log_z - logits[np.arange(n), y]
    loss = nll.mean() + 0.5 * l2 * np.sum(W * W)
    P = np.exp(logits - log_z[:, None])
    P[np.arange(n), y] -= 1.0
    grad = P.T @ X / n + l2 * W
    return float(loss), grad


def loss_and_grad(m: RelModel, batch: Sequence, l2: float = 0.0) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus (l2/2)·||W||² and its gradient with respect to W."""
    X, y = _stack(batch)
    if np.any((y < 0) | (y > m.no_relation)):
        raise ValueError("relation label out of range")
    return _loss_grad(m.weights, X, y, l2)


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 500
    learning_rate: float = 0.5
    l2: float = 1e-4
    seed: int = 0  # unused by full-batch descent; kept for reproducible configs


def train(examples: Sequence, relations: Sequence[str], num_coarse: int,
          config: TrainConfig = TrainConfig()) -> RelModel:
    """Full-batch gradient descent from zero weights.

    The returned model carries the per-iteration loss in ``history``.
    """
    X, y = _stack(examples)
    if X.shape[1] != num_features(num_coarse):
        raise ValueError("feature width does not match num_coarse")
    W = np.zeros((len(relations) + 1, X.shape[1]))
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.iters):
            loss, grad = _loss_grad(W, X, y, config.l2)
            if not math.isfinite(loss):
                raise DivergedError(f"training diverged at iteration {len(history)}")
            history.append(loss)
            W = W - config.learning_rate * grad
    if not np.all(np.isfinite(W)):
        raise DivergedError("training diverged: non-finite weights")
    return RelModel(W, tuple(relations), num_coarse, tuple(history))


def accuracy(m: RelModel, examples: Sequence) -> float:
    X, y = _stack(examples)
    return float(np.mean(np.argmax(X @ m.weights.T, axis=1) == y))
