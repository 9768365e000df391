"""Boxes, detections, scenes and the JSONL dataset format."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

PROB_TOL = 1e-6
PROB_RENORM_TOL = 1e-3
CLAMP_TOL = 1e-5
DEFAULT_PROVENANCE = "default"


class DatasetError(ValueError):
    """Raised on malformed or inconsistent dataset input."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in center/size form, pixel units."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")

    @classmethod
    def from_corners(cls, x_min: float, y_min: float, x_max: float, y_max: float) -> "Box":
        return cls((x_min + x_max) / 2, (y_min + y_max) / 2, x_max - x_min, y_max - y_min)

    @property
    def x_min(self) -> float:
        return self.cx - self.w / 2

    @property
    def x_max(self) -> float:
        return self.cx + self.w / 2

    @property
    def y_min(self) -> float:
        return self.cy - self.h / 2

    @property
    def y_max(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        return self.x_min, self.y_min, self.x_max, self.y_max


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 when they do not overlap."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (n, 4) and (m, 4) arrays of corner boxes."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def union_box(a: Box, b: Box) -> Box:
    """Tightest axis-aligned box covering both inputs."""
    return Box.from_corners(
        min(a.x_min, b.x_min), min(a.y_min, b.y_min),
        max(a.x_max, b.x_max), max(a.y_max, b.y_max),
    )


def center_distance(a: Box, b: Box) -> float:
    return math.hypot(b.cx - a.cx, b.cy - a.cy)


@dataclass(frozen=True)
class Provenance:
    """Which neighbor and relation licensed a predicted fine label."""

    neighbor: int
    relation: int
    p: float


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    coarse_probs: tuple[float, ...]
    fine_label: Optional[int] = None
    # None means "not annotated"; an empty tuple means "annotated, no relations".
    rel_labels: Optional[tuple[tuple[int, int], ...]] = None
    provenance: Union[Provenance, str, None] = None

    @property
    def coarse(self) -> int:
        """Predicted coarse class (argmax of the probability vector, first on ties)."""
        return int(np.argmax(self.coarse_probs))


@dataclass(frozen=True)
class Scene:
    image_id: str
    width: float
    height: float
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"scene extent must be positive, got {self.width}x{self.height}")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def subset(self, keep: Sequence[int]) -> "Scene":
        """Scene restricted to `keep` (in that order), with relation targets remapped."""
        remap = {old: new for new, old in enumerate(keep)}
        dets = []
        for old in keep:
            det = self.detections[old]
            rels = det.rel_labels
            if rels is not None:
                rels = tuple((remap[j], r) for j, r in rels if j in remap)
            dets.append(replace(det, rel_labels=rels))
        return replace(self, detections=tuple(dets))


@dataclass(frozen=True)
class Dataset:
    coarse_classes: tuple[str, ...]
    fine_classes: tuple[str, ...]
    relations: tuple[str, ...]
    coarse_of_fine: tuple[int, ...]
    scenes: tuple[Scene, ...] = field(default=())

    def __post_init__(self):
        for kind, names in (("coarse class", self.coarse_classes),
                            ("fine class", self.fine_classes),
                            ("relation", self.relations)):
            for name in names:
                if not name or any(ch.isspace() for ch in name):
                    raise DatasetError(f"invalid {kind} name {name!r}")
            if len(set(names)) != len(names):
                raise DatasetError(f"duplicate {kind} names")
        if len(self.coarse_of_fine) != len(self.fine_classes):
            raise DatasetError("coarse_of_fine must cover every fine class")
        if any(not 0 <= c < len(self.coarse_classes) for c in self.coarse_of_fine):
            raise DatasetError("coarse_of_fine references an unknown coarse class")

    @property
    def num_relations(self) -> int:
        """L, the number of real relations; index L is the no-relation label."""
        return len(self.relations)

    @property
    def no_relation(self) -> int:
        return len(self.relations)

    def same_header(self, other: "Dataset") -> bool:
        return (self.coarse_classes == other.coarse_classes
                and self.fine_classes == other.fine_classes
                and self.relations == other.relations
                and self.coarse_of_fine == other.coarse_of_fine)

    def with_scenes(self, scenes: Iterable[Scene]) -> "Dataset":
        return replace(self, scenes=tuple(scenes))


# ---------------------------------------------------------------------------
# serialization

def quantize_probs(probs: Sequence[float], digits: int = 6) -> tuple[float, ...]:
    """Round a probability vector to `digits` decimals so that it still sums to 1.

    Largest-remainder rounding on integer units; ties go to the lower index.
    """
    unit = 10 ** digits
    p = np.asarray(probs, dtype=float)
    p = p / p.sum()
    scaled = p * unit
    # the small offset keeps already-quantized inputs fixed under re-quantization
    units = np.floor(scaled + 1e-6).astype(np.int64)
    short = unit - int(units.sum())
    if short > 0:
        order = sorted(range(len(p)), key=lambda k: (-(scaled[k] - units[k]), k))
        for k in order[:short]:
            units[k] += 1
    return tuple(int(u) / unit for u in units)


def _fmt_real(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_real(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(k, ensure_ascii=False)}:{_encode(v)}"
                              for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def header_record(d: Dataset) -> dict:
    return {
        "type": "header",
        "coarse_classes": list(d.coarse_classes),
        "fine_classes": list(d.fine_classes),
        "relations": list(d.relations),
        "coarse_of_fine": {f: d.coarse_classes[c]
                           for f, c in zip(d.fine_classes, d.coarse_of_fine)},
    }


def detection_record(d: Dataset, det: Detection) -> dict:
    rec = {
        "box": [det.box.cx, det.box.cy, det.box.w, det.box.h],
        "score": float(det.score),
        "coarse_probs": list(quantize_probs(det.coarse_probs)),
    }
    if det.fine_label is not None:
        rec["fine_label"] = d.fine_classes[det.fine_label]
    if det.rel_labels is not None:
        rec["rels"] = [[j, d.relations[r]] for j, r in det.rel_labels]
    if det.provenance is not None:
        if isinstance(det.provenance, Provenance):
            pv = det.provenance
            rec["provenance"] = {"neighbor": pv.neighbor, "relation": d.relations[pv.relation],
                                 "p": float(pv.p)}
        else:
            rec["provenance"] = DEFAULT_PROVENANCE
    return rec


def scene_record(d: Dataset, scene: Scene) -> dict:
    return {
        "type": "scene",
        "image_id": scene.image_id,
        "width": float(scene.width),
        "height": float(scene.height),
        "detections": [detection_record(d, det) for det in scene.detections],
    }


def write_dataset(d: Dataset, stream: IO) -> None:
    """Write `d` in normal form: compact JSON, fixed key order, 6-digit reals."""
    lines = [_encode(header_record(d))]
    lines.extend(_encode(scene_record(d, s)) for s in d.scenes)
    data = "".join(line + "\n" for line in lines)
    if isinstance(stream, io.TextIOBase):
        stream.write(data)
    else:
        stream.write(data.encode("utf-8"))


def dumps_dataset(d: Dataset) -> bytes:
    buf = io.BytesIO()
    write_dataset(d, buf)
    return buf.getvalue()


def save_dataset(d: Dataset, path: Union[str, Path]) -> None:
    with open(path, "wb") as f:
        write_dataset(d, f)


# ---------------------------------------------------------------------------
# parsing

def _require(cond: bool, message: str, line: int) -> None:
    if not cond:
        raise DatasetError(message, line)


def _real(value, what: str, line: int) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{what} must be a number", line)
    _require(math.isfinite(value), f"{what} must be finite", line)
    return float(value)


def _name_list(rec: dict, key: str, line: int) -> tuple[str, ...]:
    names = rec.get(key)
    _require(isinstance(names, list) and all(isinstance(n, str) for n in names),
             f"header field {key!r} must be a list of strings", line)
    return tuple(names)


def _parse_header(rec: dict, line: int) -> Dataset:
    _require(rec.get("type") == "header", "first line must be the header record", line)
    coarse = _name_list(rec, "coarse_classes", line)
    fine = _name_list(rec, "fine_classes", line)
    relations = _name_list(rec, "relations", line)
    mapping = rec.get("coarse_of_fine")
    _require(isinstance(mapping, dict), "header field 'coarse_of_fine' must be an object", line)
    coarse_index = {n: k for k, n in enumerate(coarse)}
    for f_name, c_name in mapping.items():
        _require(f_name in fine, f"coarse_of_fine names unknown fine class {f_name!r}", line)
        _require(c_name in coarse_index, f"unknown coarse class {c_name!r}", line)
    missing = [f for f in fine if f not in mapping]
    _require(not missing, f"coarse_of_fine missing fine classes {missing}", line)
    try:
        return Dataset(coarse, fine, relations, tuple(coarse_index[mapping[f]] for f in fine))
    except DatasetError as exc:
        raise DatasetError(str(exc), line) from None


def _clamp_box(vals: list, width: float, height: float, line: int) -> Box:
    cx, cy, w, h = vals
    _require(w > 0 and h > 0, "box width and height must be positive", line)
    x0, y0, x1, y1 = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
    if x0 < -CLAMP_TOL or y0 < -CLAMP_TOL or x1 > width + CLAMP_TOL or y1 > height + CLAMP_TOL:
        x0, x1 = max(x0, 0.0), min(x1, width)
        y0, y1 = max(y0, 0.0), min(y1, height)
        _require(x1 > x0 and y1 > y0, "box lies entirely outside the image", line)
        return Box.from_corners(x0, y0, x1, y1)
    return Box(cx, cy, w, h)


def _parse_probs(raw, num_coarse: int, line: int) -> tuple[float, ...]:
    _require(isinstance(raw, list) and len(raw) == num_coarse,
             f"coarse_probs must have {num_coarse} entries", line)
    probs = [_real(p, "coarse_probs entry", line) for p in raw]
    _require(all(p >= 0 for p in probs), "coarse_probs entries must be non-negative", line)
    total = math.fsum(probs)
    _require(abs(total - 1.0) <= PROB_RENORM_TOL,
             f"coarse_probs sum to {total:.6g}, expected 1", line)
    if abs(total - 1.0) > PROB_TOL:
        probs = [p / total for p in probs]
    return tuple(probs)


def _parse_detection(d: Dataset, rec, index: int, count: int, scene_w: float, scene_h: float,
                     line: int) -> Detection:
    _require(isinstance(rec, dict), "detection must be an object", line)
    box = rec.get("box")
    _require(isinstance(box, list) and len(box) == 4, "box must be [cx, cy, w, h]", line)
    box = _clamp_box([_real(v, "box coordinate", line) for v in box], scene_w, scene_h, line)
    score = _real(rec.get("score"), "score", line)
    _require(0.0 <= score <= 1.0, "score must lie in [0, 1]", line)
    probs = _parse_probs(rec.get("coarse_probs"), len(d.coarse_classes), line)

    fine = rec.get("fine_label")
    if fine is not None:
        _require(isinstance(fine, str) and fine in d.fine_classes,
                 f"unknown fine class {fine!r}", line)
        fine = d.fine_classes.index(fine)

    rels = rec.get("rels")
    if rels is not None:
        _require(isinstance(rels, list), "rels must be a list", line)
        parsed = []
        for item in rels:
            _require(isinstance(item, list) and len(item) == 2, "rel must be [index, relation]", line)
            j, name = item
            _require(isinstance(j, int) and not isinstance(j, bool) and 0 <= j < count and j != index,
                     f"rel target {j!r} does not reference another detection in the scene", line)
            _require(name in d.relations, f"unknown relation {name!r}", line)
            parsed.append((j, d.relations.index(name)))
        rels = tuple(parsed)

    prov = rec.get("provenance")
    if prov is not None:
        if prov == DEFAULT_PROVENANCE:
            pass
        else:
            _require(isinstance(prov, dict) and set(prov) == {"neighbor", "relation", "p"},
                     "provenance must be 'default' or {neighbor, relation, p}", line)
            j = prov["neighbor"]
            _require(isinstance(j, int) and 0 <= j < count and j != index,
                     "provenance neighbor must reference another detection", line)
            _require(prov["relation"] in d.relations,
                     f"unknown relation {prov['relation']!r}", line)
            p = _real(prov["p"], "provenance p", line)
            _require(0.0 <= p <= 1.0, "provenance p must lie in [0, 1]", line)
            prov = Provenance(j, d.relations.index(prov["relation"]), p)
    return Detection(box, score, probs, fine, rels, prov)


def _parse_scene(d: Dataset, rec: dict, line: int) -> Scene:
    _require(rec.get("type") == "scene", "expected a scene record", line)
    image_id = rec.get("image_id")
    _require(isinstance(image_id, str) and image_id != "", "image_id must be a nonempty string", line)
    width = _real(rec.get("width"), "width", line)
    height = _real(rec.get("height"), "height", line)
    _require(width > 0 and height > 0, "width and height must be positive", line)
    dets = rec.get("detections", [])
    _require(isinstance(dets, list), "detections must be a list", line)
    parsed = tuple(_parse_detection(d, det, k, len(dets), width, height, line)
                   for k, det in enumerate(dets))
    return Scene(image_id, width, height, parsed)


def parse_dataset(stream: Union[IO, bytes, str]) -> Dataset:
    """Parse and validate a JSONL dataset from a binary/text stream or raw bytes."""
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    header = None
    scenes = []
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise DatasetError("not valid UTF-8", lineno) from None
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed JSON ({exc.msg})", lineno) from None
        _require(isinstance(rec, dict), "each line must be a JSON object", lineno)
        if header is None:
            header = _parse_header(rec, lineno)
        else:
            scenes.append(_parse_scene(header, rec, lineno))
    if header is None:
        raise DatasetError("empty input: missing header line", 1)
    return header.with_scenes(scenes)


def load_dataset(path: Union[str, Path]) -> Dataset:
    with open(path, "rb") as f:
        return parse_dataset(f)
