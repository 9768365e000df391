"""Deterministic synthetic living-room scenes with exact fine labels and relations.

Objects are placed in groups (a seat with an optional table and lamp, a lone
console table, a floor lamp, ...). Placement is rejection-sampled so that every
related pair sits well inside the neighborhood radius and every unrelated pair
of a rule's coarse pattern (lamp/table, table/sofa, table/chair) sits well
outside it. That margin is what makes the automatic annotation exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .scene import Box, Dataset, Detection, Scene, quantize_probs

COARSE_CLASSES = ("chair", "sofacouch", "table", "lamp", "rug")
FINE_CLASSES = ("chair", "sofacouch", "coffee-table", "end-table", "console-table",
                "table-lamp", "floor-lamp", "rug")
COARSE_OF_FINE = ("chair", "sofacouch", "table", "table", "table", "lamp", "lamp", "rug")
RELATIONS = ("on-top-of", "in-front-of", "next-to", "behind")

DEFAULT_KB = """\
# fine := subject-coarse relation object-coarse
table-lamp := lamp on-top-of table
coffee-table := table in-front-of sofacouch
coffee-table := table in-front-of chair
end-table := table next-to sofacouch
end-table := table next-to chair
console-table := table behind sofacouch

default chair := chair
default sofacouch := sofacouch
default table := console-table
default lamp := floor-lamp
default rug := rug
"""

# (subject coarse, object coarse) pairs that some rule mentions
_PATTERNS = {("lamp", "table"), ("table", "sofacouch"), ("table", "chair")}

_SEAT_RELATIONS = {"sofacouch": ("in-front-of", "next-to", "behind", None),
                   "chair": ("in-front-of", "next-to", None)}
_TABLE_FINE = {"in-front-of": "coffee-table", "next-to": "end-table", "behind": "console-table",
               None: "console-table"}


class GenConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    num_scenes: int = 200
    seed: int = 0
    width: float = 1000.0
    height: float = 750.0
    tau_frac: float = 0.25
    # related pairs lie within (1 - margin)·tau, unrelated pattern pairs beyond (1 + margin)·tau
    separation_margin: float = 0.1
    groups: tuple = (1, 3)
    group_weights: dict = field(default_factory=lambda: {
        "sofa_set": 0.4, "chair_set": 0.25, "console": 0.15, "floor_lamp": 0.1, "chair": 0.1})
    p_lamp_on_table: float = 0.5
    p_rug: float = 0.5
    sizes: dict = field(default_factory=lambda: {
        "sofacouch": [[220, 300], [100, 140]],
        "chair": [[80, 120], [100, 140]],
        "coffee-table": [[100, 160], [40, 60]],
        "end-table": [[60, 90], [50, 70]],
        "console-table": [[120, 180], [50, 70]],
        "table-lamp": [[30, 50], [50, 80]],
        "floor-lamp": [[30, 50], [180, 260]],
        "rug": [[300, 450], [80, 140]],
    })
    # offsets in pixels; see _place_table for how each is used
    front_gap: tuple = (40, 90)
    behind_rise: tuple = (10, 30)
    side_gap: tuple = (10, 40)
    lateral_jitter: float = 20.0
    jitter_std: float = 2.0
    temperature: float = 0.25
    score_range: tuple = (0.7, 1.0)
    max_tries: int = 200

    def __post_init__(self):
        if self.num_scenes < 0:
            raise GenConfigError("num_scenes must be non-negative")
        if not (self.width > 0 and self.height > 0):
            raise GenConfigError("image size must be positive")
        if not 0 < self.separation_margin < 1:
            raise GenConfigError("separation_margin must lie in (0, 1)")
        if self.groups[0] < 1 or self.groups[1] < self.groups[0]:
            raise GenConfigError("groups must be a range [lo, hi] with lo >= 1")
        if self.temperature < 0 or self.jitter_std < 0:
            raise GenConfigError("temperature and jitter_std must be non-negative")
        lo, hi = self.score_range
        if not 0 <= lo <= hi <= 1:
            raise GenConfigError("score_range must lie within [0, 1]")
        for name, ((w0, w1), (h0, h1)) in self.sizes.items():
            if not (0 < w0 <= w1 and 0 < h0 <= h1):
                raise GenConfigError(f"invalid size range for {name}")
        # jitter is clipped at 3 std, so a center moves at most 3·sqrt(2)·std
        slack = self.separation_margin * self.tau - 2 * 3 * math.sqrt(2) * self.jitter_std
        if slack <= 0:
            raise GenConfigError("jitter_std too large for the separation margin")

    @property
    def tau(self) -> float:
        return self.tau_frac * math.hypot(self.width, self.height)

    @classmethod
    def from_json(cls, text: str, **overrides) -> "GenConfig":
        raw = json.loads(text) if text.strip() else {}
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise GenConfigError(f"unknown config fields: {sorted(unknown)}")
        for key in ("groups", "front_gap", "behind_rise", "side_gap", "score_range"):
            if key in raw:
                raw[key] = tuple(raw[key])
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def empty_dataset() -> Dataset:
    return Dataset(COARSE_CLASSES, FINE_CLASSES, RELATIONS,
                   tuple(COARSE_CLASSES.index(c) for c in COARSE_OF_FINE))


class _Obj:
    __slots__ = ("fine", "coarse", "cx", "cy", "w", "h")

    def __init__(self, fine, cx, cy, w, h):
        self.fine = fine
        self.coarse = COARSE_OF_FINE[FINE_CLASSES.index(fine)]
        self.cx, self.cy, self.w, self.h = cx, cy, w, h


def _size(cfg: GenConfig, rng, fine: str):
    (w0, w1), (h0, h1) = cfg.sizes[fine]
    return rng.uniform(w0, w1), rng.uniform(h0, h1)


def _place_table(cfg: GenConfig, rng, seat: _Obj, relation: Optional[str]) -> _Obj:
    fine = _TABLE_FINE[relation]
    w, h = _size(cfg, rng, fine)
    if relation == "in-front-of":
        # closer to the camera: below the seat in the image, horizontally centered
        cx = seat.cx + rng.uniform(-cfg.lateral_jitter, cfg.lateral_jitter)
        cy = seat.cy + seat.h / 2 + rng.uniform(*cfg.front_gap)
    elif relation == "behind":
        # farther away: center just above the seat's top edge
        cx = seat.cx + rng.uniform(-cfg.lateral_jitter, cfg.lateral_jitter)
        cy = seat.cy - seat.h / 2 - rng.uniform(*cfg.behind_rise)
    else:
        # beside the seat, standing on the same floor line
        side = rng.choice((-1.0, 1.0))
        cx = seat.cx + side * (seat.w / 2 + w / 2 + rng.uniform(*cfg.side_gap))
        cy = seat.cy + seat.h / 2 - h / 2 + rng.uniform(-10, 10)
    return _Obj(fine, cx, cy, w, h)


def _lamp_on(cfg: GenConfig, rng, table: _Obj) -> _Obj:
    w, h = _size(cfg, rng, "table-lamp")
    cx = table.cx + rng.uniform(-0.3, 0.3) * table.w
    cy = table.cy - table.h / 2 - h / 2 + rng.uniform(-3, 3)
    return _Obj("table-lamp", cx, cy, w, h)


def _make_group(cfg: GenConfig, rng, kind: str):
    """Objects of one group around the origin plus its (subject, object, relation) links."""
    objs: list[_Obj] = []
    rels: list[tuple[int, int, str]] = []
    if kind in ("sofa_set", "chair_set"):
        seat_fine = "sofacouch" if kind == "sofa_set" else "chair"
        w, h = _size(cfg, rng, seat_fine)
        objs.append(_Obj(seat_fine, 0.0, 0.0, w, h))
        options = _SEAT_RELATIONS[seat_fine]
        relation = options[rng.integers(len(options))]
        if relation is not None:
            objs.append(_place_table(cfg, rng, objs[0], relation))
            rels.append((1, 0, relation))
    elif kind == "console":
        w, h = _size(cfg, rng, "console-table")
        objs.append(_Obj("console-table", 0.0, 0.0, w, h))
    elif kind == "floor_lamp":
        w, h = _size(cfg, rng, "floor-lamp")
        objs.append(_Obj("floor-lamp", 0.0, 0.0, w, h))
    elif kind == "chair":
        w, h = _size(cfg, rng, "chair")
        objs.append(_Obj("chair", 0.0, 0.0, w, h))
    else:
        raise GenConfigError(f"unknown group kind {kind!r}")
    tables = [k for k, o in enumerate(objs) if o.coarse == "table"]
    if tables and rng.random() < cfg.p_lamp_on_table:
        objs.append(_lamp_on(cfg, rng, objs[tables[0]]))
        rels.append((len(objs) - 1, tables[0], "on-top-of"))
    return objs, rels


def _iou(a: _Obj, b: _Obj) -> float:
    iw = min(a.cx + a.w / 2, b.cx + b.w / 2) - max(a.cx - a.w / 2, b.cx - b.w / 2)
    ih = min(a.cy + a.h / 2, b.cy + b.h / 2) - max(a.cy - a.h / 2, b.cy - b.h / 2)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def _compatible(cfg: GenConfig, placed: list[_Obj], new: list[_Obj]) -> bool:
    far = (1 + cfg.separation_margin) * cfg.tau
    for a in placed:
        for b in new:
            if ((a.coarse, b.coarse) in _PATTERNS or (b.coarse, a.coarse) in _PATTERNS) \
                    and math.hypot(a.cx - b.cx, a.cy - b.cy) < far:
                return False
            if a.coarse == b.coarse and _iou(a, b) > 0.3:
                return False
    return True


def _place(cfg: GenConfig, rng, placed: list[_Obj], group: list[_Obj]) -> Optional[list[_Obj]]:
    pad = 3 * cfg.jitter_std + 2.0
    x0 = min(o.cx - o.w / 2 for o in group) - pad
    x1 = max(o.cx + o.w / 2 for o in group) + pad
    y0 = min(o.cy - o.h / 2 for o in group) - pad
    y1 = max(o.cy + o.h / 2 for o in group) + pad
    if x1 - x0 > cfg.width or y1 - y0 > cfg.height:
        return None
    for _ in range(cfg.max_tries):
        tx = rng.uniform(-x0, cfg.width - x1)
        ty = rng.uniform(-y0, cfg.height - y1)
        moved = [_Obj(o.fine, o.cx + tx, o.cy + ty, o.w, o.h) for o in group]
        if _compatible(cfg, placed, moved):
            return moved
    return None


def _coarse_probs(cfg: GenConfig, rng, coarse: int) -> tuple[float, ...]:
    k = len(COARSE_CLASSES)
    noise = rng.uniform(0.0, 0.5, size=k)
    if cfg.temperature == 0:
        p = np.zeros(k)
        p[coarse] = 1.0
        return quantize_probs(p)
    logits = noise.copy()
    logits[coarse] += 1.0
    z = logits / cfg.temperature
    p = np.exp(z - z.max())
    return quantize_probs(p / p.sum())


def _r6(x: float) -> float:
    return round(float(x), 6)


def gen_scene(cfg: GenConfig, rng: np.random.Generator, image_id: str = "scene") -> Scene:
    """One scene with fine labels and ground-truth relations on every detection."""
    kinds = list(cfg.group_weights)
    weights = np.array([cfg.group_weights[k] for k in kinds], dtype=float)
    weights /= weights.sum()
    placed: list[_Obj] = []
    links: list[tuple[int, int, str]] = []
    for _ in range(rng.integers(cfg.groups[0], cfg.groups[1] + 1)):
        group, rels = _make_group(cfg, rng, kinds[rng.choice(len(kinds), p=weights)])
        moved = _place(cfg, rng, placed, group)
        if moved is None:
            continue
        base = len(placed)
        placed.extend(moved)
        links.extend((base + i, base + j, r) for i, j, r in rels)
    if rng.random() < cfg.p_rug:
        w, h = _size(cfg, rng, "rug")
        moved = _place(cfg, rng, placed, [_Obj("rug", 0.0, 0.0, w, h)])
        if moved is not None:
            placed.extend(moved)

    rel_of: list[list] = [[] for _ in placed]
    for i, j, r in links:
        rel_of[i].append((j, RELATIONS.index(r)))
    lim = 3 * cfg.jitter_std
    dets = []
    for k, o in enumerate(placed):
        jit = np.clip(rng.normal(0.0, cfg.jitter_std, size=4), -lim, lim) if cfg.jitter_std else np.zeros(4)
        coarse = COARSE_CLASSES.index(o.coarse)
        box = Box(_r6(o.cx + jit[0]), _r6(o.cy + jit[1]),
                  _r6(max(o.w + jit[2], 1.0)), _r6(max(o.h + jit[3], 1.0)))
        score = _r6(rng.uniform(*cfg.score_range))
        dets.append(Detection(box, score, _coarse_probs(cfg, rng, coarse),
                              FINE_CLASSES.index(o.fine), tuple(sorted(rel_of[k]))))
    return Scene(image_id, float(cfg.width), float(cfg.height), tuple(dets))


def scene_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for scene `index`, so scenes can be generated in any order."""
    return np.random.default_rng([seed, index])


def gen_dataset(cfg: GenConfig) -> Dataset:
    scenes = [gen_scene(cfg, scene_rng(cfg.seed, k), f"s{cfg.seed}-{k:05d}")
              for k in range(cfg.num_scenes)]
    return empty_dataset().with_scenes(scenes)


def write_default_kb(path: Union[str, Path]) -> None:
    Path(path).write_text(DEFAULT_KB, encoding="utf-8")
