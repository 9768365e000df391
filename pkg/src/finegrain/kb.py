"""Relational knowledge base: (fine, subject coarse, object coarse, relation) rules.

Text format, one statement per line, ``#`` starts a comment::

    table-lamp := lamp on-top-of table
    default lamp := floor-lamp
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

from .scene import Dataset


class KnowledgeBaseError(ValueError):
    pass


class KbTuple(NamedTuple):
    fine: int
    subj_coarse: int
    obj_coarse: int
    relation: int


class Neighbor(NamedTuple):
    """One neighbor of a query subject: its coarse class, the relation, and its support."""

    coarse: int
    relation: int
    support: float


class KbMatch(NamedTuple):
    fine: int
    support: float
    # index into the neighbor list that licensed the label; None for the default fallback
    witness: Optional[int]


@dataclass(frozen=True)
class KnowledgeBase:
    tuples: frozenset
    defaults: tuple[int, ...]
    fine_classes: tuple[str, ...]
    no_relation: int

    def __post_init__(self):
        # pattern index: (subject coarse, object coarse, relation) -> fine classes
        index: dict = {}
        for t in self.tuples:
            index.setdefault((t.subj_coarse, t.obj_coarse, t.relation), set()).add(t.fine)
        object.__setattr__(self, "_index", index)

    def fine_for(self, subj_coarse: int, obj_coarse: int, relation: int) -> frozenset:
        return frozenset(self._index.get((subj_coarse, obj_coarse, relation), ()))

    def patterns(self) -> set:
        """(subject coarse, object coarse) pairs mentioned by any rule."""
        return {(t.subj_coarse, t.obj_coarse) for t in self.tuples}


def _lookup(names: Sequence[str], name: str, kind: str, lineno: int) -> int:
    try:
        return names.index(name)
    except ValueError:
        raise KnowledgeBaseError(f"line {lineno}: unknown {kind} {name!r}") from None


def parse_kb(text: str, d: Dataset) -> KnowledgeBase:
    """Parse KB text against the class and relation vocabulary of `d`."""
    tuples = set()
    defaults: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":=" not in line:
            raise KnowledgeBaseError(f"line {lineno}: expected ':=' in {raw.strip()!r}")
        lhs, rhs = (part.split() for part in line.split(":=", 1))
        if len(lhs) == 2 and lhs[0] == "default":
            if len(rhs) != 1:
                raise KnowledgeBaseError(f"line {lineno}: expected 'default <coarse> := <fine>'")
            coarse = _lookup(d.coarse_classes, lhs[1], "coarse class", lineno)
            fine = _lookup(d.fine_classes, rhs[0], "fine class", lineno)
            if coarse in defaults:
                raise KnowledgeBaseError(f"line {lineno}: duplicate default for {lhs[1]!r}")
            if d.coarse_of_fine[fine] != coarse:
                raise KnowledgeBaseError(
                    f"line {lineno}: default {rhs[0]!r} does not refine {lhs[1]!r}")
            defaults[coarse] = fine
        elif len(lhs) == 1 and len(rhs) == 3:
            fine = _lookup(d.fine_classes, lhs[0], "fine class", lineno)
            subj = _lookup(d.coarse_classes, rhs[0], "coarse class", lineno)
            rel = _lookup(d.relations, rhs[1], "relation", lineno)
            obj = _lookup(d.coarse_classes, rhs[2], "coarse class", lineno)
            if d.coarse_of_fine[fine] != subj:
                parent = d.coarse_classes[d.coarse_of_fine[fine]]
                raise KnowledgeBaseError(
                    f"line {lineno}: {lhs[0]!r} refines {parent!r}, not {rhs[0]!r}")
            t = KbTuple(fine, subj, obj, rel)
            if t in tuples:
                raise KnowledgeBaseError(f"line {lineno}: duplicate rule")
            tuples.add(t)
        else:
            raise KnowledgeBaseError(
                f"line {lineno}: expected '<fine> := <coarse> <relation> <coarse>'"
                " or 'default <coarse> := <fine>'")
    missing = [c for k, c in enumerate(d.coarse_classes) if k not in defaults]
    if missing:
        raise KnowledgeBaseError(f"missing default for coarse class {missing[0]!r}")
    return KnowledgeBase(frozenset(tuples), tuple(defaults[k] for k in range(len(d.coarse_classes))),
                         d.fine_classes, d.no_relation)


def load_kb(path: Union[str, Path], d: Dataset) -> KnowledgeBase:
    return parse_kb(Path(path).read_text(encoding="utf-8"), d)


def kb_contains(kb: KnowledgeBase, fine: int, subj_coarse: int, obj_coarse: int,
                relation: int) -> bool:
    return KbTuple(fine, subj_coarse, obj_coarse, relation) in kb.tuples


def kb_match(kb: KnowledgeBase, subject_coarse: int, neighbors: Sequence) -> KbMatch:
    """Resolve the fine class of a subject from its neighborhood.

    A fine class is licensed when some neighbor's (coarse, relation) completes a
    rule for it. Its support is the largest support among licensing neighbors;
    the best-supported class wins, ties going to the smallest class name. With
    no licensed class the coarse default is returned with support 1.
    """
    best: dict[int, tuple[float, int]] = {}
    for k, (coarse, relation, support) in enumerate(neighbors):
        if relation == kb.no_relation:
            continue
        for fine in kb.fine_for(subject_coarse, coarse, relation):
            if fine not in best or support > best[fine][0]:
                best[fine] = (support, k)
    if not best:
        return KbMatch(kb.defaults[subject_coarse], 1.0, None)
    fine = min(best, key=lambda f: (-best[f][0], kb.fine_classes[f]))
    support, witness = best[fine]
    return KbMatch(fine, support, witness)


def kb_query(kb: KnowledgeBase, subject_coarse: int, neighbors: Sequence) -> tuple[int, float]:
    """(fine class, support) for a subject given (coarse, relation, support) neighbors."""
    m = kb_match(kb, subject_coarse, neighbors)
    return m.fine, m.support
