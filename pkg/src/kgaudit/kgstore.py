"""Triple-file loading, vocabularies, membership index and basic stats.

Triple files are UTF-8, one ``head<TAB>relation<TAB>tail`` per line, no
header. Ids are dense integers assigned by first appearance; everything
downstream works on ids only. Label files carry one 0/1 per line aligned
with the de-duplicated triple order.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed triple or label file."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass
class KnowledgeGraph:
    """Immutable-by-convention container; safe for concurrent reads."""

    entity_names: list[str]
    relation_names: list[str]
    triples: np.ndarray  # (T, 3) int64 columns head, relation, tail
    error_flags: np.ndarray | None = None  # bool (T,), True = known error
    duplicates_dropped: int = 0
    triple_set: frozenset = field(init=False)

    def __post_init__(self):
        self.triples = np.ascontiguousarray(self.triples, dtype=np.int64)
        if self.triples.ndim != 2 or self.triples.shape[1] != 3:
            raise ValueError("triples must be a (T, 3) array")
        if self.error_flags is not None:
            self.error_flags = np.asarray(self.error_flags, dtype=bool)
            if self.error_flags.shape != (len(self.triples),):
                raise GraphFormatError(
                    f"{self.error_flags.size} error flags for {len(self.triples)} triples")
        self.triple_set = frozenset(map(tuple, self.triples.tolist()))
        if len(self.triple_set) != len(self.triples):
            raise ValueError("duplicate triples in graph")
        if len(self.triples) and (
                self.triples[:, [0, 2]].max() >= len(self.entity_names)
                or self.triples[:, 1].max() >= len(self.relation_names)
                or self.triples.min() < 0):
            raise ValueError("triple ids outside vocabulary range")

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    @property
    def heads(self) -> np.ndarray:
        return self.triples[:, 0]

    @property
    def relations(self) -> np.ndarray:
        return self.triples[:, 1]

    @property
    def tails(self) -> np.ndarray:
        return self.triples[:, 2]

    def triple(self, i: int) -> Triple:
        return Triple(*self.triples[i])

    def __contains__(self, hrt) -> bool:
        return tuple(hrt) in self.triple_set


def load_graph(path, labels_path=None) -> KnowledgeGraph:
    """Parse a triple file; ids by first appearance, duplicate lines collapsed."""
    entities: dict[str, int] = {}
    relations: dict[str, int] = {}
    rows: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            h = entities.setdefault(parts[0], len(entities))
            r = relations.setdefault(parts[1], len(relations))
            t = entities.setdefault(parts[2], len(entities))
            key = (h, r, t)
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            rows.append(key)
    if duplicates:
        logger.warning("%s: collapsed %d duplicate triple lines", path, duplicates)

    flags = None
    if labels_path is not None:
        flags = load_labels(labels_path)
        if len(flags) != len(rows):
            raise GraphFormatError(
                f"{labels_path}: {len(flags)} labels for {len(rows)} de-duplicated triples")

    return KnowledgeGraph(
        entity_names=list(entities),
        relation_names=list(relations),
        triples=np.array(rows, dtype=np.int64).reshape(-1, 3),
        error_flags=flags,
        duplicates_dropped=duplicates,
    )


def write_graph(g: KnowledgeGraph, path, labels_path=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in g.triples:
            fh.write(f"{g.entity_names[h]}\t{g.relation_names[r]}\t{g.entity_names[t]}\n")
    if labels_path is not None:
        if g.error_flags is None:
            raise ValueError("graph has no error flags to write")
        write_labels(g.error_flags, labels_path)


def load_labels(path) -> np.ndarray:
    flags = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line not in ("0", "1"):
                raise GraphFormatError(f"{path}:{lineno}: expected 0 or 1, got {line!r}")
            flags.append(line == "1")
    return np.array(flags, dtype=bool)


def write_labels(flags: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in flags:
            fh.write("1\n" if f else "0\n")


@dataclass(frozen=True)
class GraphStats:
    n_entities: int
    n_relations: int
    n_triples: int
    mean_in_degree: float


def graph_stats(g: KnowledgeGraph) -> GraphStats:
    """Counts plus mean in-degree (tail occurrences per entity, averaged)."""
    if len(g) == 0:
        raise ValueError("graph_stats of an empty graph")
    return GraphStats(
        n_entities=g.n_entities,
        n_relations=g.n_relations,
        n_triples=len(g),
        mean_in_degree=len(g) / g.n_entities,
    )


def fingerprint(g: KnowledgeGraph) -> str:
    """Content hash over vocabularies and triple ids (cache/manifest key)."""
    h = hashlib.sha256()
    for name in g.entity_names:
        h.update(name.encode())
        h.update(b"\x00")
    h.update(b"\x01")
    for name in g.relation_names:
        h.update(name.encode())
        h.update(b"\x00")
    h.update(b"\x01")
    h.update(np.ascontiguousarray(g.triples).tobytes())
    return h.hexdigest()
