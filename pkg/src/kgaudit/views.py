"""Triple-level graph views and fixed fan-out neighbor sampling.

Each triple becomes a node in two views: the head view links triples that
contain the anchor's head entity (in either slot), the tail view links
triples that contain the anchor's tail entity. Neighbor lists have a fixed
length; slot 0 is always the anchor itself so an isolated triple still
aggregates its own code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .kgstore import KnowledgeGraph, fingerprint


@dataclass
class TripleViewGraph:
    head_view: np.ndarray  # (T, m) int64 triple indices, column 0 = self
    tail_view: np.ndarray
    fan_out: int

    def __post_init__(self):
        if self.head_view.shape != self.tail_view.shape:
            raise ValueError("view shapes differ")
        if self.head_view.shape[1] != self.fan_out:
            raise ValueError("fan_out does not match neighbor list width")

    def __len__(self) -> int:
        return len(self.head_view)


def occurrence_index(g: KnowledgeGraph) -> tuple[np.ndarray, np.ndarray]:
    """CSR entity -> sorted triple ids containing it (reflexive triples once)."""
    tri = np.arange(len(g), dtype=np.int64)
    distinct_tail = g.tails != g.heads
    ents = np.concatenate([g.heads, g.tails[distinct_tail]])
    owners = np.concatenate([tri, tri[distinct_tail]])
    order = np.lexsort((owners, ents))
    counts = np.bincount(ents, minlength=g.n_entities)
    indptr = np.zeros(g.n_entities + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, owners[order]


def view_candidates(g: KnowledgeGraph) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per triple: ids linked through its head entity / its tail entity (self excluded)."""
    indptr, indices = occurrence_index(g)

    def pool(entity: int, self_id: int) -> np.ndarray:
        occ = indices[indptr[entity]:indptr[entity + 1]]
        return occ[occ != self_id]

    head_cands = [pool(h, i) for i, h in enumerate(g.heads)]
    tail_cands = [pool(t, i) for i, t in enumerate(g.tails)]
    return head_cands, tail_cands


def neighbor_budget(g: KnowledgeGraph) -> int:
    """Average combined candidate-pool size over all triples, at least 1."""
    if len(g) == 0:
        raise ValueError("neighbor budget of an empty graph")
    indptr, indices = occurrence_index(g)
    sizes = backend.union_pool_sizes(indptr, indices,
                                     np.ascontiguousarray(g.heads),
                                     np.ascontiguousarray(g.tails))
    return max(1, round(float(sizes.mean())))


def build_views(g: KnowledgeGraph, m: int | None = None, seed: int = 0) -> TripleViewGraph:
    """Sample fixed fan-out neighbor lists for both views.

    Sampling is without replacement when the candidate pool is large enough,
    with replacement otherwise; an empty pool pads with the anchor itself.
    """
    if len(g) == 0:
        raise ValueError("cannot build views of an empty graph")
    if m is None:
        m = neighbor_budget(g)
    if m < 1:
        raise ValueError(f"fan_out must be >= 1, got {m}")

    rng = np.random.default_rng(seed)
    head_cands, tail_cands = view_candidates(g)
    head_view = np.empty((len(g), m), dtype=np.int64)
    tail_view = np.empty((len(g), m), dtype=np.int64)
    for i in range(len(g)):
        _fill_row(head_view[i], i, head_cands[i], m, rng)
        _fill_row(tail_view[i], i, tail_cands[i], m, rng)
    return TripleViewGraph(head_view=head_view, tail_view=tail_view, fan_out=m)


def _fill_row(row: np.ndarray, anchor: int, pool: np.ndarray, m: int,
              rng: np.random.Generator) -> None:
    row[0] = anchor
    k = m - 1
    if k == 0:
        return
    if pool.size == 0:
        row[1:] = anchor
    elif pool.size >= k:
        row[1:] = rng.choice(pool, size=k, replace=False)
    else:
        row[1:] = rng.choice(pool, size=k, replace=True)


def save_views(vg: TripleViewGraph, path, g: KnowledgeGraph, seed: int) -> None:
    """Cache neighbor lists keyed by (graph hash, fan_out, seed)."""
    np.savez(path, head_view=vg.head_view, tail_view=vg.tail_view,
             fan_out=np.int64(vg.fan_out), n_triples=np.int64(len(vg)),
             graph_sha=np.bytes_(fingerprint(g).encode()), seed=np.int64(seed))


def load_views(path, g: KnowledgeGraph | None = None) -> TripleViewGraph:
    with np.load(path) as data:
        if g is not None:
            stored = bytes(data["graph_sha"]).decode()
            if stored != fingerprint(g):
                raise ValueError(f"{path}: cached views were built for a different graph")
        vg = TripleViewGraph(head_view=data["head_view"], tail_view=data["tail_view"],
                             fan_out=int(data["fan_out"]))
    if g is not None and len(vg) != len(g):
        raise ValueError(f"{path}: {len(vg)} neighbor lists for {len(g)} triples")
    return vg
