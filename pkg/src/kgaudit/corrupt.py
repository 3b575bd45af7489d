"""Synthetic error injection: corrupt head or tail entities of sampled triples.

The injected fraction is measured against the final (noisy) graph, so a
ratio of 0.05 means one in twenty output triples is an error. Two
replacement modes: ``uniform`` draws from the whole entity vocabulary,
``same-position`` draws from entities seen in that slot for that relation,
which yields relevant-but-mismatched errors.
"""

from __future__ import annotations

import numpy as np

from .kgstore import KnowledgeGraph

MODES = ("uniform", "same-position")
_RETRY_LIMIT = 1000


class InjectionError(RuntimeError):
    """Could not place an injected triple without colliding (tiny graphs)."""


def inject_errors(g: KnowledgeGraph, ratio: float, mode: str = "same-position",
                  seed: int = 0) -> KnowledgeGraph:
    """Append corrupted copies of sampled triples and flag them as errors."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if g.error_flags is not None:
        raise ValueError("graph already carries error flags")

    n_clean = len(g)
    n_noise = round(ratio * n_clean / (1.0 - ratio))
    if n_noise < 1:
        raise ValueError(f"ratio {ratio} yields no injected triples for {n_clean} clean ones")

    rng = np.random.default_rng(seed)
    heads_by_rel, tails_by_rel = None, None
    if mode == "same-position":
        heads_by_rel = [np.unique(g.heads[g.relations == r]) for r in range(g.n_relations)]
        tails_by_rel = [np.unique(g.tails[g.relations == r]) for r in range(g.n_relations)]

    taken = set(g.triple_set)
    injected = []
    for _ in range(n_noise):
        for _attempt in range(_RETRY_LIMIT):
            h, r, t = g.triples[rng.integers(n_clean)]
            corrupt_head = rng.integers(2) == 0
            if mode == "uniform":
                repl = int(rng.integers(g.n_entities))
            else:
                pool = heads_by_rel[r] if corrupt_head else tails_by_rel[r]
                repl = int(pool[rng.integers(len(pool))])
            cand = (repl, int(r), int(t)) if corrupt_head else (int(h), int(r), repl)
            if cand not in taken:
                taken.add(cand)
                injected.append(cand)
                break
        else:
            raise InjectionError(
                f"no collision-free corruption found after {_RETRY_LIMIT} retries "
                f"({len(injected)}/{n_noise} placed)")

    triples = np.concatenate([g.triples, np.array(injected, dtype=np.int64)])
    flags = np.zeros(len(triples), dtype=bool)
    flags[n_clean:] = True
    return KnowledgeGraph(
        entity_names=list(g.entity_names),
        relation_names=list(g.relation_names),
        triples=triples,
        error_flags=flags,
    )


def corruption_report(g: KnowledgeGraph) -> dict:
    """Total injected count and per-relation distribution (by relation name)."""
    if g.error_flags is None:
        raise ValueError("graph carries no error flags")
    rels = g.relations[g.error_flags]
    per_relation = {}
    for r, count in zip(*np.unique(rels, return_counts=True)):
        per_relation[g.relation_names[r]] = int(count)
    return {"total": int(g.error_flags.sum()), "per_relation": per_relation}
