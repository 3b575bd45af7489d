"""Shared test utilities: independent oracles and synthetic data builders.

Everything here is deliberately naive (loops, all-pairs scans, textbook
formulas) so it stays independent of the library code paths it checks.
"""

from __future__ import annotations

import math

import numpy as np

from kgaudit.kgstore import KnowledgeGraph


def finite_difference_grads(forward, params, eps: float = 1e-5):
    """Central-difference gradients of a scalar ``forward()`` w.r.t. each
    parameter tensor, wiggling one entry at a time."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = forward()
            flat[idx] = orig - eps
            f_minus = forward()
            flat[idx] = orig
            gflat[idx] = (f_plus - f_minus) / (2.0 * eps)
        grads.append(g)
    return grads


def grad_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-relative disagreement between two gradients of one parameter."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


def kg_from_strings(rows, flags=None) -> KnowledgeGraph:
    """Build a graph from (head, relation, tail) name tuples."""
    entities: dict[str, int] = {}
    relations: dict[str, int] = {}
    triples = []
    for h, r, t in rows:
        triples.append((entities.setdefault(h, len(entities)),
                        relations.setdefault(r, len(relations)),
                        entities.setdefault(t, len(entities))))
    return KnowledgeGraph(entity_names=list(entities), relation_names=list(relations),
                          triples=np.array(triples, dtype=np.int64).reshape(-1, 3),
                          error_flags=None if flags is None else np.asarray(flags, bool))


def random_kg(rng: np.random.Generator, n_entities: int, n_relations: int,
              n_triples: int) -> KnowledgeGraph:
    """Uniform random graph without duplicate triples."""
    seen = set()
    while len(seen) < n_triples:
        h = int(rng.integers(n_entities))
        r = int(rng.integers(n_relations))
        t = int(rng.integers(n_entities))
        seen.add((h, r, t))
    triples = np.array(sorted(seen), dtype=np.int64)
    rng.shuffle(triples)
    return KnowledgeGraph(entity_names=[f"e{i}" for i in range(n_entities)],
                          relation_names=[f"r{i}" for i in range(n_relations)],
                          triples=triples)


def make_typed_kg(n_entities: int = 1000, n_relations: int = 20,
                  n_triples: int = 10000, n_groups: int = 20,
                  seed: int = 0) -> KnowledgeGraph:
    """Structured synthetic KG: entities belong to groups, each relation
    connects one source group to one target group, so random entity
    replacements usually violate the schema and are detectable in principle."""
    rng = np.random.default_rng(seed)
    group_of = np.arange(n_entities) % n_groups
    rng.shuffle(group_of)
    members = [np.flatnonzero(group_of == k) for k in range(n_groups)]
    src = rng.integers(n_groups, size=n_relations)
    dst = rng.integers(n_groups, size=n_relations)
    seen = set()
    while len(seen) < n_triples:
        r = int(rng.integers(n_relations))
        h = int(rng.choice(members[src[r]]))
        t = int(rng.choice(members[dst[r]]))
        seen.add((h, r, t))
    triples = np.array(sorted(seen), dtype=np.int64)
    rng.shuffle(triples)
    return KnowledgeGraph(entity_names=[f"e{i:04d}" for i in range(n_entities)],
                          relation_names=[f"r{i:02d}" for i in range(n_relations)],
                          triples=triples)


def brute_force_candidates(g: KnowledgeGraph):
    """O(T^2) all-pairs linking-pattern scan; returns per-triple id sets."""
    heads, tails = g.heads, g.tails
    share_head = (heads[:, None] == heads[None, :]) | (heads[:, None] == tails[None, :])
    share_tail = (tails[:, None] == heads[None, :]) | (tails[:, None] == tails[None, :])
    np.fill_diagonal(share_head, False)
    np.fill_diagonal(share_tail, False)
    head_sets = [set(np.flatnonzero(row)) for row in share_head]
    tail_sets = [set(np.flatnonzero(row)) for row in share_tail]
    return head_sets, tail_sets


def reference_contrastive(x: np.ndarray, z: np.ndarray, temperature: float,
                          include_positive: bool = False) -> float:
    """Direct loop re-implementation of the cross-view loss."""

    def cos(u, v):
        return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))

    n = len(x)
    total = 0.0
    for i in range(n):
        numerator = math.exp(cos(x[i], z[i]) / temperature)
        denominator = sum(math.exp(cos(x[i], z[j]) / temperature)
                          for j in range(n) if include_positive or j != i)
        total += -math.log(numerator / denominator)
    return total / n
