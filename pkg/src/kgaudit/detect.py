"""Confidence scoring, ranking, top-K metrics and embedding-baseline scorers.

The confidence of a triple is sigmoid(cross-view similarity minus a weighted
translation energy); low-confidence triples are ranked first as error
candidates. Baselines rank by their own plausibility scores so the same
evaluation path applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import stable_sigmoid
from .encoder import ModelState, encode_views
from .kgstore import KnowledgeGraph
from .optim import Adam, xavier_init
from .training import TrainConfig, sample_negatives
from .views import TripleViewGraph

BASELINE_METHODS = ("transe", "distmult", "complex")
_SCORE_BATCH = 2048


@dataclass
class ConfidenceRanking:
    """Triples sorted ascending by confidence; ties break on triple index."""

    indices: np.ndarray       # (T,) triple indices, most suspicious first
    confidence: np.ndarray    # aligned with indices
    cross_view_sim: np.ndarray
    energy: np.ndarray
    method: str = "model"

    def __post_init__(self):
        if not (np.all(np.isfinite(self.confidence))
                and np.all(np.isfinite(self.cross_view_sim))
                and np.all(np.isfinite(self.energy))):
            raise FloatingPointError("non-finite values in ranking")

    def __len__(self) -> int:
        return len(self.indices)


def _ranked(indices_unsorted: np.ndarray, confidence: np.ndarray,
            sim: np.ndarray, energy: np.ndarray, method: str) -> ConfidenceRanking:
    order = np.lexsort((indices_unsorted, confidence))
    return ConfidenceRanking(indices=indices_unsorted[order], confidence=confidence[order],
                             cross_view_sim=sim[order], energy=energy[order], method=method)


def score_components(g: KnowledgeGraph, vg: TripleViewGraph, model: ModelState
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Per-triple cross-view cosine and translation energy, in triple order."""
    sims = np.empty(len(g))
    with ad.no_grad():
        for start in range(0, len(g), _SCORE_BATCH):
            ids = np.arange(start, min(start + _SCORE_BATCH, len(g)))
            x, z = encode_views(model, g, vg, ids)
            sims[ids] = ad.cosine_similarity(x, z).data
    ent, rel = model.entity_emb.data, model.relation_emb.data
    diff = ent[g.heads] + rel[g.relations] - ent[g.tails]
    return sims, np.linalg.norm(diff, axis=1)


def rank_from_components(sims: np.ndarray, energies: np.ndarray,
                         energy_weight: float) -> ConfidenceRanking:
    if energy_weight < 0:
        raise ValueError(f"energy_weight must be >= 0, got {energy_weight}")
    confidence = stable_sigmoid(sims - energy_weight * energies)
    return _ranked(np.arange(len(sims)), confidence, sims, energies, "model")


def score_all(g: KnowledgeGraph, vg: TripleViewGraph, model: ModelState,
              energy_weight: float | None = None) -> ConfidenceRanking:
    """Rank every triple by sigmoid(sim(x, z) - energy_weight * E)."""
    lam = model.hyper.energy_weight if energy_weight is None else energy_weight
    sims, energies = score_components(g, vg, model)
    return rank_from_components(sims, energies, lam)


def precision_recall_at_k(ranking: ConfidenceRanking, flags: np.ndarray,
                          k: float) -> tuple[float, float]:
    """Precision and recall of the floor(k*N) lowest-confidence triples."""
    if flags is None:
        raise ValueError("ground-truth error flags required")
    flags = np.asarray(flags, dtype=bool)
    if len(flags) != len(ranking):
        raise ValueError("flags do not match ranking length")
    if not 0.0 < k <= 1.0:
        raise ValueError(f"k must be in (0, 1], got {k}")
    top = int(np.floor(k * len(ranking)))
    if top == 0:
        raise ValueError(f"k={k} selects no triples out of {len(ranking)}")
    total_errors = int(flags.sum())
    if total_errors == 0:
        raise ValueError("no flagged errors to recall")
    hits = int(flags[ranking.indices[:top]].sum())
    return hits / top, hits / total_errors


def metrics_rows(ranking: ConfidenceRanking, flags: np.ndarray,
                 ks: list[float]) -> list[tuple[float, float, float]]:
    return [(k, *precision_recall_at_k(ranking, flags, k)) for k in ks]


# ---------------------------------------------------------------------------
# embedding baselines used as scorers

@dataclass
class BaselineEmbeddings:
    method: str
    tables: dict[str, np.ndarray]


def _baseline_params(method: str, n_entities: int, n_relations: int, dim: int,
                     rng) -> dict[str, ad.Tensor]:
    if method == "complex":
        return {name: xavier_init((count, dim), rng)
                for name, count in (("entity_re", n_entities), ("entity_im", n_entities),
                                    ("relation_re", n_relations), ("relation_im", n_relations))}
    return {"entity": xavier_init((n_entities, dim), rng),
            "relation": xavier_init((n_relations, dim), rng)}


def _baseline_scores(method: str, params: dict, triples: np.ndarray) -> ad.Tensor:
    """Plausibility scores as autodiff tensors (higher = more plausible)."""
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    if method == "transe":
        diff = (ad.gather(params["entity"], h) + ad.gather(params["relation"], r)
                - ad.gather(params["entity"], t))
        return -ad.l2_norm(diff, axis=1)
    if method == "distmult":
        prod = (ad.gather(params["entity"], h) * ad.gather(params["relation"], r)
                * ad.gather(params["entity"], t))
        return ad.sum_(prod, axis=1)
    if method == "complex":
        h_re, h_im = ad.gather(params["entity_re"], h), ad.gather(params["entity_im"], h)
        r_re, r_im = ad.gather(params["relation_re"], r), ad.gather(params["relation_im"], r)
        t_re, t_im = ad.gather(params["entity_re"], t), ad.gather(params["entity_im"], t)
        real_part = (h_re * r_re * t_re + h_im * r_re * t_im
                     + h_re * r_im * t_im - h_im * r_im * t_re)
        return ad.sum_(real_part, axis=1)
    raise ValueError(f"method must be one of {BASELINE_METHODS}, got {method!r}")


def train_baseline(g: KnowledgeGraph, method: str, config: TrainConfig
                   ) -> BaselineEmbeddings:
    """Margin-ranking training over the method's score with sampled negatives."""
    config.validate()
    if method not in BASELINE_METHODS:
        raise ValueError(f"method must be one of {BASELINE_METHODS}, got {method!r}")
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    params = _baseline_params(method, g.n_entities, g.n_relations, config.dim,
                              np.random.default_rng(seeds[0]))
    rng = np.random.default_rng(seeds[1])
    adam = Adam(list(params.values()), lr=config.lr)
    for _epoch in range(config.epochs):
        order = rng.permutation(len(g))
        for start in range(0, len(order), config.batch_size):
            batch = g.triples[order[start:start + config.batch_size]]
            negatives = sample_negatives(batch, g, rng, config.negative_mode)
            s_pos = _baseline_scores(method, params, batch)
            s_neg = _baseline_scores(method, params, negatives)
            loss = ad.sum_(ad.relu(s_neg - s_pos + ad.constant(config.margin)))
            if not np.isfinite(loss.item()):
                raise FloatingPointError(f"{method} training diverged")
            loss.backward()
            adam.step()
    return BaselineEmbeddings(method=method,
                              tables={k: t.data for k, t in params.items()})


def baseline_score(g: KnowledgeGraph, method: str,
                   emb: BaselineEmbeddings) -> ConfidenceRanking:
    """Rank ascending by the method's plausibility score."""
    if method not in BASELINE_METHODS:
        raise ValueError(f"method must be one of {BASELINE_METHODS}, got {method!r}")
    if emb.method != method:
        raise ValueError(f"embeddings were trained for {emb.method!r}, not {method!r}")
    params = {k: ad.constant(v) for k, v in emb.tables.items()}
    with ad.no_grad():
        scores = _baseline_scores(method, params, g.triples).data
    return _ranked(np.arange(len(g)), scores, np.zeros(len(g)), -scores, method)


# ---------------------------------------------------------------------------
# report files

def write_ranking(ranking: ConfidenceRanking, g: KnowledgeGraph, path) -> None:
    """Tab-separated: index, head, relation, tail, confidence, sim, energy."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(ranking)):
            idx = ranking.indices[i]
            h, r, t = g.triples[idx]
            fh.write(f"{idx}\t{g.entity_names[h]}\t{g.relation_names[r]}\t"
                     f"{g.entity_names[t]}\t{ranking.confidence[i]:.12g}\t"
                     f"{ranking.cross_view_sim[i]:.12g}\t{ranking.energy[i]:.12g}\n")


def read_ranking(path, method: str = "model") -> ConfidenceRanking:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 7:
                raise ValueError(f"{path}: expected 7 tab-separated fields")
            rows.append((int(parts[0]), float(parts[4]), float(parts[5]), float(parts[6])))
    idx, conf, sim, en = (np.array(col) for col in zip(*rows))
    return ConfidenceRanking(indices=idx.astype(np.int64), confidence=conf,
                             cross_view_sim=sim, energy=en, method=method)


def write_metrics(rows: list[tuple[float, float, float]], path) -> None:
    """CSV of K, precision, recall rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("K,precision,recall\n")
        for k, precision, recall in rows:
            fh.write(f"{k:.10g},{precision:.6f},{recall:.6f}\n")
