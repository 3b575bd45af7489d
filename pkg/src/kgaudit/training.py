"""Joint training: translation margin loss plus cross-view contrastive loss.

Each batch corrupts one negative per positive for the margin term and
contrasts the two view representations of the batch for the contrastive
term. Ablation variants switch off one loss or swap the local encoder.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import Hyper, ModelState, encode_views, init_model
from .kgstore import KnowledgeGraph
from .optim import Adam
from .views import TripleViewGraph

VARIANTS = ("full", "concat", "lstm", "local", "global")
NEGATIVE_MODES = ("uniform", "filtered")
_NEG_RETRY_LIMIT = 50


class TrainingDiverged(RuntimeError):
    """Non-finite loss encountered during training."""


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 256
    lr: float = 0.01
    dim: int = 100
    out_dim: int = 100
    margin: float = 0.5
    temperature: float = 0.5
    contrastive_weight: float = 1.0
    attn_threshold: float = 0.005
    energy_weight: float = 0.1
    seed: int = 0
    negative_mode: str = "filtered"
    variant: str = "full"
    attention: str = "additive"
    include_positive_in_denominator: bool = False

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not 0.0 <= self.margin <= 1.0:
            raise ValueError("margin must be in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.contrastive_weight < 0:
            raise ValueError("contrastive_weight must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.negative_mode not in NEGATIVE_MODES:
            raise ValueError(f"negative_mode must be one of {NEGATIVE_MODES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def to_hyper(self, fan_out: int) -> Hyper:
        encoder = {"concat": "concat", "lstm": "lstm"}.get(self.variant, "bilstm")
        return Hyper(dim=self.dim, out_dim=self.out_dim,
                     attn_threshold=self.attn_threshold, margin=self.margin,
                     energy_weight=self.energy_weight, temperature=self.temperature,
                     contrastive_weight=self.contrastive_weight, fan_out=fan_out,
                     encoder=encoder, attention=self.attention)


@dataclass
class IterRecord:
    epoch: int
    iteration: int
    kge_loss: float
    con_loss: float
    total_loss: float
    iter_seconds: float


@dataclass
class TrainLog:
    records: list[IterRecord] = field(default_factory=list)

    def epoch_means(self) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for rec in self.records:
            by_epoch.setdefault(rec.epoch, []).append(rec.total_loss)
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]

    def mean_iter_seconds(self) -> float:
        return float(np.mean([r.iter_seconds for r in self.records])) if self.records else 0.0

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(asdict(rec)) + "\n")


def energy(model: ModelState, heads, relations, tails) -> Tensor:
    """Translation energy ||e_h + e_r - e_t||_2 over the base embedding tables."""
    e_h = ad.gather(model.entity_emb, np.atleast_1d(heads))
    e_r = ad.gather(model.relation_emb, np.atleast_1d(relations))
    e_t = ad.gather(model.entity_emb, np.atleast_1d(tails))
    return ad.l2_norm(e_h + e_r - e_t, axis=1)


def sample_negatives(triples: np.ndarray, g: KnowledgeGraph,
                     rng: np.random.Generator, mode: str = "filtered") -> np.ndarray:
    """One corrupted triple per positive: fair coin on head vs tail, uniform
    replacement entity; ``filtered`` redraws replacements that collide with
    existing triples (bounded retries, then accepted as-is)."""
    if mode not in NEGATIVE_MODES:
        raise ValueError(f"mode must be one of {NEGATIVE_MODES}")
    if g.n_entities < 2:
        raise ValueError("negative sampling needs at least 2 entities")
    neg = np.array(triples, dtype=np.int64, copy=True)
    corrupt_head = rng.integers(2, size=len(neg)) == 0
    replacements = rng.integers(g.n_entities, size=len(neg))
    slot = np.where(corrupt_head, 0, 2)
    neg[np.arange(len(neg)), slot] = replacements
    if mode == "filtered":
        for i in range(len(neg)):
            retries = 0
            while tuple(neg[i]) in g.triple_set and retries < _NEG_RETRY_LIMIT:
                neg[i, slot[i]] = rng.integers(g.n_entities)
                retries += 1
    return neg


def kge_loss(model: ModelState, positives: np.ndarray, negatives: np.ndarray,
             margin: float) -> Tensor:
    """Sum of hinge terms max(0, margin + E(pos) - E(neg))."""
    if len(positives) != len(negatives):
        raise ValueError("positives and negatives must pair up")
    e_pos = energy(model, positives[:, 0], positives[:, 1], positives[:, 2])
    e_neg = energy(model, negatives[:, 0], negatives[:, 1], negatives[:, 2])
    return ad.sum_(ad.relu(e_pos - e_neg + ad.constant(margin)))


def contrastive_loss(x: Tensor, z: Tensor, temperature: float,
                     include_positive: bool = False) -> Tensor:
    """Temperature-scaled cross-view loss, mean over the batch.

    The denominator runs over the other batch members only (j != i), so a
    strongly aligned positive pair can drive an anchor's term negative. Set
    ``include_positive`` for the conventional variant that keeps j = i in
    the denominator.
    """
    n = x.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    xn = x / ad.l2_norm(x, axis=1, keepdims=True)
    zn = z / ad.l2_norm(z, axis=1, keepdims=True)
    sims = ad.matmul(xn, ad.transpose(zn)) * ad.constant(1.0 / temperature)
    pos = ad.sum_(xn * zn, axis=1) * ad.constant(1.0 / temperature)

    if include_positive:
        mask = np.ones((n, n))
    else:
        mask = 1.0 - np.eye(n)
    # constant per-row shift keeps exp() in range without touching gradients
    shift = np.max(np.where(mask > 0, sims.data, -np.inf), axis=1, keepdims=True)
    scaled = ad.exp(sims - ad.constant(shift)) * ad.constant(mask)
    lse = ad.log(ad.sum_(scaled, axis=1)) + ad.constant(shift[:, 0])
    return ad.mean(lse - pos)


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def train(g: KnowledgeGraph, vg: TripleViewGraph, config: TrainConfig
          ) -> tuple[ModelState, TrainLog]:
    """Run the joint optimization loop and return the model plus a log of
    per-iteration loss components and wall times."""
    config.validate()
    if len(vg) != len(g):
        raise ValueError("views do not match the graph")

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    model = init_model(g.n_entities, g.n_relations, config.to_hyper(vg.fan_out),
                       seeds[0])
    rng = np.random.default_rng(seeds[1])

    use_kge = config.variant != "global"
    use_con = config.variant != "local" and (config.contrastive_weight > 0
                                             or config.variant == "global")
    con_weight = 1.0 if config.variant == "global" else config.contrastive_weight

    params = [t for _, t in model.parameters()]
    if not use_con:
        # only the embedding tables receive gradients from the margin loss
        params = [model.entity_emb, model.relation_emb]
    adam = Adam(params, lr=config.lr)

    log = TrainLog()
    for epoch in range(config.epochs):
        order = rng.permutation(len(g))
        for it, batch_ids in enumerate(_batches(order, config.batch_size)):
            t0 = time.perf_counter()
            positives = g.triples[batch_ids]
            terms = []
            kge_val = con_val = 0.0
            if use_kge:
                negatives = sample_negatives(positives, g, rng, config.negative_mode)
                lk = kge_loss(model, positives, negatives, config.margin)
                kge_val = lk.item()
                terms.append(lk)
            if use_con:
                x, z = encode_views(model, g, vg, batch_ids)
                lc = contrastive_loss(x, z, config.temperature,
                                      config.include_positive_in_denominator)
                con_val = lc.item()
                terms.append(lc * ad.constant(con_weight))
            total = terms[0] if len(terms) == 1 else terms[0] + terms[1]
            total_val = total.item()
            if not (np.isfinite(kge_val) and np.isfinite(con_val)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} iteration {it}: "
                    f"kge={kge_val} con={con_val}")
            total.backward()
            adam.step()
            log.records.append(IterRecord(
                epoch=epoch, iteration=it, kge_loss=kge_val, con_loss=con_val,
                total_loss=total_val, iter_seconds=time.perf_counter() - t0))
    return model, log
