"""Triple encoder: Bi-LSTM over (head, relation, tail) embeddings followed
by gated attention over each view's neighbor list.

Attention weights are softmax-normalized and then hard-thresholded: weights
at or below ``attn_threshold`` are zeroed (no renormalization afterwards),
which blocks message passing from suspected erroneous neighbors. Both views
share the embedding tables, the recurrent weights, the projection and the
attention parameters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kgstore import KnowledgeGraph
from .optim import xavier_init
from .views import TripleViewGraph

ENCODERS = ("bilstm", "lstm", "concat")
ATTENTION_KINDS = ("additive", "dot")
LEAKY_SLOPE = 0.2


@dataclass
class Hyper:
    """Model hyperparameters, persisted with every checkpoint."""

    dim: int = 100               # entity/relation embedding size
    out_dim: int = 100           # attended representation size
    attn_threshold: float = 0.005
    margin: float = 0.5          # hinge margin of the translation loss
    energy_weight: float = 0.1   # energy coefficient in the confidence score
    temperature: float = 0.5     # contrastive temperature
    contrastive_weight: float = 1.0
    fan_out: int = 1
    encoder: str = "bilstm"
    attention: str = "additive"

    def validate(self) -> None:
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}")
        if self.attention not in ATTENTION_KINDS:
            raise ValueError(f"attention must be one of {ATTENTION_KINDS}")
        if self.encoder == "bilstm" and self.dim % 2:
            raise ValueError("bilstm encoder needs an even embedding size")
        if self.out_dim < 1 or self.dim < 1:
            raise ValueError("dimensions must be positive")
        if self.attn_threshold < 0:
            raise ValueError("attn_threshold must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


@dataclass
class ModelState:
    entity_emb: Tensor        # (n_entities, dim)
    relation_emb: Tensor      # (n_relations, dim)
    proj_w: Tensor            # (out_dim, 3*dim)
    attn_a: Tensor            # (2*out_dim,)
    lstm_fw: dict[str, Tensor] | None
    lstm_bw: dict[str, Tensor] | None
    hyper: Hyper = field(default_factory=Hyper)

    def parameters(self) -> list[tuple[str, Tensor]]:
        named = [("entity_emb", self.entity_emb), ("relation_emb", self.relation_emb),
                 ("proj_w", self.proj_w), ("attn_a", self.attn_a)]
        for prefix, weights in (("lstm_fw", self.lstm_fw), ("lstm_bw", self.lstm_bw)):
            if weights is not None:
                named.extend((f"{prefix}/{k}", t) for k, t in weights.items())
        return named

    def encoder_parameters(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.parameters()
                if n not in ("entity_emb", "relation_emb")]


def _lstm_weights(in_dim: int, hidden: int, rng) -> dict[str, Tensor]:
    return {
        "w_x": xavier_init((in_dim, 4 * hidden), rng),
        "w_h": xavier_init((hidden, 4 * hidden), rng),
        "b": Tensor(np.zeros(4 * hidden), requires_grad=True),
    }


def init_model(n_entities: int, n_relations: int, hyper: Hyper, seed: int) -> ModelState:
    hyper.validate()
    rng = np.random.default_rng(seed)
    lstm_fw = lstm_bw = None
    if hyper.encoder == "bilstm":
        lstm_fw = _lstm_weights(hyper.dim, hyper.dim // 2, rng)
        lstm_bw = _lstm_weights(hyper.dim, hyper.dim // 2, rng)
    elif hyper.encoder == "lstm":
        lstm_fw = _lstm_weights(hyper.dim, hyper.dim, rng)
    return ModelState(
        entity_emb=xavier_init((n_entities, hyper.dim), rng),
        relation_emb=xavier_init((n_relations, hyper.dim), rng),
        proj_w=xavier_init((hyper.out_dim, 3 * hyper.dim), rng),
        attn_a=xavier_init((2 * hyper.out_dim,), rng),
        lstm_fw=lstm_fw,
        lstm_bw=lstm_bw,
        hyper=hyper,
    )


def _lstm_scan(seq: list[Tensor], w: dict[str, Tensor]) -> list[Tensor]:
    """Hidden state per position for one direction."""
    hidden = w["w_h"].shape[0]
    rows = seq[0].shape[0]
    h = ad.constant(np.zeros((rows, hidden)))
    c = ad.constant(np.zeros((rows, hidden)))
    outs = []
    for x in seq:
        z = ad.matmul(x, w["w_x"]) + ad.matmul(h, w["w_h"]) + w["b"]
        i = ad.sigmoid(ad.narrow(z, 1, 0, hidden))
        f = ad.sigmoid(ad.narrow(z, 1, hidden, hidden))
        g = ad.tanh(ad.narrow(z, 1, 2 * hidden, hidden))
        o = ad.sigmoid(ad.narrow(z, 1, 3 * hidden, hidden))
        c = f * c + i * g
        h = o * ad.tanh(c)
        outs.append(h)
    return outs


def encode_local(model: ModelState, triples: np.ndarray) -> Tensor:
    """Per-triple code of size 3*dim from the (head, relation, tail) sequence."""
    triples = np.atleast_2d(triples)
    e_h = ad.gather(model.entity_emb, triples[:, 0])
    e_r = ad.gather(model.relation_emb, triples[:, 1])
    e_t = ad.gather(model.entity_emb, triples[:, 2])
    seq = [e_h, e_r, e_t]
    kind = model.hyper.encoder
    if kind == "concat":
        return ad.concat(seq, axis=1)
    if kind == "lstm":
        return ad.concat(_lstm_scan(seq, model.lstm_fw), axis=1)
    fw = _lstm_scan(seq, model.lstm_fw)
    bw = _lstm_scan(seq[::-1], model.lstm_bw)
    per_pos = [ad.concat([fw[p], bw[2 - p]], axis=1) for p in range(3)]
    return ad.concat(per_pos, axis=1)


def _attention_vectors(model: ModelState) -> tuple[Tensor, Tensor]:
    out_dim = model.hyper.out_dim
    return (ad.narrow(model.attn_a, 0, 0, out_dim),
            ad.narrow(model.attn_a, 0, out_dim, out_dim))


def attend(model: ModelState, anchor_code: Tensor, neighbor_codes: Tensor
           ) -> tuple[Tensor, Tensor]:
    """Gated attention of one anchor over its m neighbor codes.

    Returns the attended representation (out_dim,) and the post-gate
    weights (m,).
    """
    proj_t = ad.transpose(model.proj_w)
    p_a = ad.matmul(ad.reshape(anchor_code, (1, -1)), proj_t)
    p_n = ad.matmul(neighbor_codes, proj_t)
    if model.hyper.attention == "additive":
        a_src, a_dst = _attention_vectors(model)
        logits = ad.leaky_relu(ad.matmul(p_a, a_src) + ad.matmul(p_n, a_dst), LEAKY_SLOPE)
    else:
        logits = ad.matmul(p_n, ad.reshape(p_a, (-1,)))
    weights = ad.mask_below_threshold(ad.softmax(logits), model.hyper.attn_threshold)
    rep = ad.sigmoid(ad.matmul(ad.reshape(weights, (1, -1)), p_n))
    return ad.reshape(rep, (-1,)), weights


def encode_views(model: ModelState, g: KnowledgeGraph, vg: TripleViewGraph,
                 anchor_ids: np.ndarray) -> tuple[Tensor, Tensor]:
    """Batched per-view representations X (head view) and Z (tail view).

    Every distinct triple appearing in the batch's neighbor lists is encoded
    once; the attention then works on row indices into that unique block.
    """
    anchor_ids = np.asarray(anchor_ids, dtype=np.int64)
    if len(vg) != len(g):
        raise ValueError("views were built for a different number of triples")
    n, m = anchor_ids.shape[0], vg.fan_out
    neigh = np.concatenate([vg.head_view[anchor_ids].ravel(),
                            vg.tail_view[anchor_ids].ravel()])
    uniq, inv = np.unique(neigh, return_inverse=True)
    slots_head = inv[:n * m].reshape(n, m)
    slots_tail = inv[n * m:].reshape(n, m)
    anchor_slots = slots_head[:, 0]  # column 0 of either view is the anchor

    codes = encode_local(model, g.triples[uniq])
    projected = ad.matmul(codes, ad.transpose(model.proj_w))

    if model.hyper.attention == "additive":
        a_src, a_dst = _attention_vectors(model)
        s_src = ad.matmul(projected, a_src)
        s_dst = ad.matmul(projected, a_dst)
        anchor_score = ad.reshape(ad.gather(s_src, anchor_slots), (n, 1))

        def view_logits(slots):
            return ad.leaky_relu(anchor_score + ad.gather(s_dst, slots), LEAKY_SLOPE)
    else:
        p_anchor = ad.reshape(ad.gather(projected, anchor_slots),
                              (n, 1, model.hyper.out_dim))

        def view_logits(slots):
            return ad.sum_(p_anchor * ad.gather(projected, slots), axis=2)

    def one_view(slots):
        weights = ad.mask_below_threshold(ad.softmax(view_logits(slots)),
                                          model.hyper.attn_threshold)
        return ad.sigmoid(ad.neighbor_weighted_sum(projected, slots, weights))

    return one_view(slots_head), one_view(slots_tail)


# ---------------------------------------------------------------------------
# checkpoints

def save_model(model: ModelState, path) -> None:
    arrays = {name.replace("/", "."): t.data for name, t in model.parameters()}
    arrays["hyper_json"] = np.bytes_(json.dumps(asdict(model.hyper)).encode())
    np.savez(path, **arrays)


def load_model(path) -> ModelState:
    with np.load(path) as data:
        hyper = Hyper(**json.loads(bytes(data["hyper_json"]).decode()))
        hyper.validate()

        def param(name):
            arr = data[name]
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"{path}: non-finite values in {name}")
            return Tensor(arr, requires_grad=True)

        def lstm(prefix):
            return {k: param(f"{prefix}.{k}") for k in ("w_x", "w_h", "b")}

        return ModelState(
            entity_emb=param("entity_emb"),
            relation_emb=param("relation_emb"),
            proj_w=param("proj_w"),
            attn_a=param("attn_a"),
            lstm_fw=lstm("lstm_fw") if hyper.encoder in ("bilstm", "lstm") else None,
            lstm_bw=lstm("lstm_bw") if hyper.encoder == "bilstm" else None,
            hyper=hyper,
        )
