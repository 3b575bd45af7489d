"""Local Bi-LSTM codes, gated attention semantics, checkpoints."""

import numpy as np
import pytest

from kgaudit import autodiff as ad
from kgaudit.encoder import (Hyper, attend, encode_local, encode_views,
                             init_model, load_model, save_model)
from kgaudit.views import build_views

from helpers import (finite_difference_grads, grad_relative_error,
                     kg_from_strings, random_kg)

TOY = [("e1", "r1", "e2"), ("e1", "r2", "e3"), ("e4", "r3", "e2")]


def small_model(n_entities=6, n_relations=4, dim=8, out_dim=6, seed=0, **kw):
    hyper = Hyper(dim=dim, out_dim=out_dim, fan_out=kw.pop("fan_out", 2), **kw)
    return init_model(n_entities, n_relations, hyper, seed=seed)


def reference_lstm(seq, w_x, w_h, b):
    """Hand-unrolled per-gate recurrence, one sample at a time."""
    hidden = w_h.shape[0]

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    h = np.zeros(hidden)
    c = np.zeros(hidden)
    outs = []
    for x in seq:
        z = x @ w_x + h @ w_h + b
        i, f, g, o = (z[:hidden], z[hidden:2 * hidden],
                      z[2 * hidden:3 * hidden], z[3 * hidden:])
        c = sig(f) * c + sig(i) * np.tanh(g)
        h = sig(o) * np.tanh(c)
        outs.append(h)
    return outs


def test_zero_weights_give_zero_codes():
    model = small_model(dim=4, out_dim=4)
    for _, t in model.parameters():
        t.data[...] = 0.0
    q = encode_local(model, np.array([[0, 0, 1]]))
    assert np.allclose(q.data, 0.0)


def test_local_code_matches_hand_unrolled_recurrence(rng):
    model = small_model(dim=4, out_dim=4, seed=3)
    triples = np.array([[2, 1, 4], [0, 3, 0]])
    q = encode_local(model, triples).data
    for row, (h, r, t) in enumerate(triples):
        seq = [model.entity_emb.data[h], model.relation_emb.data[r],
               model.entity_emb.data[t]]
        fw = reference_lstm(seq, model.lstm_fw["w_x"].data,
                            model.lstm_fw["w_h"].data, model.lstm_fw["b"].data)
        bw = reference_lstm(seq[::-1], model.lstm_bw["w_x"].data,
                            model.lstm_bw["w_h"].data, model.lstm_bw["b"].data)
        expected = np.concatenate([np.concatenate([fw[p], bw[2 - p]]) for p in range(3)])
        assert np.allclose(q[row], expected, atol=1e-12)


def test_reversed_sequence_swaps_direction_roles():
    model = small_model(dim=6, out_dim=4, seed=5)
    swapped = small_model(dim=6, out_dim=4, seed=5)
    swapped.lstm_fw, swapped.lstm_bw = model.lstm_bw, model.lstm_fw
    q = encode_local(model, np.array([[1, 2, 3]])).data[0]
    q_rev = encode_local(swapped, np.array([[3, 2, 1]])).data[0]
    d, half = 6, 3
    for p in range(3):
        pos = q[p * d:(p + 1) * d]
        mirrored = q_rev[(2 - p) * d:(3 - p) * d]
        assert np.allclose(pos[:half], mirrored[half:], atol=1e-12)
        assert np.allclose(pos[half:], mirrored[:half], atol=1e-12)


def test_concat_variant_is_raw_embedding_concat():
    model = small_model(dim=4, out_dim=4, encoder="concat")
    triples = np.array([[1, 0, 2]])
    q = encode_local(model, triples).data[0]
    expected = np.concatenate([model.entity_emb.data[1], model.relation_emb.data[0],
                               model.entity_emb.data[2]])
    assert np.array_equal(q, expected)


def test_lstm_variant_uses_full_width_hidden():
    model = small_model(dim=4, out_dim=4, encoder="lstm", seed=2)
    assert model.lstm_bw is None
    assert model.lstm_fw["w_h"].shape == (4, 16)
    q = encode_local(model, np.array([[0, 1, 2]]))
    assert q.shape == (1, 12)


def test_odd_dim_rejected_for_bilstm():
    with pytest.raises(ValueError):
        init_model(4, 2, Hyper(dim=5, out_dim=4), seed=0)


# ---------------------------------------------------------------------------
# attention gate

def codes_for(model, rows, rng):
    return ad.constant(rng.normal(size=(rows, 3 * model.hyper.dim)))


def test_gate_disabled_weights_sum_to_one(rng):
    model = small_model(attn_threshold=0.0)
    neighbors = codes_for(model, 4, rng)
    _, weights = attend(model, ad.constant(neighbors.data[0]), neighbors)
    assert weights.data.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(weights.data > 0)


def test_full_blocking_gives_half_representation(rng):
    model = small_model(attn_threshold=1.0)
    neighbors = codes_for(model, 3, rng)
    rep, weights = attend(model, ad.constant(neighbors.data[0]), neighbors)
    assert np.all(weights.data == 0.0)
    assert np.allclose(rep.data, 0.5)


def test_gate_boundary_on_equal_logits():
    model = small_model(attn_threshold=0.3, seed=1)
    code = np.ones(3 * model.hyper.dim)
    neighbors = ad.constant(np.stack([code, code, code]))  # equal logits -> 1/3 each
    _, w = attend(model, ad.constant(code), neighbors)
    assert np.allclose(w.data, 1.0 / 3.0)
    model.hyper.attn_threshold = 0.34
    _, w = attend(model, ad.constant(code), neighbors)
    assert np.all(w.data == 0.0)


def test_gate_monotone_in_threshold(rng):
    model = small_model(seed=4)
    neighbors = codes_for(model, 5, rng)
    anchor = ad.constant(neighbors.data[0])
    previous = None
    for mu in (0.0, 0.05, 0.1, 0.2, 0.5, 1.0):
        model.hyper.attn_threshold = mu
        _, w = attend(model, anchor, neighbors)
        assert np.all(w.data >= 0.0)
        assert w.data.sum() <= 1.0 + 1e-12
        if previous is not None:
            assert np.all(w.data <= previous + 1e-15)
        previous = w.data


def test_permuting_neighbors_permutes_weights_and_keeps_rep(rng):
    model = small_model(seed=6)
    neighbors = codes_for(model, 5, rng)
    anchor = ad.constant(neighbors.data[2])
    rep, w = attend(model, anchor, neighbors)
    perm = np.array([3, 0, 4, 1, 2])
    rep_p, w_p = attend(model, anchor, ad.constant(neighbors.data[perm]))
    assert np.allclose(w_p.data, w.data[perm], atol=1e-12)
    assert np.allclose(rep_p.data, rep.data, atol=1e-12)


def test_dot_attention_variant(rng):
    model = small_model(attention="dot", seed=7)
    neighbors = codes_for(model, 4, rng)
    rep, w = attend(model, ad.constant(neighbors.data[1]), neighbors)
    assert w.data.sum() == pytest.approx(1.0, abs=1e-12)  # default gate passes all
    assert rep.shape == (model.hyper.out_dim,)


# ---------------------------------------------------------------------------
# batched view encoding

def test_identical_views_give_identical_representations():
    g = kg_from_strings(TOY)
    vg = build_views(g, m=2, seed=0)
    vg.tail_view = vg.head_view.copy()
    model = small_model()
    x, z = encode_views(model, g, vg, np.arange(len(g)))
    assert np.allclose(x.data, z.data)


def test_isolated_triple_views_agree():
    g = kg_from_strings([("a", "r", "b")])
    vg = build_views(g, m=3, seed=0)
    model = small_model()
    x, z = encode_views(model, g, vg, np.array([0]))
    assert np.allclose(x.data, z.data)
    assert np.all((x.data > 0) & (x.data < 1))


def test_encode_views_matches_per_row_attend(rng):
    g = kg_from_strings(TOY)
    vg = build_views(g, m=2, seed=1)
    model = small_model(seed=8)
    x, z = encode_views(model, g, vg, np.arange(len(g)))
    for i in range(len(g)):
        anchor = encode_local(model, g.triples[[i]])
        anchor = ad.reshape(anchor, (-1,))
        for view, batch in ((vg.head_view, x), (vg.tail_view, z)):
            neighbor_codes = encode_local(model, g.triples[view[i]])
            rep, _ = attend(model, anchor, neighbor_codes)
            assert np.allclose(batch.data[i], rep.data, atol=1e-12)


def test_encode_views_dot_attention_matches_attend(rng):
    g = kg_from_strings(TOY)
    vg = build_views(g, m=2, seed=1)
    model = small_model(seed=9, attention="dot")
    x, _ = encode_views(model, g, vg, np.arange(len(g)))
    anchor = ad.reshape(encode_local(model, g.triples[[1]]), (-1,))
    rep, _ = attend(model, anchor, encode_local(model, g.triples[vg.head_view[1]]))
    assert np.allclose(x.data[1], rep.data, atol=1e-12)


def test_representation_entries_in_unit_interval(rng):
    g = random_kg(rng, n_entities=12, n_relations=3, n_triples=50)
    vg = build_views(g, m=3, seed=2)
    model = small_model(n_entities=12, n_relations=3, fan_out=3)
    x, z = encode_views(model, g, vg, np.arange(len(g)))
    for r in (x.data, z.data):
        assert np.all((r > 0.0) & (r < 1.0))


def test_encoder_gradients_match_finite_differences(rng):
    g = kg_from_strings(TOY)
    vg = build_views(g, m=2, seed=3)
    model = small_model(dim=4, out_dim=3, seed=11, attn_threshold=0.01)
    params = [t for _, t in model.parameters()]
    coeff = ad.constant(rng.normal(size=(3, 3)))

    def loss():
        x, z = encode_views(model, g, vg, np.arange(len(g)))
        return ad.sum_(x * coeff) + ad.sum_(z * z)

    loss().backward()
    numeric = finite_difference_grads(lambda: loss().item(), params)
    for (name, p), n in zip(model.parameters(), numeric):
        assert grad_relative_error(p.grad, n) < 1e-4, name


def test_view_graph_mismatch_raises(rng):
    g = kg_from_strings(TOY)
    vg = build_views(kg_from_strings(TOY + [("x", "r9", "y")]), m=2, seed=0)
    model = small_model()
    with pytest.raises(ValueError):
        encode_views(model, g, vg, np.arange(len(g)))


def test_checkpoint_round_trip(tmp_path):
    model = small_model(seed=13, attn_threshold=0.007)
    path = tmp_path / "model.npz"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.hyper == model.hyper
    for (name_a, a), (name_b, b) in zip(model.parameters(), loaded.parameters()):
        assert name_a == name_b
        assert np.array_equal(a.data, b.data)
        assert b.requires_grad


def test_checkpoint_round_trip_concat_variant(tmp_path):
    model = small_model(seed=14, encoder="concat")
    path = tmp_path / "model.npz"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.lstm_fw is None and loaded.lstm_bw is None
    assert np.array_equal(loaded.proj_w.data, model.proj_w.data)
