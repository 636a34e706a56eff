"""Signal embedding, turn-vector assembly, and temporal fusion tests."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from casa_nlu.context import (
    AttentiveContextFusion,
    ContextEncoder,
    RecurrentContextFusion,
    SignalLayout,
    summarize_attention,
)


def make_context(seed=0, d_utt=4, d_intent=3, d_da=3, d_slot=3):
    torch.manual_seed(seed)
    return ContextEncoder(5, 4, 3, d_utt=d_utt, d_intent=d_intent, d_da=d_da, d_slot=d_slot)


# ---------------------------------------------------------------------------
# signal embeddings
# ---------------------------------------------------------------------------

def test_embed_intent_rows():
    ctx = make_context()
    ids = torch.tensor([0, 3])
    out = ctx.embed_intent(ids)
    assert torch.equal(out[0], ctx.intent_embedding.weight[0])
    assert torch.equal(out[1], ctx.intent_embedding.weight[3])
    assert not torch.allclose(out[0], out[1])


def test_embed_intent_out_of_range():
    ctx = make_context()
    with pytest.raises(IndexError):
        ctx.embed_intent(torch.tensor([99]))


def test_embed_da_rows():
    ctx = make_context()
    out = ctx.embed_da(torch.tensor([1, 2]))
    assert torch.equal(out[0], ctx.da_embedding.weight[1])
    assert not torch.allclose(out[0], out[1])


def test_embed_lookup_gradient_reaches_one_row():
    ctx = make_context()
    out = ctx.embed_intent(torch.tensor([2]))
    out.sum().backward()
    grad = ctx.intent_embedding.weight.grad
    assert torch.all(grad[2] == 1)
    other = torch.cat([grad[:2], grad[3:]])
    assert torch.all(other == 0)


def test_embed_slot_history_empty_is_zero():
    ctx = make_context()
    out = ctx.embed_slot_history(torch.zeros(2, 3))
    assert torch.all(out == 0)


def test_embed_slot_history_single_is_row():
    ctx = make_context()
    hot = torch.tensor([[0.0, 1.0, 0.0]])
    out = ctx.embed_slot_history(hot)
    assert torch.allclose(out[0], ctx.slot_embedding.weight[1])


def test_embed_slot_history_mean_hand_case():
    ctx = make_context(d_slot=2)
    with torch.no_grad():
        ctx.slot_embedding.weight.copy_(torch.tensor([[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]]))
    out = ctx.embed_slot_history(torch.tensor([[1.0, 1.0, 0.0]]))
    np.testing.assert_allclose(out[0].detach().numpy(), [0.5, 0.5], atol=1e-7)


# ---------------------------------------------------------------------------
# turn vectors
# ---------------------------------------------------------------------------

def test_turn_vector_concat_and_slices():
    ctx = make_context()
    utt = torch.randn(2, 3, 4)
    intents = torch.randint(0, 5, (2, 3))
    das = torch.randint(0, 4, (2, 3))
    tv = ctx.build_turn_vectors(utt, intents, das)
    assert tv.shape == (2, 3, ctx.layout.width)
    blocks = ctx.layout.blocks()
    assert torch.equal(tv[..., blocks["utt"]], utt)
    assert torch.allclose(tv[..., blocks["intent"]], ctx.embed_intent(intents))
    assert torch.allclose(tv[..., blocks["da"]], ctx.embed_da(das))


def test_turn_vector_zeros_in_zeros_out():
    ctx = make_context()
    with torch.no_grad():
        ctx.intent_embedding.weight.zero_()
        ctx.da_embedding.weight.zero_()
    tv = ctx.build_turn_vectors(torch.zeros(1, 2, 4), torch.zeros(1, 2, dtype=torch.long),
                                torch.zeros(1, 2, dtype=torch.long))
    assert torch.all(tv == 0)


def test_turn_vector_width_mismatch():
    ctx = make_context()
    with pytest.raises(ValueError, match="width"):
        ctx.build_turn_vectors(torch.zeros(1, 2, 5), torch.zeros(1, 2, dtype=torch.long),
                               torch.zeros(1, 2, dtype=torch.long))


def test_turn_vector_signal_flags():
    ctx = make_context()
    utt = torch.randn(1, 3, 4)
    intents = torch.randint(1, 5, (1, 3))
    das = torch.randint(1, 4, (1, 3))
    blocks = ctx.layout.blocks()
    tv = ctx.build_turn_vectors(utt, intents, das, use_intent_hist=False)
    assert torch.all(tv[..., blocks["intent"]] == 0)
    tv = ctx.build_turn_vectors(utt, intents, das, use_da_hist=False)
    assert torch.all(tv[..., blocks["da"]] == 0)
    tv = ctx.build_turn_vectors(utt, intents, das, use_utt_hist=False)
    assert torch.all(tv[:, :2, blocks["utt"]] == 0)  # history slots zeroed
    assert torch.equal(tv[:, 2, blocks["utt"]], utt[:, 2])  # current kept


# ---------------------------------------------------------------------------
# attentive fusion (per-dimension weighted average over the window)
# ---------------------------------------------------------------------------

def brute_force_fusion(fusion: AttentiveContextFusion, turn_vecs, pad_mask):
    """Double loop over (dimension, slot), straight from the weighted-average
    definition."""
    tp = (turn_vecs + fusion.turn_pos_embedding.unsqueeze(0)).detach().numpy()
    keep = (~pad_mask).numpy()
    w_in = fusion.pool.score_in.weight.detach().numpy()
    b_in = fusion.pool.score_in.bias.detach().numpy()
    w_out = fusion.pool.score_out.weight.detach().numpy()
    b, width, d = tp.shape
    fused = np.zeros((b, d))
    attn = np.zeros((b, width, d))
    for bi in range(b):
        scores = np.stack([
            w_out @ (1.0 / (1.0 + np.exp(-(w_in @ tp[bi, t] + b_in))))
            for t in range(width)
        ])
        for dim in range(d):
            allowed = [t for t in range(width) if keep[bi, t]]
            e = np.exp(scores[allowed, dim] - max(scores[t, dim] for t in allowed))
            w = e / e.sum()
            for k, t in enumerate(allowed):
                attn[bi, t, dim] = w[k]
                fused[bi, dim] += w[k] * tp[bi, t, dim]
    return fused, attn


def test_fuse_matches_brute_force():
    torch.manual_seed(1)
    fusion = AttentiveContextFusion(d_turn=3, window=2).double()
    turn_vecs = torch.randn(4, 3, 3, dtype=torch.float64)
    pad_mask = torch.tensor([
        [False, False, False],
        [True, False, False],
        [True, True, False],
        [False, True, False],
    ])
    fused, attn = fusion(turn_vecs, pad_mask)
    want_fused, want_attn = brute_force_fusion(fusion, turn_vecs, pad_mask)
    np.testing.assert_allclose(fused.detach().numpy(), want_fused, atol=1e-10)
    np.testing.assert_allclose(attn.detach().numpy(), want_attn, atol=1e-10)


def test_fuse_window_zero_is_identity():
    torch.manual_seed(2)
    fusion = AttentiveContextFusion(d_turn=5, window=0)
    tv = torch.randn(3, 1, 5)
    fused, attn = fusion(tv, torch.zeros(3, 1, dtype=torch.bool))
    assert torch.allclose(fused, tv[:, 0] + fusion.turn_pos_embedding[0], atol=1e-6)
    assert torch.allclose(attn, torch.ones(3, 1, 5), atol=1e-6)


def test_fuse_constant_scores_give_mean():
    torch.manual_seed(3)
    fusion = AttentiveContextFusion(d_turn=4, window=2)
    with torch.no_grad():
        fusion.pool.score_out.weight.zero_()
    tv = torch.randn(1, 3, 4)
    pad = torch.tensor([[True, False, False]])
    fused, attn = fusion(tv, pad)
    tp = tv + fusion.turn_pos_embedding
    assert torch.allclose(fused[0], tp[0, 1:].mean(0), atol=1e-6)
    assert torch.allclose(attn[0, 1:], torch.full((2, 4), 0.5), atol=1e-6)


def test_fuse_attention_normalized_and_zero_on_pads():
    torch.manual_seed(4)
    fusion = AttentiveContextFusion(d_turn=6, window=3)
    tv = torch.randn(5, 4, 6)
    pad = torch.tensor([
        [True, True, True, False],
        [True, True, False, False],
        [True, False, False, False],
        [False, False, False, False],
        [True, False, True, False],
    ])
    _, attn = fusion(tv, pad)
    assert torch.all(attn[pad] == 0)
    assert torch.all(attn >= 0)
    assert torch.allclose(attn.sum(1), torch.ones(5, 6), atol=1e-6)


def test_fuse_rejects_padded_current_slot():
    fusion = AttentiveContextFusion(d_turn=3, window=1)
    tv = torch.randn(1, 2, 3)
    with pytest.raises(ValueError, match="current-turn"):
        fusion(tv, torch.tensor([[False, True]]))


def test_fuse_turn_position_sensitivity():
    # swapping two context turns changes the output when position rows differ
    torch.manual_seed(5)
    fusion = AttentiveContextFusion(d_turn=4, window=2)
    a = torch.randn(1, 3, 4)
    b = a.clone()
    b[0, 0], b[0, 1] = a[0, 1].clone(), a[0, 0].clone()
    pad = torch.zeros(1, 3, dtype=torch.bool)
    fa, _ = fusion(a, pad)
    fb, _ = fusion(b, pad)
    assert not torch.allclose(fa, fb)


# ---------------------------------------------------------------------------
# recurrent fusion baseline
# ---------------------------------------------------------------------------

def test_recurrent_fusion_shape_and_pad_skipping():
    torch.manual_seed(6)
    fusion = RecurrentContextFusion(d_turn=4, window=2)
    tv = torch.randn(2, 3, 4)
    pad = torch.tensor([[True, True, False], [False, False, False]])
    state, attn = fusion(tv, pad)
    assert state.shape == (2, 4)
    assert attn is None
    # a fully padded prefix must equal running the cell on the last slot only
    with torch.no_grad():
        last = (tv[:1, 2] + fusion.turn_pos_embedding[2]).clone()
        want = fusion.cell(last, torch.zeros(1, 4))
    assert torch.allclose(state[0], want[0], atol=1e-6)


def test_recurrent_fusion_rejects_padded_current():
    fusion = RecurrentContextFusion(d_turn=3, window=1)
    with pytest.raises(ValueError, match="current-turn"):
        fusion(torch.randn(1, 2, 3), torch.tensor([[False, True]]))


# ---------------------------------------------------------------------------
# attention summaries
# ---------------------------------------------------------------------------

def test_summarize_uniform_attention():
    layout = SignalLayout(2, 1, 1)
    attn = np.full((4, 3), 1.0 / 3.0)
    out = summarize_attention(attn, layout)
    for sig in ("utt", "intent", "da"):
        np.testing.assert_allclose(out[sig], [1 / 3] * 3)


def test_summarize_rows_sum_to_one():
    rng = np.random.default_rng(0)
    layout = SignalLayout(3, 2, 2)
    raw = rng.random((7, 4))
    attn = raw / raw.sum(axis=1, keepdims=True)
    out = summarize_attention(attn, layout)
    for sig, weights in out.items():
        np.testing.assert_allclose(weights.sum(), 1.0, atol=1e-12)


def test_summarize_hand_case():
    # d_T = 4; means per signal block computed by hand
    layout = SignalLayout(2, 1, 1)
    attn = np.array([
        [1.0, 0.0],
        [0.5, 0.5],
        [0.2, 0.8],
        [0.4, 0.6],
    ])
    out = summarize_attention(attn, layout)
    np.testing.assert_allclose(out["utt"], [0.75, 0.25])
    np.testing.assert_allclose(out["intent"], [0.2, 0.8])
    np.testing.assert_allclose(out["da"], [0.4, 0.6])


def test_summarize_rejects_bad_layout():
    layout = SignalLayout(2, 1, 1)
    with pytest.raises(ValueError, match="rows"):
        summarize_attention(np.zeros((5, 3)), layout)
