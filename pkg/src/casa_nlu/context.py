"""Per-turn contextual signal encoding and temporal fusion over the window.

Each window slot becomes a turn vector [utterance; intent; dialog act]; the
K+1 turn vectors (plus learned turn-position embeddings) are fused into a
single context feature either by per-dimension attention or, for the
recurrent baseline, by a GRU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .layers import MultiDimAttentionPool


@dataclass(frozen=True)
class SignalLayout:
    """Dimension ranges of the signals inside a turn vector."""

    d_utt: int
    d_intent: int
    d_da: int

    @property
    def width(self) -> int:
        return self.d_utt + self.d_intent + self.d_da

    def blocks(self) -> dict[str, slice]:
        u, i = self.d_utt, self.d_intent
        return {
            "utt": slice(0, u),
            "intent": slice(u, u + i),
            "da": slice(u + i, u + i + self.d_da),
        }


def summarize_attention(attn: np.ndarray, layout: SignalLayout) -> dict[str, np.ndarray]:
    """Average per-dimension attention weights over each signal's block.

    attn has one row per turn-vector dimension and one column per window slot;
    the summary keeps one convex weight vector over slots per signal.
    """
    if attn.ndim != 2 or attn.shape[0] != layout.width:
        raise ValueError(
            f"attention has {attn.shape[0] if attn.ndim == 2 else '?'} rows, "
            f"layout covers {layout.width} dimensions"
        )
    return {name: attn[block, :].mean(axis=0) for name, block in layout.blocks().items()}


class ContextEncoder(nn.Module):
    """Embeds intent / dialog-act / slot-history signals and builds turn vectors."""

    def __init__(
        self,
        n_intents: int,
        n_dialog_acts: int,
        n_slot_types: int,
        d_utt: int,
        d_intent: int = 16,
        d_da: int = 16,
        d_slot: int = 16,
    ):
        super().__init__()
        self.layout = SignalLayout(d_utt, d_intent, d_da)
        self.d_slot = d_slot
        self.intent_embedding = nn.Embedding(n_intents, d_intent)
        self.da_embedding = nn.Embedding(n_dialog_acts, d_da)
        self.slot_embedding = nn.Embedding(max(n_slot_types, 1), d_slot)

    def embed_intent(self, intent_ids: torch.Tensor) -> torch.Tensor:
        return self.intent_embedding(intent_ids)

    def embed_da(self, da_ids: torch.Tensor) -> torch.Tensor:
        return self.da_embedding(da_ids)

    def embed_slot_history(self, multihot: torch.Tensor) -> torch.Tensor:
        """Mean embedding of the distinct slot types seen in previous turns.

        multihot: (B, n_slot_types) with 1.0 at observed types. Empty
        histories yield a zero vector.
        """
        multihot = multihot.to(self.slot_embedding.weight.dtype)
        counts = multihot.sum(dim=-1, keepdim=True).clamp(min=1.0)
        return (multihot @ self.slot_embedding.weight) / counts

    def build_turn_vectors(
        self,
        utt_vecs: torch.Tensor,
        intent_ids: torch.Tensor,
        da_ids: torch.Tensor,
        use_utt_hist: bool = True,
        use_intent_hist: bool = True,
        use_da_hist: bool = True,
    ) -> torch.Tensor:
        """Concatenate [utterance; intent; dialog act] per window slot.

        utt_vecs: (B, W, d_utt); intent_ids, da_ids: (B, W). Disabled signals
        are zeroed; the current turn (last slot) always keeps its utterance.
        """
        if utt_vecs.shape[-1] != self.layout.d_utt:
            raise ValueError(
                f"utterance width {utt_vecs.shape[-1]} != layout {self.layout.d_utt}"
            )
        intent_vecs = self.embed_intent(intent_ids)
        da_vecs = self.embed_da(da_ids)
        if not use_utt_hist:
            keep = torch.zeros(utt_vecs.shape[1], 1, dtype=utt_vecs.dtype,
                               device=utt_vecs.device)
            keep[-1] = 1.0
            utt_vecs = utt_vecs * keep
        if not use_intent_hist:
            intent_vecs = torch.zeros_like(intent_vecs)
        if not use_da_hist:
            da_vecs = torch.zeros_like(da_vecs)
        return torch.cat([utt_vecs, intent_vecs, da_vecs], dim=-1)


class AttentiveContextFusion(nn.Module):
    """Per-dimension attention-weighted average of the window's turn vectors."""

    def __init__(self, d_turn: int, window: int):
        super().__init__()
        self.window = window
        self.turn_pos_embedding = nn.Parameter(torch.randn(window + 1, d_turn) * 0.1)
        self.pool = MultiDimAttentionPool(d_turn, out_bias=False)

    def forward(
        self, turn_vecs: torch.Tensor, pad_mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """turn_vecs: (B, W, d_turn); pad_mask: (B, W) bool, True at pad slots.

        Returns the fused context feature (B, d_turn) and the per-dimension
        attention weights (B, W, d_turn); padded slots get weight 0.
        """
        if bool(pad_mask[:, -1].any()):
            raise ValueError("the current-turn slot of a window must not be padded")
        positioned = turn_vecs + self.turn_pos_embedding.unsqueeze(0)
        return self.pool(positioned, ~pad_mask)


class RecurrentContextFusion(nn.Module):
    """GRU over the window's turn vectors: the final state replaces the
    attention-fused context feature. Pad slots are skipped."""

    def __init__(self, d_turn: int, window: int):
        super().__init__()
        self.window = window
        self.turn_pos_embedding = nn.Parameter(torch.randn(window + 1, d_turn) * 0.1)
        self.cell = nn.GRUCell(d_turn, d_turn)

    def forward(
        self, turn_vecs: torch.Tensor, pad_mask: torch.Tensor
    ) -> tuple[torch.Tensor, None]:
        if bool(pad_mask[:, -1].any()):
            raise ValueError("the current-turn slot of a window must not be padded")
        positioned = turn_vecs + self.turn_pos_embedding.unsqueeze(0)
        batch, width, d_turn = positioned.shape
        state = positioned.new_zeros(batch, d_turn)
        for t in range(width):
            new_state = self.cell(positioned[:, t], state)
            real = (~pad_mask[:, t]).unsqueeze(-1).to(state.dtype)
            state = real * new_state + (1.0 - real) * state
        return state, None
