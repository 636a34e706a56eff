"""Position-aware directional self-attention utterance encoder.

Produces per-token contextualized states (two directional halves, gated
against the position-augmented token states) and a single per-dimension
attention-pooled sentence vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .layers import DirectionalSelfAttention, FusionGate, MultiDimAttentionPool

PAD_ID = 0


@dataclass
class UtteranceEncoding:
    """Outputs of the encoder for a batch of utterances.

    hidden:          (B, L, d_h)  position-augmented token states
    token_states:    (B, L, 2*d_h) forward/backward gated states, concatenated
    sentence_vector: (B, 2*d_h)   per-dimension attention pool of token_states
    token_mask:      (B, L) bool  True at real tokens
    """

    hidden: torch.Tensor
    token_states: torch.Tensor
    sentence_vector: torch.Tensor
    token_mask: torch.Tensor


class UtteranceEncoder(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        d_embed: int = 56,
        d_hidden: int = 56,
        max_tokens: int = 32,
        dropout: float = 0.3,
    ):
        super().__init__()
        self.d_hidden = d_hidden
        self.max_tokens = max_tokens
        self.token_embedding = nn.Embedding(vocab_size, d_embed, padding_idx=PAD_ID)
        self.input_proj = nn.Linear(d_embed, d_hidden)
        self.pos_embedding = nn.Parameter(torch.randn(max_tokens, d_hidden) * 0.1)
        self.attn_fwd = DirectionalSelfAttention(d_hidden, forward_direction=True)
        self.attn_bwd = DirectionalSelfAttention(d_hidden, forward_direction=False)
        self.gate_fwd = FusionGate(d_hidden)
        self.gate_bwd = FusionGate(d_hidden)
        self.pool = MultiDimAttentionPool(2 * d_hidden, out_bias=True)
        self.embed_dropout = nn.Dropout(dropout)
        self.state_dropout = nn.Dropout(dropout)

    def embed_and_position(self, token_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Token embeddings projected to the hidden size plus learned absolute
        position embeddings; padded columns are zeroed. (B, L) -> (B, L, d_h)."""
        length = token_ids.shape[1]
        if length > self.max_tokens:
            raise ValueError(f"utterance length {length} exceeds cap {self.max_tokens}")
        if int(token_ids.max()) >= self.token_embedding.num_embeddings:
            raise ValueError("token id out of vocabulary range")
        emb = self.embed_dropout(self.token_embedding(token_ids))
        hidden = self.input_proj(emb) + self.pos_embedding[:length]
        return hidden * mask.unsqueeze(-1).to(hidden.dtype)

    def forward(self, token_ids: torch.Tensor, mask: torch.Tensor) -> UtteranceEncoding:
        """Encode a batch of padded utterances. token_ids, mask: (B, L)."""
        hidden = self.embed_and_position(token_ids, mask)
        fwd = self.attn_fwd(hidden, mask)
        bwd = self.attn_bwd(hidden, mask)
        ctx_fwd = self.gate_fwd(hidden, fwd)
        ctx_bwd = self.gate_bwd(hidden, bwd)
        states = torch.cat([ctx_fwd, ctx_bwd], dim=-1)
        states = states * mask.unsqueeze(-1).to(states.dtype)
        states = self.state_dropout(states)
        sentence, _ = self.pool(states, mask)
        return UtteranceEncoding(
            hidden=hidden,
            token_states=states,
            sentence_vector=sentence,
            token_mask=mask,
        )
