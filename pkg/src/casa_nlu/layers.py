"""Attention building blocks: masked softmax, directional token attention,
fusion gates, and per-dimension sequence pooling."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

_MASK_FILL = -1e9


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor, dim: int) -> torch.Tensor:
    """Softmax over `dim` restricted to positions where `mask` is True.

    Positions outside the mask get weight exactly 0. If a row has no allowed
    position at all, the whole row is 0 rather than NaN.
    """
    filled = scores.masked_fill(~mask, _MASK_FILL)
    weights = torch.softmax(filled, dim=dim)
    return weights * mask.to(weights.dtype)


class DirectionalSelfAttention(nn.Module):
    """Multi-dimensional token-to-token attention restricted to one direction.

    Each output position j attends over source positions strictly before
    (forward) or strictly after (backward) j, with a separate attention weight
    per hidden dimension. Positions with no allowed source produce zeros.
    """

    def __init__(self, d_hidden: int, forward_direction: bool):
        super().__init__()
        self.d_hidden = d_hidden
        self.forward_direction = forward_direction
        self.src_proj = nn.Linear(d_hidden, d_hidden, bias=False)
        self.tgt_proj = nn.Linear(d_hidden, d_hidden)
        self.score_proj = nn.Linear(d_hidden, d_hidden)
        self.value_proj = nn.Linear(d_hidden, d_hidden)

    def forward(self, hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """hidden: (B, L, d), mask: (B, L) bool -> (B, L, d)."""
        b, length, d = hidden.shape
        values = self.value_proj(hidden)
        # pairwise scores s[b, j, i, d]: source i feeding target j
        pair = self.src_proj(hidden).unsqueeze(1) + self.tgt_proj(hidden).unsqueeze(2)
        scores = self.score_proj(torch.tanh(pair)) / math.sqrt(d)
        idx = torch.arange(length, device=hidden.device)
        if self.forward_direction:
            allowed = idx.unsqueeze(1) > idx.unsqueeze(0)  # i < j
        else:
            allowed = idx.unsqueeze(1) < idx.unsqueeze(0)  # i > j
        allowed = allowed.unsqueeze(0) & mask.unsqueeze(1)  # (B, j, i)
        weights = masked_softmax(scores, allowed.unsqueeze(-1), dim=2)
        out = torch.einsum("bjid,bid->bjd", weights, values)
        return out * mask.unsqueeze(-1).to(out.dtype)


class FusionGate(nn.Module):
    """Sigmoid-gated convex blend g*a + (1-g)*b of two equal-width inputs."""

    def __init__(self, d: int):
        super().__init__()
        self.keep_proj = nn.Linear(d, d, bias=False)
        self.update_proj = nn.Linear(d, d)

    def gate(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.keep_proj(a) + self.update_proj(b))

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        g = self.gate(a, b)
        return g * a + (1.0 - g) * b


class MultiDimAttentionPool(nn.Module):
    """Source-to-token pooling: per-dimension softmax over sequence positions.

    Scores come from a two-layer map of the inputs; each hidden dimension gets
    its own convex weighting over the unmasked positions, so the pooled vector
    is a per-dimension weighted average of the sequence.
    """

    def __init__(self, d: int, out_bias: bool = True):
        super().__init__()
        self.score_in = nn.Linear(d, d)
        self.score_out = nn.Linear(d, d, bias=out_bias)

    def forward(
        self, seq: torch.Tensor, mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """seq: (B, L, d), mask: (B, L) bool -> pooled (B, d), weights (B, L, d)."""
        if not bool(mask.any(dim=1).all()):
            raise ValueError("attention pool needs at least one unmasked position per row")
        scores = self.score_out(torch.sigmoid(self.score_in(seq)))
        weights = masked_softmax(scores, mask.unsqueeze(-1), dim=1)
        return (weights * seq).sum(dim=1), weights
