"""Intent and slot prediction heads and the aggregated joint training loss."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import FusionGate


class IntentHead(nn.Module):
    """Context feature -> hidden, concat with the utterance vector, project
    down, then classify. The penultimate vector is shared with the slot head."""

    def __init__(self, d_turn: int, d_utt: int, d_hidden: int, n_intents: int):
        super().__init__()
        self.context_proj = nn.Linear(d_turn, d_hidden)
        self.merge_proj = nn.Linear(d_hidden + d_utt, d_hidden)
        self.out = nn.Linear(d_hidden, n_intents)

    def forward(
        self, context_feature: torch.Tensor, utt_vec: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        h = torch.tanh(self.context_proj(context_feature))
        penultimate = torch.tanh(self.merge_proj(torch.cat([h, utt_vec], dim=-1)))
        return self.out(penultimate), penultimate


class SecondaryIntentHead(nn.Module):
    """Utterance-level intent classifier; sees no dialogue context at all."""

    def __init__(self, d_utt: int, n_intents: int):
        super().__init__()
        self.out = nn.Linear(d_utt, n_intents)

    def forward(self, utt_vec: torch.Tensor) -> torch.Tensor:
        return self.out(utt_vec)


class SlotHead(nn.Module):
    """Token tagger: gate token states against the utterance embedding, widen
    with a sliding window over neighbors, append slot history and the intent
    head's penultimate vector, then run a left-to-right GRU into tag logits."""

    def __init__(
        self,
        d_hidden: int,
        d_slot: int,
        n_tags: int,
        label_window: int = 3,
    ):
        super().__init__()
        if label_window < 1 or label_window % 2 == 0:
            raise ValueError("label window must be odd and >= 1")
        self.label_window = label_window
        self.up_proj = nn.Linear(d_hidden, 2 * d_hidden)
        self.gate = FusionGate(2 * d_hidden)
        gru_in = label_window * 2 * d_hidden + d_slot + d_hidden
        self.cell = nn.GRUCell(gru_in, d_hidden)
        self.out = nn.Linear(d_hidden, n_tags)

    def forward(
        self,
        token_states: torch.Tensor,
        hidden: torch.Tensor,
        slot_hist_vec: torch.Tensor,
        penultimate: torch.Tensor,
        mask: torch.Tensor,
    ) -> torch.Tensor:
        """token_states: (B, L, 2d_h), hidden: (B, L, d_h),
        slot_hist_vec: (B, d_slot), penultimate: (B, d_h), mask: (B, L).
        Returns tag logits (B, L, n_tags); padded positions carry garbage the
        loss and metrics must ignore."""
        b, length, _ = token_states.shape
        fused = self.gate(self.up_proj(hidden), token_states)
        fused = fused * mask.unsqueeze(-1).to(fused.dtype)

        half = self.label_window // 2
        padded = F.pad(fused, (0, 0, half, half))
        windows = torch.cat(
            [padded[:, off : off + length] for off in range(self.label_window)], dim=-1
        )
        extras = torch.cat([slot_hist_vec, penultimate], dim=-1)
        inputs = torch.cat(
            [windows, extras.unsqueeze(1).expand(b, length, extras.shape[-1])], dim=-1
        )

        state = token_states.new_zeros(b, self.cell.hidden_size)
        logits = []
        for j in range(length):
            state = self.cell(inputs[:, j], state)
            logits.append(self.out(state))
        return torch.stack(logits, dim=1)


def joint_loss(
    intent_logits: torch.Tensor,
    sec_intent_logits: torch.Tensor,
    slot_logits: torch.Tensor,
    gold_intents: torch.Tensor,
    gold_tags: torch.Tensor,
    token_mask: torch.Tensor,
    alpha: float = 0.9,
    beta: float = 0.9,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Aggregated loss: intent CE + alpha * slot CE + beta * secondary intent CE.

    The slot term averages token cross-entropy over the real tokens of each
    utterance, then over the batch, so padding never contributes.
    """
    n_intents = intent_logits.shape[-1]
    n_tags = slot_logits.shape[-1]
    if int(gold_intents.min()) < 0 or int(gold_intents.max()) >= n_intents:
        raise ValueError("gold intent id out of range")
    if int(gold_tags.min()) < 0 or int(gold_tags.max()) >= n_tags:
        raise ValueError("gold slot tag id out of range")

    ic = F.cross_entropy(intent_logits, gold_intents)
    sec = F.cross_entropy(sec_intent_logits, gold_intents)
    token_ce = F.cross_entropy(
        slot_logits.reshape(-1, n_tags), gold_tags.reshape(-1), reduction="none"
    ).reshape(gold_tags.shape)
    fmask = token_mask.to(token_ce.dtype)
    per_utt = (token_ce * fmask).sum(dim=1) / fmask.sum(dim=1).clamp(min=1.0)
    sl = per_utt.mean()

    total = ic + alpha * sl + beta * sec
    parts = {"ic": float(ic.detach()), "sl": float(sl.detach()), "sec_ic": float(sec.detach())}
    return total, parts
