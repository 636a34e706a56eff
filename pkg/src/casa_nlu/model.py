"""Joint model assembly: encoder + context fusion + heads, with the
attention-fused contextual variant, its non-contextual reduction, and the
recurrent-fusion baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import torch
import torch.nn as nn

from .context import AttentiveContextFusion, ContextEncoder, RecurrentContextFusion
from .data import DUMMY_DA, DUMMY_INTENT, Conversation, Vocabularies, slot_types
from .encoder import UtteranceEncoder

VARIANTS = ("casa", "nc", "cgru")


@dataclass
class SignalFlags:
    """Which contextual signals the model is allowed to use."""

    use_intent_hist: bool = True
    use_slot_hist: bool = True
    use_utt_hist: bool = True
    use_da_hist: bool = True

    @classmethod
    def none(cls) -> "SignalFlags":
        return cls(False, False, False, False)

    @classmethod
    def all(cls) -> "SignalFlags":
        return cls(True, True, True, True)


@dataclass
class Hyperparams:
    d_hidden: int = 56
    d_embed: int = 56
    d_intent: int = 16
    d_da: int = 16
    d_slot: int = 16
    dropout: float = 0.3
    context_window: int = 3
    max_tokens: int = 32
    label_window: int = 3
    learning_rate: float = 0.01
    alpha: float = 0.9
    beta: float = 0.9
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 0.5
    seeds: tuple[int, ...] = (1, 2, 3)
    singleton_unk_prob: float = 0.1
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.context_window < 0:
            raise ValueError("context_window must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be >= 0")
        self.seeds = tuple(self.seeds)


@dataclass
class TurnBatch:
    """Tensorized windows for a batch of turns.

    Utterances are encoded once per turn; `window_index` points each window
    slot at the row of the turn it refers to (-1 marks pre-conversation pads).
    """

    token_ids: torch.Tensor  # (N, L)
    token_mask: torch.Tensor  # (N, L) bool
    window_index: torch.Tensor  # (N, W+1)
    window_pad: torch.Tensor  # (N, W+1) bool
    intent_ids: torch.Tensor  # (N, W+1)
    da_ids: torch.Tensor  # (N, W+1)
    slot_multihot: torch.Tensor  # (N, n_slot_types)
    gold_intents: torch.Tensor  # (N,)
    gold_tags: torch.Tensor  # (N, L)
    is_first: torch.Tensor  # (N,) bool

    def __len__(self) -> int:
        return self.token_ids.shape[0]


@dataclass
class Predictions:
    intent_logits: torch.Tensor  # (N, |I|)
    sec_intent_logits: torch.Tensor  # (N, |I|)
    slot_logits: torch.Tensor  # (N, L, |tags|)
    attention: torch.Tensor | None  # (N, W+1, d_turn) or None for the GRU fusion
    utt_vectors: torch.Tensor  # (N, d_utt)


class JointNLUModel(nn.Module):
    def __init__(
        self,
        vocabs: Vocabularies,
        hp: Hyperparams | None = None,
        variant: str = "casa",
        flags: SignalFlags | None = None,
    ):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        hp = hp or Hyperparams()
        flags = flags or SignalFlags.all()
        if variant == "nc":
            flags = SignalFlags.none()
        self.hp = hp
        self.variant = variant
        self.flags = flags
        self.vocabs = vocabs
        self.window = 0 if variant == "nc" else hp.context_window

        d_utt = 2 * hp.d_hidden
        self.encoder = UtteranceEncoder(
            vocab_size=len(vocabs.token),
            d_embed=hp.d_embed,
            d_hidden=hp.d_hidden,
            max_tokens=hp.max_tokens,
            dropout=hp.dropout,
        )
        self.context = ContextEncoder(
            n_intents=len(vocabs.intent),
            n_dialog_acts=len(vocabs.dialog_act),
            n_slot_types=len(vocabs.slot_type),
            d_utt=d_utt,
            d_intent=hp.d_intent,
            d_da=hp.d_da,
            d_slot=hp.d_slot,
        )
        d_turn = self.context.layout.width
        if variant == "cgru":
            self.fusion: nn.Module = RecurrentContextFusion(d_turn, self.window)
        else:
            self.fusion = AttentiveContextFusion(d_turn, self.window)

        from .heads import IntentHead, SecondaryIntentHead, SlotHead

        self.intent_head = IntentHead(d_turn, d_utt, hp.d_hidden, len(vocabs.intent))
        self.secondary_head = SecondaryIntentHead(d_utt, len(vocabs.intent))
        self.slot_head = SlotHead(
            d_hidden=hp.d_hidden,
            d_slot=hp.d_slot,
            n_tags=len(vocabs.slot),
            label_window=hp.label_window,
        )

    def forward(self, batch: TurnBatch) -> Predictions:
        """Teacher-forced forward over a batch of windows whose history turns
        are other rows of the same batch."""
        enc = self.encoder(batch.token_ids, batch.token_mask)
        sent = enc.sentence_vector
        gather = batch.window_index.clamp(min=0)
        utt_w = sent[gather] * (batch.window_index >= 0).unsqueeze(-1).to(sent.dtype)
        return self._predict(enc, sent, utt_w, batch.intent_ids, batch.da_ids,
                             batch.window_pad, batch.slot_multihot)

    def forward_step(
        self,
        token_ids: torch.Tensor,
        token_mask: torch.Tensor,
        hist_utt_vecs: torch.Tensor,
        intent_ids: torch.Tensor,
        da_ids: torch.Tensor,
        window_pad: torch.Tensor,
        slot_multihot: torch.Tensor,
    ) -> Predictions:
        """Forward for one turn per row with history utterance vectors supplied
        externally (incremental evaluation). hist_utt_vecs: (B, W, d_utt)."""
        enc = self.encoder(token_ids, token_mask)
        sent = enc.sentence_vector
        utt_w = torch.cat([hist_utt_vecs, sent.unsqueeze(1)], dim=1)
        return self._predict(enc, sent, utt_w, intent_ids, da_ids, window_pad, slot_multihot)

    def _predict(self, enc, sent, utt_w, intent_ids, da_ids, window_pad, slot_multihot):
        flags = self.flags
        turn_vecs = self.context.build_turn_vectors(
            utt_w,
            intent_ids,
            da_ids,
            use_utt_hist=flags.use_utt_hist,
            use_intent_hist=flags.use_intent_hist,
            use_da_hist=flags.use_da_hist,
        )
        context_feature, attention = self.fusion(turn_vecs, window_pad)
        if not flags.use_slot_hist:
            slot_multihot = torch.zeros_like(slot_multihot)
        slot_hist_vec = self.context.embed_slot_history(slot_multihot)
        intent_logits, penultimate = self.intent_head(context_feature, sent)
        sec_logits = self.secondary_head(sent)
        slot_logits = self.slot_head(
            enc.token_states, enc.hidden, slot_hist_vec, penultimate, enc.token_mask
        )
        return Predictions(intent_logits, sec_logits, slot_logits, attention, sent)


def collate_conversations(
    conversations: list[Conversation],
    vocabs: Vocabularies,
    window: int,
    encode_token=None,
) -> TurnBatch:
    """Tensorize all turns of the given conversations with gold history.

    `encode_token` maps a surface to its id (defaults to vocab lookup with
    UNK fallback); training passes a stochastic singleton-dropping encoder.
    """
    if encode_token is None:
        encode_token = vocabs.token.id_or_unk
    turns = [(conv, i) for conv in conversations for i in range(len(conv.turns))]
    n = len(turns)
    max_len = max(len(conv.turns[i].tokens) for conv, i in turns)
    width = window + 1

    token_ids = torch.zeros(n, max_len, dtype=torch.long)
    token_mask = torch.zeros(n, max_len, dtype=torch.bool)
    window_index = torch.full((n, width), -1, dtype=torch.long)
    window_pad = torch.ones(n, width, dtype=torch.bool)
    intent_ids = torch.full((n, width), vocabs.intent.id(DUMMY_INTENT), dtype=torch.long)
    da_ids = torch.full((n, width), vocabs.dialog_act.id(DUMMY_DA), dtype=torch.long)
    slot_multihot = torch.zeros(n, len(vocabs.slot_type))
    gold_intents = torch.zeros(n, dtype=torch.long)
    gold_tags = torch.zeros(n, max_len, dtype=torch.long)
    is_first = torch.zeros(n, dtype=torch.bool)

    row = 0
    base = 0
    for conv in conversations:
        for i, turn in enumerate(conv.turns):
            for j, tok in enumerate(turn.tokens):
                token_ids[row, j] = encode_token(tok)
                token_mask[row, j] = True
                gold_tags[row, j] = vocabs.slot.id(turn.slots[j])
            gold_intents[row] = vocabs.intent.id(turn.intent)
            is_first[row] = i == 0
            for w in range(width):
                t = i - window + w
                if t < 0:
                    continue
                window_index[row, w] = base + t
                window_pad[row, w] = False
                if t < i:  # history slots expose their gold labels
                    intent_ids[row, w] = vocabs.intent.id(conv.turns[t].intent)
                    da_ids[row, w] = vocabs.dialog_act.id(conv.turns[t].dialog_act)
            for prev in conv.turns[:i]:
                for st in slot_types(prev.slots):
                    slot_multihot[row, vocabs.slot_type.id(st)] = 1.0
            row += 1
        base += len(conv.turns)

    return TurnBatch(
        token_ids=token_ids,
        token_mask=token_mask,
        window_index=window_index,
        window_pad=window_pad,
        intent_ids=intent_ids,
        da_ids=da_ids,
        slot_multihot=slot_multihot,
        gold_intents=gold_intents,
        gold_tags=gold_tags,
        is_first=is_first,
    )


def save_checkpoint(model: JointNLUModel, path: str | Path) -> None:
    payload = {
        "state_dict": model.state_dict(),
        "hyperparams": asdict(model.hp),
        "variant": model.variant,
        "flags": asdict(model.flags),
        "vocabs": model.vocabs.to_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> JointNLUModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    hp = Hyperparams(**payload["hyperparams"])
    vocabs = Vocabularies.from_dict(payload["vocabs"])
    model = JointNLUModel(
        vocabs,
        hp,
        variant=payload["variant"],
        flags=SignalFlags(**payload["flags"]),
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def parameter_shapes(model: JointNLUModel) -> dict[str, tuple[int, ...]]:
    """Stable name -> shape table of every learnable tensor (checkpoint schema)."""
    return {name: tuple(p.shape) for name, p in model.named_parameters()}
