"""Training loop, evaluation metrics, ablation grid, and gradient checking."""

from __future__ import annotations

import copy
import logging
import math
import random
from dataclasses import asdict, dataclass
from typing import Iterable, Iterator

import torch

from .data import (
    Conversation,
    Dataset,
    Turn,
    assemble_window,
    make_dataset,
    slot_types,
    token_frequencies,
    DUMMY_DA,
    DUMMY_INTENT,
    O_TAG,
    UNK,
)
from .context import summarize_attention
from .heads import joint_loss
from .model import (
    Hyperparams,
    JointNLUModel,
    SignalFlags,
    TurnBatch,
    collate_conversations,
)

logger = logging.getLogger(__name__)

# fixed seed for carving a validation split out of a training corpus, so the
# same split is used for every training seed
_SPLIT_SEED = 20240601


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during optimization."""


@dataclass
class MetricsReport:
    """Turn-level intent accuracy and token-level slot F1, in percent."""

    ic_accuracy: float
    sl_token_f1: float
    ic_first_turn: float
    ic_followup: float | None
    n_turns: int
    n_first: int
    n_followup: int

    def to_dict(self) -> dict:
        return asdict(self)


def mean_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Arithmetic mean of per-seed reports; counts come from the first one."""
    if not reports:
        raise ValueError("no reports to average")
    followups = [r.ic_followup for r in reports if r.ic_followup is not None]

    def avg(values):
        return sum(values) / len(values)

    return MetricsReport(
        ic_accuracy=avg([r.ic_accuracy for r in reports]),
        sl_token_f1=avg([r.sl_token_f1 for r in reports]),
        ic_first_turn=avg([r.ic_first_turn for r in reports]),
        ic_followup=avg(followups) if followups else None,
        n_turns=reports[0].n_turns,
        n_first=reports[0].n_first,
        n_followup=reports[0].n_followup,
    )


class _Scorer:
    def __init__(self):
        self.first_total = self.first_hit = 0
        self.follow_total = self.follow_hit = 0
        self.tag_tp = self.tag_pred = self.tag_gold = 0

    def add_turn(self, is_first: bool, gold_intent: str, pred_intent: str,
                 gold_tags: list[str], pred_tags: list[str]) -> None:
        hit = int(gold_intent == pred_intent)
        if is_first:
            self.first_total += 1
            self.first_hit += hit
        else:
            self.follow_total += 1
            self.follow_hit += hit
        for g, p in zip(gold_tags, pred_tags):
            if p != O_TAG:
                self.tag_pred += 1
            if g != O_TAG:
                self.tag_gold += 1
            if g != O_TAG and g == p:
                self.tag_tp += 1

    def report(self) -> MetricsReport:
        total = self.first_total + self.follow_total
        hits = self.first_hit + self.follow_hit
        if self.tag_gold == 0 and self.tag_pred == 0:
            f1 = 100.0
        else:
            precision = self.tag_tp / self.tag_pred if self.tag_pred else 0.0
            recall = self.tag_tp / self.tag_gold if self.tag_gold else 0.0
            f1 = (
                200.0 * precision * recall / (precision + recall)
                if precision + recall > 0
                else 0.0
            )
        return MetricsReport(
            ic_accuracy=100.0 * hits / total if total else 0.0,
            sl_token_f1=f1,
            ic_first_turn=100.0 * self.first_hit / self.first_total if self.first_total else 0.0,
            ic_followup=(
                100.0 * self.follow_hit / self.follow_total if self.follow_total else None
            ),
            n_turns=total,
            n_first=self.first_total,
            n_followup=self.follow_total,
        )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate(
    model: JointNLUModel,
    dataset: Dataset,
    history_policy: str = "predicted",
    collect_attention: bool = False,
    max_rows: int = 256,
) -> MetricsReport | tuple[MetricsReport, list[dict]]:
    """Score a model over a dataset, processing conversations in turn order.

    With history_policy="predicted" the intent history entries are the model's
    own earlier argmax predictions and the slot history accumulates predicted
    slot types; with "gold" the annotated history is used. Dialog acts come
    from the data either way (they are observed agent moves, not predictions).
    """
    if history_policy not in ("gold", "predicted"):
        raise ValueError(f"unknown history policy {history_policy!r}")
    if dataset.vocabs != model.vocabs:
        raise ValueError("checkpoint and dataset vocabularies differ")
    if collect_attention and model.variant == "cgru":
        raise ValueError("the recurrent-fusion variant exposes no attention weights")

    vocabs = model.vocabs
    convs = dataset.conversations
    scorer = _Scorer()
    attention_records: list[dict] = []

    histories: list[list[Turn]] = [[] for _ in convs]
    utt_cache: list[list[torch.Tensor]] = [[] for _ in convs]

    model.eval()
    d_utt = 2 * model.hp.d_hidden
    width = model.window + 1
    max_turns = max((len(c.turns) for c in convs), default=0)

    with torch.no_grad():
        for t in range(max_turns):
            active = [ci for ci, c in enumerate(convs) if len(c.turns) > t]
            for start in range(0, len(active), max_rows):
                chunk = active[start : start + max_rows]
                n = len(chunk)
                max_len = max(len(convs[ci].turns[t].tokens) for ci in chunk)
                token_ids = torch.zeros(n, max_len, dtype=torch.long)
                token_mask = torch.zeros(n, max_len, dtype=torch.bool)
                hist_utt = torch.zeros(n, width - 1, d_utt)
                intent_ids = torch.full((n, width), vocabs.intent.id(DUMMY_INTENT),
                                        dtype=torch.long)
                da_ids = torch.full((n, width), vocabs.dialog_act.id(DUMMY_DA),
                                    dtype=torch.long)
                window_pad = torch.ones(n, width, dtype=torch.bool)
                multihot = torch.zeros(n, len(vocabs.slot_type))

                for r, ci in enumerate(chunk):
                    turn = convs[ci].turns[t]
                    for j, tok in enumerate(turn.tokens):
                        token_ids[r, j] = vocabs.token.id_or_unk(tok)
                        token_mask[r, j] = True
                    win = assemble_window(histories[ci], turn, model.window)
                    for w, (wturn, pad) in enumerate(zip(win.turns, win.pad_mask)):
                        window_pad[r, w] = pad
                        if pad:
                            continue
                        intent_ids[r, w] = vocabs.intent.id(wturn.intent)
                        da_ids[r, w] = vocabs.dialog_act.id(wturn.dialog_act)
                        hist_pos = t - (width - 1 - w)
                        if w < width - 1:
                            hist_utt[r, w] = utt_cache[ci][hist_pos]
                    for st in win.slot_history:
                        if st in vocabs.slot_type:
                            multihot[r, vocabs.slot_type.id(st)] = 1.0

                preds = model.forward_step(
                    token_ids, token_mask, hist_utt, intent_ids, da_ids,
                    window_pad, multihot,
                )
                intent_pred = preds.intent_logits.argmax(dim=-1)
                tag_pred = preds.slot_logits.argmax(dim=-1)

                for r, ci in enumerate(chunk):
                    turn = convs[ci].turns[t]
                    n_tok = len(turn.tokens)
                    pred_intent = vocabs.intent.label(int(intent_pred[r]))
                    pred_tags = [vocabs.slot.label(int(tag_pred[r, j])) for j in range(n_tok)]
                    scorer.add_turn(t == 0, turn.intent, pred_intent, turn.slots, pred_tags)
                    utt_cache[ci].append(preds.utt_vectors[r].clone())
                    if history_policy == "gold":
                        histories[ci].append(turn)
                    else:
                        histories[ci].append(
                            Turn(turn.tokens, pred_intent, pred_tags, turn.dialog_act)
                        )
                    if collect_attention:
                        attn = preds.attention[r].T.numpy()  # (d_turn, W)
                        signals = summarize_attention(attn, model.context.layout)
                        attention_records.append(
                            {
                                "conv": convs[ci].id,
                                "turn": t,
                                "signals": {
                                    k: [float(x) for x in v] for k, v in signals.items()
                                },
                            }
                        )

    report = scorer.report()
    if collect_attention:
        return report, attention_records
    return report


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_ic: float
    val_sl_f1: float


@dataclass
class TrainResult:
    model: JointNLUModel
    log: list[EpochLog]
    best_val_ic: float
    best_epoch: int
    seed: int


def split_validation(dataset: Dataset, fraction: float) -> tuple[Dataset, Dataset]:
    """Deterministically hold out a fraction of conversations for validation.

    Vocabularies are kept from the full training corpus so label coverage
    does not depend on the carve-out.
    """
    convs = list(dataset.conversations)
    rng = random.Random(_SPLIT_SEED)
    rng.shuffle(convs)
    n_val = max(1, int(round(len(convs) * fraction)))
    if n_val >= len(convs):
        raise ValueError("validation split would consume the whole training set")
    val = Dataset(convs[:n_val], dataset.vocabs, "validation")
    train = Dataset(convs[n_val:], dataset.vocabs, "train")
    return train, val


def conversation_batches(
    conversations: list[Conversation], batch_turns: int
) -> Iterator[list[Conversation]]:
    batch: list[Conversation] = []
    turns = 0
    for conv in conversations:
        batch.append(conv)
        turns += len(conv.turns)
        if turns >= batch_turns:
            yield batch
            batch, turns = [], 0
    if batch:
        yield batch


def train(
    train_ds: Dataset,
    variant: str = "casa",
    hp: Hyperparams | None = None,
    seed: int = 1,
    flags: SignalFlags | None = None,
    val_ds: Dataset | None = None,
) -> TrainResult:
    """Train one model with mini-batch Adam and early stopping on validation
    intent accuracy. Fully deterministic for a fixed seed."""
    hp = hp or Hyperparams()
    if val_ds is None:
        train_ds, val_ds = split_validation(train_ds, hp.val_fraction)
    if val_ds.vocabs != train_ds.vocabs:
        raise ValueError("training and validation vocabularies differ")

    torch.manual_seed(seed)
    model = JointNLUModel(train_ds.vocabs, hp, variant=variant, flags=flags)
    optimizer = torch.optim.Adam(model.parameters(), lr=hp.learning_rate)
    rng = random.Random(seed * 7919 + 13)

    vocabs = train_ds.vocabs
    singletons = {
        tok for tok, cnt in token_frequencies(train_ds.conversations).items() if cnt == 1
    }
    unk_id = vocabs.token.id(UNK)

    def encode_train(tok: str) -> int:
        if tok in singletons and rng.random() < hp.singleton_unk_prob:
            return unk_id
        return vocabs.token.id_or_unk(tok)

    log: list[EpochLog] = []
    best_state = copy.deepcopy(model.state_dict())
    best_val = -math.inf
    best_epoch = 0
    significant_mark = -math.inf
    epochs_without_gain = 0

    for epoch in range(1, hp.max_epochs + 1):
        model.train()
        order = list(train_ds.conversations)
        rng.shuffle(order)
        total_loss = 0.0
        n_batches = 0
        for conv_batch in conversation_batches(order, hp.batch_size):
            batch = collate_conversations(conv_batch, vocabs, model.window, encode_train)
            preds = model(batch)
            loss, _ = joint_loss(
                preds.intent_logits,
                preds.sec_intent_logits,
                preds.slot_logits,
                batch.gold_intents,
                batch.gold_tags,
                batch.token_mask,
                alpha=hp.alpha,
                beta=hp.beta,
            )
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {n_batches} (seed {seed})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += float(loss.detach())
            n_batches += 1

        val_report = evaluate(model, val_ds, history_policy="gold")
        log.append(
            EpochLog(
                epoch=epoch,
                train_loss=total_loss / max(n_batches, 1),
                val_ic=val_report.ic_accuracy,
                val_sl_f1=val_report.sl_token_f1,
            )
        )
        logger.debug(
            "seed %d epoch %d loss %.4f val_ic %.2f", seed, epoch, log[-1].train_loss,
            val_report.ic_accuracy,
        )

        if val_report.ic_accuracy > best_val:
            best_val = val_report.ic_accuracy
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
        if val_report.ic_accuracy >= significant_mark + hp.min_delta:
            significant_mark = val_report.ic_accuracy
            epochs_without_gain = 0
        else:
            epochs_without_gain += 1
            if epochs_without_gain >= hp.patience:
                break

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model=model, log=log, best_val_ic=best_val,
                       best_epoch=best_epoch, seed=seed)


def train_seeds(
    train_ds: Dataset,
    eval_ds: Dataset,
    variant: str = "casa",
    hp: Hyperparams | None = None,
    flags: SignalFlags | None = None,
    val_ds: Dataset | None = None,
    history_policy: str = "predicted",
) -> tuple[list[TrainResult], list[MetricsReport], MetricsReport]:
    """Train one model per seed and evaluate each on `eval_ds`."""
    hp = hp or Hyperparams()
    results, reports = [], []
    for seed in hp.seeds:
        result = train(train_ds, variant=variant, hp=hp, seed=seed, flags=flags,
                       val_ds=val_ds)
        report = evaluate(result.model, eval_ds, history_policy=history_policy)
        results.append(result)
        reports.append(report)
        logger.info(
            "%s seed %d: ic %.2f sl_f1 %.2f", variant, seed, report.ic_accuracy,
            report.sl_token_f1,
        )
    return results, reports, mean_reports(reports)


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

@dataclass
class AblationRow:
    flags: SignalFlags
    per_seed: list[MetricsReport]
    mean: MetricsReport


def run_ablation(
    train_ds: Dataset,
    eval_ds: Dataset,
    configs: list[SignalFlags],
    hp: Hyperparams | None = None,
    history_policy: str = "predicted",
) -> list[AblationRow]:
    """Train and evaluate one model per signal configuration and seed.

    A configuration with every signal disabled is definitionally the
    non-contextual variant and is trained as such.
    """
    if not configs:
        raise ValueError("at least one ablation configuration is required")
    rows = []
    for flags in configs:
        all_off = not (flags.use_intent_hist or flags.use_slot_hist
                       or flags.use_utt_hist or flags.use_da_hist)
        variant = "nc" if all_off else "casa"
        _, reports, mean = train_seeds(
            train_ds, eval_ds, variant=variant, hp=hp, flags=flags,
            history_policy=history_policy,
        )
        rows.append(AblationRow(flags=flags, per_seed=reports, mean=mean))
    return rows


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def toy_gradient_dataset() -> Dataset:
    """A handcrafted five-turn corpus exercising every signal path."""
    convs = [
        Conversation(
            "toy-a",
            [
                Turn(["book", "a", "trip"], "travel", [O_TAG, O_TAG, O_TAG], DUMMY_DA),
                Turn(["to", "paris", "now"], "travel", [O_TAG, "B-dest", O_TAG], "ElicitSlot"),
                Turn(["at", "5", "pm"], "travel", [O_TAG, "B-time", "I-time"], "Confirm"),
            ],
        ),
        Conversation(
            "toy-b",
            [
                Turn(["check", "status"], "status", [O_TAG, O_TAG], DUMMY_DA),
                Turn(["yes", "please"], "status", [O_TAG, O_TAG], "Inform"),
            ],
        ),
    ]
    return make_dataset(convs, split="train")


def toy_hyperparams() -> Hyperparams:
    return Hyperparams(
        d_hidden=4,
        d_embed=4,
        d_intent=3,
        d_da=3,
        d_slot=3,
        dropout=0.0,
        context_window=2,
        max_tokens=5,
        label_window=3,
    )


def analytic_gradients(model: torch.nn.Module, loss_fn) -> dict[str, torch.Tensor]:
    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    out = {}
    for name, p in model.named_parameters():
        out[name] = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
    model.zero_grad()
    return out


def finite_difference_gradients(
    model: torch.nn.Module, loss_fn, step: float = 1e-4
) -> dict[str, torch.Tensor]:
    """Central differences of the loss w.r.t. every parameter element."""
    grads = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.view(-1)
            g = torch.zeros_like(flat)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + step
                hi = float(loss_fn())
                flat[i] = orig - step
                lo = float(loss_fn())
                flat[i] = orig
                g[i] = (hi - lo) / (2.0 * step)
            grads[name] = g.view_as(p).clone()
    return grads


def compare_gradients(
    analytic: dict[str, torch.Tensor], numeric: dict[str, torch.Tensor]
) -> dict[str, float]:
    """Max elementwise relative error per parameter tensor."""
    errors = {}
    for name, a in analytic.items():
        f = numeric[name]
        denom = torch.maximum(
            torch.maximum(a.abs(), f.abs()), torch.full_like(a, 1e-6)
        )
        errors[name] = float(((a - f).abs() / denom).max())
    return errors


def gradient_check(
    variant: str = "casa",
    hp: Hyperparams | None = None,
    step: float = 1e-4,
) -> dict[str, float]:
    """Full-model finite-difference check at toy sizes, in float64.

    Returns the max relative error per named parameter tensor.
    """
    hp = hp or toy_hyperparams()
    ds = toy_gradient_dataset()
    torch.manual_seed(0)
    model = JointNLUModel(ds.vocabs, hp, variant=variant).double()
    model.eval()  # dropout off; the check needs a deterministic forward
    batch = collate_conversations(ds.conversations, ds.vocabs, model.window)

    def loss_fn():
        preds = model(batch)
        loss, _ = joint_loss(
            preds.intent_logits,
            preds.sec_intent_logits,
            preds.slot_logits,
            batch.gold_intents,
            batch.gold_tags,
            batch.token_mask,
            alpha=hp.alpha,
            beta=hp.beta,
        )
        if not torch.isfinite(loss):
            raise TrainingDiverged("non-finite loss during gradient check")
        return loss

    analytic = analytic_gradients(model, loss_fn)
    numeric = finite_difference_gradients(model, loss_fn, step=step)
    return compare_gradients(analytic, numeric)
