"""Dialogue data schema, corpus loaders, context windows, and synthetic conversations.

A corpus is a list of conversations; each conversation is an ordered list of
user turns. Agent turns are not kept as sequence elements: the dialog act of
the agent move that immediately precedes a user turn is stored on that user
turn. Vocabularies are always built from the training split and shared with
the other splits.
"""

from __future__ import annotations

import json
import logging
import random
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
DUMMY_INTENT = "<dummy_intent>"
DUMMY_DA = "<dummy_da>"
O_TAG = "O"

# Utterances longer than this are truncated (tags truncated alongside).
MAX_TOKENS = 32

ELICIT_SLOT = "ElicitSlot"
CONFIRM = "Confirm"
CLOSE = "Close"
INFORM = "Inform"
DIALOG_ACTS = (ELICIT_SLOT, CONFIRM, CLOSE, INFORM)


class DataError(Exception):
    """Base class for corpus-level failures."""


class LoadError(DataError):
    """Malformed input file; message names the file and line."""


class SchemaError(DataError):
    """A record violates the dialogue schema; message names the record."""


_PUNCT = set(string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, whitespace-split, and detach leading/trailing punctuation.

    Punctuation inside a word (apostrophes, hyphens) is kept, so "I'd" stays
    one token while "food." becomes ["food", "."].
    """
    out: list[str] = []
    for chunk in text.lower().split():
        lead: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and chunk[-1] in _PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(lead)
        if chunk:
            out.append(chunk)
        out.extend(reversed(trail))
    return out


def bio_errors(tags: Sequence[str]) -> str | None:
    """Return a description of the first BIO violation, or None if valid."""
    prev = O_TAG
    for pos, tag in enumerate(tags):
        if tag == O_TAG:
            prev = tag
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            return f"malformed tag {tag!r} at token {pos}"
        if tag[0] == "I":
            if prev == O_TAG or prev[2:] != tag[2:]:
                return f"tag {tag!r} at token {pos} does not continue a span"
        prev = tag
    return None


def slot_types(tags: Iterable[str]) -> set[str]:
    """Distinct slot types named by a sequence of BIO tags."""
    return {tag[2:] for tag in tags if tag != O_TAG}


@dataclass
class Turn:
    """One user turn: tokens, gold intent, aligned BIO tags, preceding dialog act."""

    tokens: list[str]
    intent: str
    slots: list[str]
    dialog_act: str

    def validate(self, where: str) -> None:
        if not self.tokens:
            raise SchemaError(f"{where}: turn has no tokens")
        if len(self.slots) != len(self.tokens):
            raise SchemaError(
                f"{where}: {len(self.slots)} slot tags for {len(self.tokens)} tokens"
            )
        err = bio_errors(self.slots)
        if err is not None:
            raise SchemaError(f"{where}: invalid BIO tags ({err})")


@dataclass
class Conversation:
    """Ordered user turns of one dialogue."""

    id: str
    turns: list[Turn]

    def validate(self) -> None:
        if not self.turns:
            raise SchemaError(f"conversation {self.id!r}: no turns")
        for i, turn in enumerate(self.turns):
            turn.validate(f"conversation {self.id!r} turn {i}")


class Vocab:
    """A label <-> id bijection with optional reserved symbols at the front."""

    def __init__(self, labels: Iterable[str], specials: Sequence[str] = ()):
        seen = set(specials)
        ordinary = sorted(set(labels) - seen)
        self.itos: list[str] = list(specials) + ordinary
        self.stoi: dict[str, int] = {s: i for i, s in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, label: str) -> bool:
        return label in self.stoi

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, label: str) -> int:
        try:
            return self.stoi[label]
        except KeyError:
            raise SchemaError(f"label {label!r} is not in the vocabulary") from None

    def id_or_unk(self, surface: str) -> int:
        return self.stoi.get(surface, self.stoi[UNK])

    def label(self, idx: int) -> str:
        return self.itos[idx]


@dataclass
class Vocabularies:
    """All label spaces of a corpus, built from the training split only."""

    token: Vocab
    intent: Vocab
    slot: Vocab  # BIO tags, O first
    dialog_act: Vocab
    slot_type: Vocab  # base slot types (for history embeddings)

    @classmethod
    def build(cls, conversations: Sequence[Conversation]) -> "Vocabularies":
        tokens, intents, tags, acts = set(), set(), set(), set()
        for conv in conversations:
            for turn in conv.turns:
                tokens.update(turn.tokens)
                intents.add(turn.intent)
                tags.update(turn.slots)
                acts.add(turn.dialog_act)
        return cls(
            token=Vocab(tokens, specials=(PAD, UNK)),
            intent=Vocab(intents - {DUMMY_INTENT}, specials=(DUMMY_INTENT,)),
            slot=Vocab(tags, specials=(O_TAG,)),
            dialog_act=Vocab(acts - {DUMMY_DA}, specials=(DUMMY_DA,)),
            slot_type=Vocab(t for conv in conversations for turn in conv.turns
                            for t in slot_types(turn.slots)),
        )

    def to_dict(self) -> dict:
        return {
            "token": self.token.itos,
            "intent": self.intent.itos,
            "slot": self.slot.itos,
            "dialog_act": self.dialog_act.itos,
            "slot_type": self.slot_type.itos,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabularies":
        def restore(itos: list[str]) -> Vocab:
            v = Vocab(())
            v.itos = list(itos)
            v.stoi = {s: i for i, s in enumerate(v.itos)}
            return v

        return cls(*(restore(d[k]) for k in ("token", "intent", "slot", "dialog_act", "slot_type")))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabularies) and self.to_dict() == other.to_dict()


@dataclass
class Dataset:
    """Conversations plus the vocabularies they are encoded against."""

    conversations: list[Conversation]
    vocabs: Vocabularies
    split: str = "train"

    def __len__(self) -> int:
        return len(self.conversations)

    @property
    def n_turns(self) -> int:
        return sum(len(c.turns) for c in self.conversations)


def make_dataset(
    conversations: list[Conversation],
    split: str = "train",
    vocabs: Vocabularies | None = None,
) -> Dataset:
    """Wrap conversations in a Dataset, building or validating vocabularies.

    With `vocabs` given (non-train splits), every intent / slot tag / dialog
    act must already be known; unseen tokens are allowed and map to UNK later.
    """
    for conv in conversations:
        conv.validate()
    if vocabs is None:
        vocabs = Vocabularies.build(conversations)
    else:
        for conv in conversations:
            for i, turn in enumerate(conv.turns):
                where = f"conversation {conv.id!r} turn {i}"
                if turn.intent not in vocabs.intent:
                    raise SchemaError(f"{where}: intent {turn.intent!r} unseen in training data")
                if turn.dialog_act not in vocabs.dialog_act:
                    raise SchemaError(
                        f"{where}: dialog act {turn.dialog_act!r} unseen in training data"
                    )
                for tag in turn.slots:
                    if tag not in vocabs.slot:
                        raise SchemaError(f"{where}: slot tag {tag!r} unseen in training data")
    return Dataset(conversations, vocabs, split)


def _truncate(turn: Turn, where: str) -> Turn:
    if len(turn.tokens) > MAX_TOKENS:
        logger.warning("%s: truncating %d tokens to %d", where, len(turn.tokens), MAX_TOKENS)
        turn.tokens = turn.tokens[:MAX_TOKENS]
        turn.slots = turn.slots[:MAX_TOKENS]
    return turn


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------

def load_flat_icsl(
    path: str | Path,
    split: str = "train",
    vocabs: Vocabularies | None = None,
) -> Dataset:
    """Load a flat single-turn IC-SL corpus (ATIS/SNIPS style).

    Format: blank-line separated blocks. Each block starts with a header line
    `# intent: <label>` followed by one token per line with its BIO tag in the
    last whitespace-separated column. Every utterance becomes a single-turn
    conversation with a dummy dialog act.
    """
    path = Path(path)
    conversations: list[Conversation] = []
    tokens: list[str] = []
    tags: list[str] = []
    intent: str | None = None
    header_line = 0

    def flush(lineno: int) -> None:
        nonlocal tokens, tags, intent
        if intent is None and not tokens:
            return
        if intent is None:
            raise LoadError(f"{path}:{lineno}: block without '# intent:' header")
        if not tokens:
            raise LoadError(f"{path}:{header_line}: intent block has no token lines")
        conv_id = f"{path.stem}-{len(conversations):05d}"
        turn = _truncate(Turn(tokens, intent, tags, DUMMY_DA), conv_id)
        turn.validate(conv_id)
        conversations.append(Conversation(conv_id, [turn]))
        tokens, tags, intent = [], [], None

    with open(path, encoding="utf-8") as fh:
        lineno = 0
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                flush(lineno)
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if not body.startswith("intent:"):
                    raise LoadError(f"{path}:{lineno}: unrecognized header {line!r}")
                if intent is not None or tokens:
                    flush(lineno)
                intent = body[len("intent:"):].strip()
                header_line = lineno
                if not intent:
                    raise LoadError(f"{path}:{lineno}: empty intent label")
                continue
            cols = line.split()
            if len(cols) < 2:
                raise LoadError(f"{path}:{lineno}: expected '<token> ... <tag>', got {line!r}")
            if intent is None:
                raise LoadError(f"{path}:{lineno}: token line before '# intent:' header")
            tokens.append(cols[0].lower())
            tags.append(cols[-1])
        flush(lineno + 1 if conversations or tokens or intent else 0)

    return make_dataset(conversations, split, vocabs)


def load_conversational_jsonl(
    path: str | Path,
    split: str = "train",
    vocabs: Vocabularies | None = None,
) -> Dataset:
    """Load a conversational corpus: one JSON conversation object per line."""
    path = Path(path)
    conversations = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            conversations.append(_conversation_from_json(obj, f"{path}:{lineno}"))
    return make_dataset(conversations, split, vocabs)


def _conversation_from_json(obj: dict, where: str) -> Conversation:
    if not isinstance(obj, dict) or "id" not in obj or "turns" not in obj:
        raise SchemaError(f"{where}: conversation object needs 'id' and 'turns'")
    conv_id = str(obj["id"])
    turns = []
    for i, t in enumerate(obj["turns"]):
        loc = f"conversation {conv_id!r} turn {i}"
        for key in ("intent", "slots", "dialog_act"):
            if key not in t:
                raise SchemaError(f"{loc}: missing field {key!r}")
        if "tokens" in t:
            tokens = [str(tok).lower() for tok in t["tokens"]]
        elif "text" in t:
            tokens = tokenize(t["text"])
        else:
            raise SchemaError(f"{loc}: needs 'tokens' or 'text'")
        turn = _truncate(
            Turn(tokens, str(t["intent"]), [str(s) for s in t["slots"]], str(t["dialog_act"])),
            loc,
        )
        turn.validate(loc)
        turns.append(turn)
    conv = Conversation(conv_id, turns)
    conv.validate()
    return conv


def conversation_to_json(conv: Conversation) -> dict:
    return {
        "id": conv.id,
        "turns": [
            {
                "text": " ".join(t.tokens),
                "tokens": list(t.tokens),
                "intent": t.intent,
                "slots": list(t.slots),
                "dialog_act": t.dialog_act,
            }
            for t in conv.turns
        ],
    }


def write_conversational_jsonl(conversations: Iterable[Conversation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for conv in conversations:
            fh.write(json.dumps(conversation_to_json(conv), ensure_ascii=False))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Context windows
# ---------------------------------------------------------------------------

def pad_turn() -> Turn:
    """The pre-conversation filler turn used for window slots before turn 0."""
    return Turn(tokens=[], intent=DUMMY_INTENT, slots=[], dialog_act=DUMMY_DA)


@dataclass
class ContextWindow:
    """The K+1 turns feeding one prediction, oldest first, current turn last.

    Slots before the start of the conversation are pad slots. The current
    turn's intent and dialog act are replaced by the dummy symbols since they
    are unknown at prediction time. `slot_history` holds the distinct slot
    types observed in all turns before the current one.
    """

    turns: list[Turn]
    pad_mask: list[bool]
    slot_history: frozenset[str]

    @property
    def current(self) -> Turn:
        return self.turns[-1]


def assemble_window(history: Sequence[Turn], current: Turn, window: int) -> ContextWindow:
    """Build the window from an explicit history; used by both gold and
    predicted-history evaluation paths."""
    if window < 0:
        raise ValueError("window size must be >= 0")
    turns: list[Turn] = []
    pad_mask: list[bool] = []
    for offset in range(window, 0, -1):
        j = len(history) - offset
        if j < 0:
            turns.append(pad_turn())
            pad_mask.append(True)
        else:
            turns.append(history[j])
            pad_mask.append(False)
    masked_current = Turn(
        tokens=current.tokens,
        intent=DUMMY_INTENT,
        slots=current.slots,
        dialog_act=DUMMY_DA,
    )
    turns.append(masked_current)
    pad_mask.append(False)
    seen = frozenset(t for turn in history for t in slot_types(turn.slots))
    return ContextWindow(turns, pad_mask, seen)


def make_context_window(conv: Conversation, i: int, window: int) -> ContextWindow:
    """Window of turns i-K..i of a conversation, padded before turn 0."""
    if not 0 <= i < len(conv.turns):
        raise IndexError(f"turn index {i} out of range for {len(conv.turns)} turns")
    return assemble_window(conv.turns[:i], conv.turns[i], window)


# ---------------------------------------------------------------------------
# Synthetic conversational data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntentSpec:
    name: str
    openings: tuple[str, ...]  # whitespace-tokenized templates; {slot} fills inline
    slots: tuple[str, ...]


@dataclass(frozen=True)
class GeneratorProfile:
    name: str
    intents: tuple[IntentSpec, ...]
    values: dict[str, tuple[str, ...]]
    p_second_goal: float
    p_third_goal: float
    p_side_question: float
    p_confirm: float
    p_inline_slot: float
    max_elicited: int


_ANSWER_CARRIERS = ("{v}", "it's {v}", "{v} please")
_AFFIRMATIONS = (
    "yes", "yes please", "yeah", "that works", "sounds good", "that's right",
)
_CORRECTION_CARRIERS = ("no make it {v}", "no change it to {v}", "actually {v}")


def _booking_profile() -> GeneratorProfile:
    values = {
        "food": ("italian", "chinese", "french", "mexican", "indian", "thai",
                 "japanese", "korean", "greek", "spanish", "turkish", "vietnamese"),
        "pricerange": ("cheap", "moderate", "expensive", "budget", "upscale"),
        "area": ("north", "south", "east", "west", "centre", "downtown",
                 "uptown", "riverside", "old town"),
        "party_size": ("two", "three", "four", "five", "six", "seven", "eight", "ten"),
        "time": ("5 pm", "6 pm", "7 pm", "8 pm", "9 pm", "noon", "6 30 pm", "7 30 pm"),
    }
    intents = (
        IntentSpec("book_table",
                   ("i want to book a table", "book a table for {party_size}",
                    "i need a reservation", "can you reserve a table"),
                   ("area", "time", "party_size")),
        IntentSpec("find_restaurant",
                   ("find me a restaurant", "i am looking for a {food} restaurant",
                    "help me find a place to eat"),
                   ("food", "area", "pricerange")),
        IntentSpec("order_takeout",
                   ("i want to order takeout", "order some {food} takeout", "get me takeout"),
                   ("food", "time")),
        IntentSpec("order_delivery",
                   ("i want food delivered", "order {food} delivery to my place",
                    "deliver dinner to me"),
                   ("food", "area", "time")),
        IntentSpec("change_booking",
                   ("i need to change my reservation", "move my booking",
                    "change my booking to {time}"),
                   ("time",)),
        IntentSpec("cancel_booking",
                   ("cancel my reservation", "i want to cancel my booking",
                    "please drop my table booking"),
                   ("time",)),
        IntentSpec("ask_opening_hours",
                   ("what are the opening hours", "when do you open", "how late are you open"),
                   ("area",)),
        IntentSpec("ask_phone_number",
                   ("what is the phone number", "give me the phone number",
                    "how can i call the restaurant"),
                   ("area",)),
        IntentSpec("ask_address",
                   ("what is the address", "where is the restaurant located",
                    "give me the address"),
                   ("area",)),
        IntentSpec("ask_menu",
                   ("what is on the menu", "show me the menu", "what dishes do you serve"),
                   ("food",)),
        IntentSpec("ask_parking",
                   ("is there parking nearby", "do you have parking", "where can i park"),
                   ("area",)),
        IntentSpec("book_event",
                   ("i want to book a private event", "plan a party for {party_size}",
                    "book your event room"),
                   ("party_size", "time")),
        IntentSpec("cancel_event",
                   ("cancel my event booking", "call off my party booking",
                    "i want to cancel the event"),
                   ("time",)),
        IntentSpec("change_event",
                   ("change my event booking", "reschedule my party", "move my event to {time}"),
                   ("time",)),
        IntentSpec("leave_review",
                   ("i want to leave a review", "let me rate my visit",
                    "i want to review the {food} place"),
                   ("food",)),
        IntentSpec("report_problem",
                   ("i want to report a problem", "i have a complaint",
                    "something went wrong with my order"),
                   ("area",)),
        IntentSpec("ask_delivery_time",
                   ("how long will delivery take", "when will my food arrive",
                    "what is the delivery time"),
                   ("area",)),
        IntentSpec("ask_dress_code",
                   ("is there a dress code", "what should i wear", "do i need formal clothes"),
                   ("area",)),
        IntentSpec("recommend_restaurant",
                   ("recommend a restaurant", "what place do you suggest",
                    "suggest somewhere to eat"),
                   ("food", "pricerange")),
    )
    return GeneratorProfile(
        name="booking-like",
        intents=intents,
        values=values,
        p_second_goal=0.3,
        p_third_goal=0.0,
        p_side_question=0.15,
        p_confirm=0.6,
        p_inline_slot=0.35,
        max_elicited=2,
    )


def _cable_profile() -> GeneratorProfile:
    times = ("morning", "afternoon", "evening", "8 am", "10 am", "2 pm", "4 pm", "6 pm")
    routers = ("router x2", "router ultra", "modem pro")
    account_ids = tuple(str(n) for n in (
        90412, 77310, 28854, 61079, 33217, 54906, 18842, 70355, 42199, 66031,
        25478, 93107, 50266, 81924,
    ))
    names = ("john smith", "mary jones", "alex chen", "sara lopez", "omar ali",
             "nina patel", "lee wong", "ivan petrov", "ana silva", "emma novak",
             "noah kim", "lucas meyer")
    streets = ("12 oak street", "88 pine avenue", "401 maple road", "7 birch lane",
               "230 cedar drive", "19 elm court", "52 willow way", "610 aspen place",
               "33 spruce boulevard", "148 walnut row")
    values = {
        "account_id": account_ids,
        "zip_code": ("10001", "94105", "60611", "73301", "98109", "30339",
                     "85004", "33131", "19103", "48226"),
        "street_address": streets,
        "city": ("springfield", "riverton", "lakeside", "fairview", "greenville",
                 "ashland", "brookfield", "hilltop"),
        "plan_name": ("basic plan", "standard plan", "premium plan", "family plan",
                      "starter plan"),
        "speed_tier": ("100 megabit", "300 megabit", "500 megabit", "gigabit"),
        "channel_name": ("sports channel", "movie channel", "news channel",
                         "kids channel", "music channel"),
        "package_name": ("silver package", "gold package", "platinum package",
                         "bronze package"),
        "visit_date": ("monday", "tuesday", "wednesday", "thursday", "friday",
                       "saturday", "next monday", "next friday"),
        "time_slot": times,
        "phone_number": ("555 0130", "555 0188", "555 0142", "555 0167", "555 0199",
                         "555 0215", "555 0261", "555 0274", "555 0323", "555 0390"),
        "amount": ("40 dollars", "65 dollars", "80 dollars", "120 dollars",
                   "25 dollars", "95 dollars", "150 dollars", "55 dollars"),
        "payment_method": ("credit card", "debit card", "bank transfer", "paypal"),
        "card_digits": ("4417", "9032", "5561", "7208", "6645", "1873"),
        "email": ("ana at mail dot com", "leo at mail dot com", "kim at mail dot com",
                  "sam at mail dot com", "joy at mail dot com"),
        "user_name": names,
        "device_model": routers + ("settop mini",),
        "device_serial": ("sn 4482", "sn 9917", "sn 3350", "sn 7074", "sn 6120",
                          "sn 2781", "sn 8854", "sn 1036"),
        "service_type": ("internet", "tv", "phone", "streaming"),
        "billing_month": ("january", "february", "march", "april", "may", "june"),
        "contract_term": ("one year", "two years", "six months", "month to month"),
        "promo_code": ("promo10", "save20", "bundle15", "newuser5"),
        "contact_time": times,
        "issue_type": ("no signal", "slow speed", "billing error", "broken remote"),
        "router_model": routers,
        "appointment_id": ("a 1182", "a 7743", "a 5016", "a 9934", "a 3371",
                           "a 6608", "a 2490", "a 8057"),
    }
    intents = (
        IntentSpec("activate_internet",
                   ("i want to set up internet service", "get me internet at home",
                    "start internet service", "sign me up for the {plan_name}"),
                   ("plan_name", "street_address", "promo_code")),
        IntentSpec("cancel_internet",
                   ("cancel my internet service", "shut off my internet",
                    "i want to stop my internet"),
                   ("account_id", "user_name")),
        IntentSpec("upgrade_internet",
                   ("upgrade my internet speed", "i want faster internet",
                    "bump up my internet"),
                   ("speed_tier", "router_model")),
        IntentSpec("activate_tv",
                   ("set up tv service", "i want cable tv", "start tv service at my place"),
                   ("package_name", "street_address")),
        IntentSpec("cancel_tv",
                   ("cancel my tv service", "drop my cable tv", "stop my tv subscription"),
                   ("account_id",)),
        IntentSpec("upgrade_tv",
                   ("upgrade my tv package", "i want more channels on my plan",
                    "improve my tv package"),
                   ("package_name",)),
        IntentSpec("activate_phone",
                   ("set up phone service", "i want a landline", "add phone service"),
                   ("phone_number", "device_model")),
        IntentSpec("cancel_phone",
                   ("cancel my phone service", "drop my landline", "stop my phone line"),
                   ("account_id", "user_name")),
        IntentSpec("book_technician",
                   ("i need a technician", "send a technician", "book a repair visit"),
                   ("visit_date", "time_slot", "issue_type")),
        IntentSpec("reschedule_technician",
                   ("reschedule my technician visit", "move my repair appointment",
                    "change my technician appointment"),
                   ("appointment_id", "visit_date")),
        IntentSpec("cancel_technician",
                   ("cancel my technician visit", "call off the repair visit",
                    "cancel the repair appointment"),
                   ("appointment_id",)),
        IntentSpec("pay_bill",
                   ("i want to pay my bill", "pay my balance", "make a payment"),
                   ("amount", "payment_method", "card_digits")),
        IntentSpec("dispute_charge",
                   ("there is a wrong charge on my bill", "dispute a charge",
                    "my bill looks wrong"),
                   ("billing_month", "amount", "email")),
        IntentSpec("check_balance",
                   ("what is my balance", "how much do i owe", "check my balance"),
                   ("account_id",)),
        IntentSpec("check_data_usage",
                   ("how much data have i used", "check my data usage", "show my data usage"),
                   ("account_id", "device_serial")),
        IntentSpec("change_plan",
                   ("i want to change my plan", "switch my plan",
                    "put me on a different plan"),
                   ("plan_name", "contract_term")),
        IntentSpec("add_channel",
                   ("i want an extra channel", "add a channel to my lineup",
                    "put another channel on my plan"),
                   ("channel_name",)),
        IntentSpec("remove_channel",
                   ("remove a channel from my lineup", "drop a channel",
                    "take a channel off my plan"),
                   ("channel_name",)),
        IntentSpec("report_outage",
                   ("my service is down", "report an outage",
                    "nothing is working at my place"),
                   ("zip_code", "service_type", "issue_type")),
        IntentSpec("update_address",
                   ("i am moving", "update my address", "change my service address"),
                   ("street_address", "city", "contact_time")),
        IntentSpec("renew_contract",
                   ("renew my contract", "extend my contract",
                    "i want to renew my service contract"),
                   ("contract_term", "user_name")),
    )
    return GeneratorProfile(
        name="cable-like",
        intents=intents,
        values=values,
        p_second_goal=0.55,
        p_third_goal=0.2,
        p_side_question=0.33,
        p_confirm=0.5,
        p_inline_slot=0.3,
        max_elicited=2,
    )


PROFILES = {
    "booking-like": _booking_profile,
    "cable-like": _cable_profile,
}


def _render_template(template: str, values: dict[str, str]) -> tuple[list[str], list[str]]:
    """Expand a whitespace-tokenized template into tokens and BIO tags."""
    tokens: list[str] = []
    tags: list[str] = []
    for word in template.split():
        if word.startswith("{") and word.endswith("}"):
            slot = word[1:-1]
            vtoks = values[slot].split()
            tokens.extend(vtoks)
            tags.extend([f"B-{slot}"] + [f"I-{slot}"] * (len(vtoks) - 1))
        else:
            tokens.append(word)
            tags.append(O_TAG)
    return tokens, tags


def _side_templates(spec: IntentSpec) -> list[str]:
    return [t for t in spec.openings if "{" not in t]


def _gen_conversation(rng: random.Random, profile: GeneratorProfile, conv_id: str) -> Conversation:
    turns: list[Turn] = []
    next_da = DUMMY_DA  # act of the agent move preceding the next user turn

    n_goals = 1
    if rng.random() < profile.p_second_goal:
        n_goals = 2
        if rng.random() < profile.p_third_goal:
            n_goals = 3

    side_pool = [s for s in profile.intents if len(s.slots) == 1 and _side_templates(s)]

    for _ in range(n_goals):
        goal = rng.choice(profile.intents)

        with_slot = [t for t in goal.openings if "{" in t]
        plain = [t for t in goal.openings if "{" not in t]
        if with_slot and (not plain or rng.random() < profile.p_inline_slot):
            template = rng.choice(with_slot)
        else:
            template = rng.choice(plain)
        inline: dict[str, str] = {}
        for word in template.split():
            if word.startswith("{"):
                slot = word[1:-1]
                inline[slot] = rng.choice(profile.values[slot])
        tokens, tags = _render_template(template, inline)
        turns.append(Turn(tokens, goal.name, tags, next_da))

        pending = [s for s in goal.slots if s not in inline]
        rng.shuffle(pending)
        pending = pending[: profile.max_elicited]
        for slot in pending:
            answer_da = ELICIT_SLOT
            n_sides = 0
            while n_sides < 2 and rng.random() < profile.p_side_question:
                side = rng.choice(side_pool)
                s_tokens, s_tags = _render_template(rng.choice(_side_templates(side)), {})
                turns.append(Turn(s_tokens, side.name, s_tags, answer_da))
                answer_da = INFORM  # agent answered the aside, elicitation still open
                n_sides += 1
            value = rng.choice(profile.values[slot])
            tokens, tags = _render_template(rng.choice(_ANSWER_CARRIERS), {"v": value})
            # retag the {v} span with the real slot type
            tags = [t if t == O_TAG else t[:2] + slot for t in tags]
            turns.append(Turn(tokens, goal.name, tags, answer_da))

        if rng.random() < profile.p_confirm:
            if goal.slots and rng.random() < 0.25:
                slot = rng.choice(goal.slots)
                value = rng.choice(profile.values[slot])
                tokens, tags = _render_template(rng.choice(_CORRECTION_CARRIERS), {"v": value})
                tags = [t if t == O_TAG else t[:2] + slot for t in tags]
            else:
                tokens = rng.choice(_AFFIRMATIONS).split()
                tags = [O_TAG] * len(tokens)
            turns.append(Turn(tokens, goal.name, tags, CONFIRM))

        next_da = CLOSE  # the goal was fulfilled before the next one opens

    return Conversation(conv_id, turns)


def generate_synthetic(seed: int, n_conversations: int, profile: str) -> Dataset:
    """Generate a deterministic synthetic conversational corpus.

    First turns are interpretable in isolation; follow-up turns are bare slot
    answers, confirmations, and corrections whose intent is only recoverable
    from the dialogue history.
    """
    if n_conversations < 0:
        raise ValueError("n_conversations must be >= 0")
    try:
        prof = PROFILES[profile]()
    except KeyError:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}") from None
    rng = random.Random(seed)
    conversations = [
        _gen_conversation(rng, prof, f"{prof.name}-{seed}-{i:05d}")
        for i in range(n_conversations)
    ]
    return make_dataset(conversations, split="train")


def split_dataset(dataset: Dataset, n_train: int, n_eval: int,
                  eval_split: str = "test") -> tuple[Dataset, Dataset]:
    """Partition a generated corpus into a train slice and an eval slice.

    Vocabularies are rebuilt from the train slice only and shared with the
    eval slice.
    """
    convs = dataset.conversations
    if n_train + n_eval > len(convs):
        raise ValueError(f"cannot split {len(convs)} conversations into {n_train}+{n_eval}")
    train = make_dataset(convs[:n_train], "train")
    eval_ds = make_dataset(convs[n_train:n_train + n_eval], eval_split, train.vocabs)
    return train, eval_ds


def token_frequencies(conversations: Iterable[Conversation]) -> Counter:
    counts: Counter = Counter()
    for conv in conversations:
        for turn in conv.turns:
            counts.update(turn.tokens)
    return counts
