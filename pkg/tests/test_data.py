"""Schema, tokenizer, loader, window, and generator tests."""

from __future__ import annotations

import json
from collections import defaultdict

import pytest

from casa_nlu import data as D


# ---------------------------------------------------------------------------
# tokenize
# ---------------------------------------------------------------------------

def test_tokenize_basic():
    assert D.tokenize("Book a flight") == ["book", "a", "flight"]


def test_tokenize_empty():
    assert D.tokenize("") == []


def test_tokenize_punctuation_detached():
    # hand application of the rules: lowercase, split, peel edge punctuation,
    # keep word-internal apostrophes
    assert D.tokenize("I'd like Chinese food.") == ["i'd", "like", "chinese", "food", "."]


def test_tokenize_more_edges():
    assert D.tokenize("hello, world!!") == ["hello", ",", "world", "!", "!"]
    assert D.tokenize("'quoted'") == ["'", "quoted", "'"]
    assert D.tokenize("...") == [".", ".", "."]
    assert D.tokenize("   spaced\tout  ") == ["spaced", "out"]


def test_tokenize_deterministic():
    text = "Re-book my 7:30pm table, please!"
    assert D.tokenize(text) == D.tokenize(text)


# ---------------------------------------------------------------------------
# BIO validity
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "tags,ok",
    [
        (["O", "B-x", "I-x", "O"], True),
        (["B-x", "I-x", "I-x"], True),
        (["I-x"], False),
        (["O", "I-x"], False),
        (["B-x", "I-y"], False),
        (["B-x", "O", "I-x"], False),
        ([], True),
        (["garbage"], False),
    ],
)
def test_bio_errors(tags, ok):
    assert (D.bio_errors(tags) is None) == ok


def test_slot_types():
    assert D.slot_types(["O", "B-a", "I-a", "B-b"]) == {"a", "b"}
    assert D.slot_types(["O", "O"]) == set()


# ---------------------------------------------------------------------------
# Turn / Conversation validation
# ---------------------------------------------------------------------------

def test_turn_length_mismatch_rejected():
    turn = D.Turn(["a", "b"], "x", ["O"], "Confirm")
    with pytest.raises(D.SchemaError, match="slot tags"):
        turn.validate("here")


def test_turn_invalid_bio_rejected():
    turn = D.Turn(["a"], "x", ["I-z"], "Confirm")
    with pytest.raises(D.SchemaError, match="BIO"):
        turn.validate("here")


def test_empty_conversation_rejected():
    with pytest.raises(D.SchemaError, match="no turns"):
        D.Conversation("c", []).validate()


# ---------------------------------------------------------------------------
# Vocabularies
# ---------------------------------------------------------------------------

def test_vocab_specials_and_closure():
    ds = D.generate_synthetic(3, 5, "booking-like")
    v = ds.vocabs
    assert v.token.itos[0] == D.PAD and v.token.itos[1] == D.UNK
    assert D.DUMMY_INTENT in v.intent and D.DUMMY_DA in v.dialog_act
    assert v.slot.itos[0] == D.O_TAG
    assert v.token.id_or_unk("never-seen-zzz") == v.token.id(D.UNK)
    with pytest.raises(D.SchemaError):
        v.intent.id("no_such_intent")


def test_unseen_test_label_is_dataset_error():
    train = D.generate_synthetic(3, 5, "booking-like")
    rogue = D.Conversation(
        "r", [D.Turn(["hi"], "brand_new_intent", ["O"], D.DUMMY_DA)]
    )
    with pytest.raises(D.SchemaError, match="unseen in training"):
        D.make_dataset([rogue], "test", train.vocabs)


# ---------------------------------------------------------------------------
# Flat IC-SL loader
# ---------------------------------------------------------------------------

FLAT_SAMPLE = """\
# intent: get_weather
what O
is O
the O
weather O
in O
boston B-city

# intent: play_music
play O
some O
jazz B-genre
music O
"""


def test_load_flat_icsl(tmp_path):
    p = tmp_path / "train.flat"
    p.write_text(FLAT_SAMPLE, encoding="utf-8")
    ds = D.load_flat_icsl(p)
    assert len(ds.conversations) == 2
    assert all(len(c.turns) == 1 for c in ds.conversations)
    first = ds.conversations[0].turns[0]
    assert first.intent == "get_weather"
    assert first.dialog_act == D.DUMMY_DA
    assert first.tokens[-1] == "boston" and first.slots[-1] == "B-city"
    assert len(ds.vocabs.intent) == 3  # dummy + 2


def test_load_flat_icsl_three_columns(tmp_path):
    p = tmp_path / "train.flat"
    p.write_text("# intent: a\nshow VB O\nflights NNS B-obj\n", encoding="utf-8")
    ds = D.load_flat_icsl(p)
    turn = ds.conversations[0].turns[0]
    assert turn.tokens == ["show", "flights"]
    assert turn.slots == ["O", "B-obj"]


def test_load_flat_icsl_empty_file(tmp_path):
    p = tmp_path / "empty.flat"
    p.write_text("", encoding="utf-8")
    ds = D.load_flat_icsl(p)
    assert len(ds.conversations) == 0
    assert len(ds.vocabs.intent) == 1  # just the dummy


def test_load_flat_icsl_malformed_line_names_lineno(tmp_path):
    p = tmp_path / "bad.flat"
    p.write_text("# intent: a\nlonelytoken\n", encoding="utf-8")
    with pytest.raises(D.LoadError, match=r"bad\.flat:2"):
        D.load_flat_icsl(p)


def test_load_flat_icsl_missing_header(tmp_path):
    p = tmp_path / "bad.flat"
    p.write_text("show O\nme O\n", encoding="utf-8")
    with pytest.raises(D.LoadError, match="before '# intent:'"):
        D.load_flat_icsl(p)


def test_load_flat_icsl_bad_bio(tmp_path):
    p = tmp_path / "bad.flat"
    p.write_text("# intent: a\nshow I-x\n", encoding="utf-8")
    with pytest.raises(D.SchemaError, match="BIO"):
        D.load_flat_icsl(p)


# ---------------------------------------------------------------------------
# Conversational JSONL loader
# ---------------------------------------------------------------------------

def _conv_obj():
    return {
        "id": "c1",
        "turns": [
            {"text": "book a table", "tokens": ["book", "a", "table"],
             "intent": "book_table", "slots": ["O", "O", "O"],
             "dialog_act": D.DUMMY_DA},
            {"text": "7 pm", "tokens": ["7", "pm"], "intent": "book_table",
             "slots": ["B-time", "I-time"], "dialog_act": "ElicitSlot"},
            {"text": "yes", "tokens": ["yes"], "intent": "book_table",
             "slots": ["O"], "dialog_act": "Confirm"},
        ],
    }


def test_load_conversational_jsonl(tmp_path):
    p = tmp_path / "conv.jsonl"
    p.write_text(json.dumps(_conv_obj()) + "\n", encoding="utf-8")
    ds = D.load_conversational_jsonl(p)
    assert len(ds.conversations) == 1
    assert len(ds.conversations[0].turns) == 3
    assert ds.conversations[0].turns[1].slots == ["B-time", "I-time"]


def test_jsonl_length_mismatch_is_schema_error(tmp_path):
    obj = _conv_obj()
    obj["turns"][0]["slots"] = ["O"]
    p = tmp_path / "conv.jsonl"
    p.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    with pytest.raises(D.SchemaError, match="'c1' turn 0"):
        D.load_conversational_jsonl(p)


def test_jsonl_missing_field_is_schema_error(tmp_path):
    obj = _conv_obj()
    del obj["turns"][0]["intent"]
    p = tmp_path / "conv.jsonl"
    p.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    with pytest.raises(D.SchemaError, match="intent"):
        D.load_conversational_jsonl(p)


def test_jsonl_invalid_json_is_load_error(tmp_path):
    p = tmp_path / "conv.jsonl"
    p.write_text("{not json}\n", encoding="utf-8")
    with pytest.raises(D.LoadError, match=":1"):
        D.load_conversational_jsonl(p)


def test_jsonl_text_only_turn_is_tokenized(tmp_path):
    obj = {"id": "c", "turns": [{"text": "Hello there.", "intent": "greet",
                                 "slots": ["O", "O", "O"], "dialog_act": D.DUMMY_DA}]}
    p = tmp_path / "c.jsonl"
    p.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    ds = D.load_conversational_jsonl(p)
    assert ds.conversations[0].turns[0].tokens == ["hello", "there", "."]


def test_jsonl_round_trip(tmp_path):
    ds = D.generate_synthetic(11, 25, "cable-like")
    p = tmp_path / "rt.jsonl"
    D.write_conversational_jsonl(ds.conversations, p)
    back = D.load_conversational_jsonl(p)
    assert back.conversations == ds.conversations
    # and writing again is byte-identical
    p2 = tmp_path / "rt2.jsonl"
    D.write_conversational_jsonl(back.conversations, p2)
    assert p.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# Context windows
# ---------------------------------------------------------------------------

def _five_turn_conv():
    turns = [
        D.Turn([f"tok{i}"], f"intent{i}", [f"B-s{i}"], D.DUMMY_DA if i == 0 else "Confirm")
        for i in range(5)
    ]
    return D.Conversation("w", turns)


def test_window_pads_before_start():
    conv = _five_turn_conv()
    win = D.make_context_window(conv, 0, 3)
    assert win.pad_mask == [True, True, True, False]
    assert [t.intent for t in win.turns[:3]] == [D.DUMMY_INTENT] * 3
    assert win.turns[3].tokens == ["tok0"]


def test_window_full_history_no_pads():
    conv = _five_turn_conv()
    win = D.make_context_window(conv, 4, 3)
    assert win.pad_mask == [False] * 4
    assert [t.tokens[0] for t in win.turns] == ["tok1", "tok2", "tok3", "tok4"]


def test_window_current_turn_masked():
    conv = _five_turn_conv()
    win = D.make_context_window(conv, 2, 2)
    cur = win.current
    assert cur.intent == D.DUMMY_INTENT and cur.dialog_act == D.DUMMY_DA
    assert cur.tokens == ["tok2"] and cur.slots == ["B-s2"]
    # history turns keep their gold labels
    assert win.turns[0].intent == "intent0" and win.turns[1].intent == "intent1"


def test_window_slot_history_from_prior_turns_only():
    # hand enumeration on a 3-turn fixture: turns 0,1 carry s0,s1; turn 2's own
    # slot type s2 must not leak into its history
    conv = _five_turn_conv()
    win = D.make_context_window(conv, 2, 3)
    assert win.slot_history == {"s0", "s1"}
    assert D.make_context_window(conv, 0, 3).slot_history == set()


def test_window_never_pads_current_and_index_checked():
    conv = _five_turn_conv()
    for i in range(5):
        for k in range(4):
            win = D.make_context_window(conv, i, k)
            assert win.pad_mask[-1] is False
            assert len(win.turns) == k + 1
            if i >= k:
                assert not any(win.pad_mask)
    with pytest.raises(IndexError):
        D.make_context_window(conv, 5, 3)
    with pytest.raises(IndexError):
        D.make_context_window(conv, -1, 3)


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

def test_generator_deterministic(tmp_path):
    a = D.generate_synthetic(5, 30, "cable-like")
    b = D.generate_synthetic(5, 30, "cable-like")
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    D.write_conversational_jsonl(a.conversations, pa)
    D.write_conversational_jsonl(b.conversations, pb)
    assert pa.read_bytes() == pb.read_bytes()
    c = D.generate_synthetic(6, 30, "cable-like")
    assert c.conversations != a.conversations


def test_generator_profiles_inventories():
    cable = D.generate_synthetic(1, 300, "cable-like")
    assert len(cable.vocabs.intent) - 1 >= 20  # minus the dummy row
    assert len(cable.vocabs.slot_type) >= 20
    booking = D.generate_synthetic(1, 300, "booking-like")
    assert len(booking.vocabs.intent) - 1 == 19
    assert len(booking.vocabs.slot_type) == 5


def test_generator_unknown_profile():
    with pytest.raises(ValueError, match="unknown profile"):
        D.generate_synthetic(1, 1, "nope")


def test_generator_bio_validity_and_acts():
    ds = D.generate_synthetic(2, 100, "cable-like")
    for conv in ds.conversations:
        conv.validate()  # includes BIO validity
        assert conv.turns[0].dialog_act == D.DUMMY_DA
        for turn in conv.turns[1:]:
            assert turn.dialog_act in D.DIALOG_ACTS


def test_generator_first_turns_unambiguous_followups_ambiguous():
    ds = D.generate_synthetic(1, 200, "cable-like")
    by_surface = defaultdict(set)
    for conv in ds.conversations:
        for t in conv.turns:
            by_surface[" ".join(t.tokens)].add(t.intent)
    # every first turn's surface maps to exactly one intent corpus-wide
    for conv in ds.conversations:
        assert len(by_surface[" ".join(conv.turns[0].tokens)]) == 1
    # >= 30% of non-first turns are ambiguous without context
    nonfirst = [t for conv in ds.conversations for t in conv.turns[1:]]
    ambiguous = [t for t in nonfirst if len(by_surface[" ".join(t.tokens)]) >= 2]
    assert len(ambiguous) / len(nonfirst) >= 0.30


def test_split_dataset_shares_train_vocab():
    full = D.generate_synthetic(1, 60, "booking-like")
    train, test = D.split_dataset(full, 40, 20)
    assert train.vocabs == test.vocabs
    assert len(train.conversations) == 40 and len(test.conversations) == 20
    assert test.split == "test"
    with pytest.raises(ValueError):
        D.split_dataset(full, 50, 20)
