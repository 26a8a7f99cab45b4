"""KB-derived synthetic training data: templates, targets, pairs."""

from __future__ import annotations

from neglink.kb import Concept, build_kb
from neglink.synth import (
    DEFINITION_TEMPLATE,
    SYNONYM_TEMPLATE,
    gen_definition_examples,
    gen_pretrain_examples,
    gen_pretrain_pairs,
    gen_synonym_examples,
)
from neglink.tfidf import build_index
from neglink.vocab import Vocab


def make_kb():
    return build_kb(
        [
            Concept("C1", ("abc", "abd", "azz"), "Some  Thing"),
            Concept("C2", ("bcd", "bce"), None),
            Concept("C3", ("solo",), "Alone."),
            Concept("C4", ("one name", "two name"), None),
        ]
    )


def test_definition_examples_use_template_and_sibling_target():
    kb = make_kb()
    idx = build_index(kb.names())
    got = gen_definition_examples(kb, idx)
    by_mention = {(e.concept_id, e.mention): e for e in got}
    assert all(e.source_kind == "definition" for e in got)
    # every synonym of every defined concept appears
    assert set(by_mention) == {("C1", "abc"), ("C1", "abd"), ("C1", "azz"), ("C3", "solo")}
    e = by_mention[("C1", "abc")]
    assert e.right_context == f"{DEFINITION_TEMPLATE} some thing"
    assert e.target == "abd"  # nearest sibling by trigram overlap
    # a single-name concept falls back to generating its own name
    assert by_mention[("C3", "solo")].target == "solo"


def test_synonym_examples_only_for_undefined_multiname_concepts():
    kb = make_kb()
    idx = build_index(kb.names())
    got = gen_synonym_examples(kb, idx)
    assert {e.concept_id for e in got} == {"C2", "C4"}
    e = next(x for x in got if x.mention == "bcd")
    assert e.right_context == f"{SYNONYM_TEMPLATE} bce"
    # only two names exist, so the target falls back to the named sibling
    assert e.target == "bce"
    assert e.source_kind == "synonym"


def test_cap_limits_examples_per_concept():
    kb = make_kb()
    idx = build_index(kb.names())
    got = gen_definition_examples(kb, idx, cap=1)
    assert sum(1 for e in got if e.concept_id == "C1") == 1


def test_examples_render_like_ordinary_mentions():
    kb = make_kb()
    idx = build_index(kb.names())
    vocab = Vocab.from_texts(kb.names() + [DEFINITION_TEMPLATE, SYNONYM_TEMPLATE, "some thing alone. is"])
    for e in gen_pretrain_examples(kb, idx):
        ex = e.to_mention_example()
        assert ex.targets == (e.target,)
        assert ex.gold_ids == frozenset({e.concept_id})
        enc = e.encoded(vocab)
        assert enc.encoder_tokens[0] == vocab.bos_id
        assert enc.encoder_tokens[-1] == vocab.eos_id


def test_generation_is_deterministic():
    kb = make_kb()
    idx = build_index(kb.names())
    assert gen_pretrain_examples(kb, idx) == gen_pretrain_examples(kb, idx)


def test_pretrain_pairs_prefer_target_against_other_concept_names():
    kb = make_kb()
    idx = build_index(kb.names())
    vocab = Vocab.from_texts(kb.names() + [DEFINITION_TEMPLATE, SYNONYM_TEMPLATE, "some thing alone. is"])
    examples = gen_pretrain_examples(kb, idx)
    pairs = gen_pretrain_pairs(kb, idx, vocab, k=2, examples=examples)
    assert pairs
    for t in pairs:
        ex = examples[t.mention_index]
        assert t.preferred == ex.target
        assert ex.concept_id not in kb.align(t.dispreferred)
    # every example contributes at most k pairs
    per_example = {}
    for t in pairs:
        per_example[t.mention_index] = per_example.get(t.mention_index, 0) + 1
    assert max(per_example.values()) <= 2
