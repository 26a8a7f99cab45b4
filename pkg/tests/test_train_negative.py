"""Preference mining rules and the four preference losses."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from neglink import model
from neglink.beam import Prediction
from neglink.corpus import EncodedInput, MentionExample, render
from neglink.errors import ConfigError
from neglink.kb import Concept, build_kb
from neglink.optim import OptimizerConfig
from neglink.tfidf import build_index
from neglink.train_negative import (
    LOSS_KINDS,
    PreferenceConfig,
    PreferenceTriplet,
    dedup_triplets,
    mine_pairs,
    preference_loss_and_grads,
    preference_loss_values,
    train_preference,
    triplets_from_predictions,
)
from neglink.train_positive import gold_synonyms
from neglink.trie import build_trie
from neglink.vocab import Vocab


DUMMY = EncodedInput(encoder_tokens=(1, 2), prompt_tokens=(1,))


def pconfig(kind, **kw):
    opt = OptimizerConfig(learning_rate=kw.pop("lr", 1e-3), steps=1, batch_size=4)
    return PreferenceConfig(loss_kind=kind, optimizer=opt, **kw)


# ---------------------------------------------------------------------------
# pairing rules


def brute_force_pairs(labels):
    """Reference enumeration of (winner_rank, loser_rank) pairs.

    `labels` is a per-rank correctness list, rank 1 first. Rule one pairs
    every correct prediction with every incorrect prediction ranked above
    it. Rule two adds (rank-1 correct, highest incorrect) when the top
    prediction is correct and any incorrect exists.
    """
    n = len(labels)
    pairs = set()
    for w in range(1, n + 1):
        if not labels[w - 1]:
            continue
        for l in range(1, w):
            if not labels[l - 1]:
                pairs.add((w, l))
    if n and labels[0]:
        for l in range(2, n + 1):
            if not labels[l - 1]:
                pairs.add((1, l))
                break
    return pairs


def predictions_from_labels(labels):
    preds = []
    for r, correct in enumerate(labels, start=1):
        cid = "G" if correct else f"B{r}"
        preds.append(Prediction(name=f"name{r}", ids=frozenset({cid}), score=-float(r)))
    return preds


def test_pairing_rules_match_brute_force_enumeration():
    rng = random.Random(6)
    corpus = ["gold name", "namex"]
    idx = build_index(corpus)
    for trial in range(1000):
        n = rng.randrange(1, 7)
        labels = [rng.random() < 0.45 for _ in range(n)]
        preds = predictions_from_labels(labels)
        got = triplets_from_predictions(
            DUMMY, preds, frozenset({"G"}), "gold", ["gold name"], idx
        )
        if any(labels):
            want = brute_force_pairs(labels)
            got_pairs = {(t.rank_w, t.rank_l) for t in got}
            assert got_pairs == want, f"trial {trial}: labels {labels}"
            assert all(t.preferred == f"name{t.rank_w}" for t in got)
            assert all(t.dispreferred == f"name{t.rank_l}" for t in got)
        else:
            # fallback: nearest gold synonym against the top three incorrect
            assert [t.rank_l for t in got] == list(range(1, min(3, n) + 1))
            assert all(t.preferred == "gold name" for t in got)
            assert all(t.rank_w is None for t in got)


def test_pairs_all_mode_crosses_every_correct_with_every_incorrect():
    idx = build_index(["g"])
    labels = [True, False, True, False]
    preds = predictions_from_labels(labels)
    got = triplets_from_predictions(
        DUMMY, preds, frozenset({"G"}), "m", ["g"], idx, pairs="all"
    )
    want = {(1, 2), (1, 4), (3, 2), (3, 4)}
    assert {(t.rank_w, t.rank_l) for t in got} == want


def test_dedup_triplets_keeps_first():
    a = PreferenceTriplet(input=DUMMY, preferred="x", dispreferred="y", rank_w=1, rank_l=2)
    b = PreferenceTriplet(input=DUMMY, preferred="x", dispreferred="y", rank_w=3, rank_l=4)
    c = PreferenceTriplet(input=DUMMY, preferred="x", dispreferred="z")
    got = dedup_triplets([a, b, c])
    assert got == [a, c]
    assert got[0].rank_w == 1


# ---------------------------------------------------------------------------
# loss values (hand-checked arithmetic)


def arrays(*vals):
    return tuple(np.array([v], dtype=np.float64) for v in vals)


def test_pairwise_loss_hand_value():
    lp_w, lp_l, rw, rl, lw, ll = arrays(-1.0, -2.0, 0.0, 0.0, 3.0, 4.0)
    cfg = pconfig("pairwise", beta=0.1)
    loss, dw, dl = preference_loss_values(lp_w, lp_l, rw, rl, lw, ll, cfg)
    # margin is 0.1, loss = ln(1 + e^(-0.1))
    want = math.log1p(math.exp(-0.1))
    assert abs(loss[0] - want) < 1e-15
    s = 1.0 / (1.0 + math.exp(0.1))
    assert abs(dw[0] - (-0.1 * s)) < 1e-15
    assert abs(dl[0] - (0.1 * s)) < 1e-15


def test_dpo_loss_at_reference_is_ln2_exactly():
    rng = np.random.default_rng(12)
    lp = rng.normal(size=100) * 5
    cfg = pconfig("dpo", beta=0.1)
    loss, dw, dl = preference_loss_values(lp, lp - 3.0, lp, lp - 3.0,
                                          np.full(100, 4.0), np.full(100, 6.0), cfg)
    np.testing.assert_array_equal(loss, np.full(100, math.log(2.0)))
    np.testing.assert_array_equal(dw, np.full(100, -0.05))
    np.testing.assert_array_equal(dl, np.full(100, 0.05))


def test_dpo_margin_uses_reference_offsets():
    lp_w, lp_l, rw, rl, lw, ll = arrays(-1.0, -5.0, -2.0, -4.0, 2.0, 2.0)
    cfg = pconfig("dpo", beta=0.1)
    loss, _, _ = preference_loss_values(lp_w, lp_l, rw, rl, lw, ll, cfg)
    # margin = 0.1 * ((-1 + 2) - (-5 + 4)) = 0.2
    want = math.log1p(math.exp(-0.2))
    assert abs(loss[0] - want) < 1e-15


def test_cpo_adds_length_normalized_nll():
    lp_w, lp_l, rw, rl, lw, ll = arrays(-3.0, -4.0, 0.0, 0.0, 3.0, 4.0)
    base_cfg = pconfig("pairwise", beta=0.1)
    cpo_cfg = pconfig("cpo", beta=0.1, cpo_lambda=1.0)
    base, bw, bl = preference_loss_values(lp_w, lp_l, rw, rl, lw, ll, base_cfg)
    got, gw, gl = preference_loss_values(lp_w, lp_l, rw, rl, lw, ll, cpo_cfg)
    assert abs(got[0] - (base[0] + 3.0 / 3.0)) < 1e-15
    assert abs(gw[0] - (bw[0] - 1.0 / 3.0)) < 1e-15
    assert gl[0] == bl[0]


def test_simpo_margin_is_length_normalized_with_target_margin():
    lp_w, lp_l, rw, rl, lw, ll = arrays(-2.0, -6.0, 0.0, 0.0, 2.0, 3.0)
    cfg = pconfig("simpo", beta=0.1, simpo_gamma=0.5)
    loss, dw, dl = preference_loss_values(lp_w, lp_l, rw, rl, lw, ll, cfg)
    margin = 0.1 * (-2.0 / 2.0) - 0.1 * (-6.0 / 3.0) - 0.5
    assert abs(loss[0] - math.log1p(math.exp(-margin))) < 1e-15
    s = 1.0 / (1.0 + math.exp(margin))
    assert abs(dw[0] - (-(0.1 / 2.0) * s)) < 1e-15
    assert abs(dl[0] - ((0.1 / 3.0) * s)) < 1e-15


def test_loss_kind_validation():
    with pytest.raises(ConfigError):
        pconfig("unknown")
    with pytest.raises(ConfigError):
        pconfig("dpo", beta=0.0)
    assert set(LOSS_KINDS) == {"pairwise", "dpo", "cpo", "simpo"}


# ---------------------------------------------------------------------------
# end-to-end loss over the model, and the training loop


def linking_setup(seed=0):
    kb = build_kb([Concept("C1", ("abc", "abd"), None), Concept("C2", ("bcd", "bce"), None)])
    vocab = Vocab.from_texts(kb.names() + ["m is"])
    trie = build_trie(kb.names(), vocab)
    idx = build_index(kb.names())
    ckpt = model.init_checkpoint(vocab, model.ModelConfig(hidden_dim=8, seed=seed))
    examples = [
        MentionExample(left_context="a", mention="abc", right_context="b", gold_ids=frozenset({"C1"})),
        MentionExample(left_context="c", mention="bcd", right_context="d", gold_ids=frozenset({"C2"})),
    ]
    return kb, vocab, trie, idx, ckpt, examples


def make_triplet(vocab, ex, e_w, e_l):
    return PreferenceTriplet(input=render(ex, vocab), preferred=e_w, dispreferred=e_l)


def test_dpo_batch_loss_is_ln2_at_the_reference_model():
    kb, vocab, trie, idx, ckpt, examples = linking_setup()
    ref = model.copy_checkpoint(ckpt)
    triplets = [
        make_triplet(vocab, examples[0], "abc", "bcd"),
        make_triplet(vocab, examples[1], "bce", "abd"),
        make_triplet(vocab, examples[0], "abd", "bce"),
    ]
    cfg = pconfig("dpo")
    loss, grads = preference_loss_and_grads(ckpt, ref, triplets, cfg)
    assert loss == pytest.approx(math.log(2.0), abs=1e-12)
    assert grads is not None


def test_dpo_requires_reference():
    kb, vocab, trie, idx, ckpt, examples = linking_setup()
    t = make_triplet(vocab, examples[0], "abc", "bcd")
    with pytest.raises(ValueError):
        preference_loss_and_grads(ckpt, None, [t], pconfig("dpo"))


def test_preference_gradients_match_finite_differences():
    kb, vocab, trie, idx, ckpt, examples = linking_setup(seed=5)
    ref = model.init_checkpoint(vocab, model.ModelConfig(hidden_dim=8, seed=99))
    triplets = [
        make_triplet(vocab, examples[0], "abc", "bcd"),
        make_triplet(vocab, examples[1], "bcd", "abd"),
    ]
    rng = np.random.default_rng(2)
    h = 1e-5
    for kind in LOSS_KINDS:
        cfg = pconfig(kind)
        _, grads = preference_loss_and_grads(ckpt, ref, triplets, cfg)
        for name in ("emb", "dec_Wh", "enc_Uz", "out_W", "out_b"):
            flat = ckpt.params[name].reshape(-1)
            for _ in range(3):
                i = int(rng.integers(flat.size))
                keep = flat[i]
                flat[i] = keep + h
                up, _ = preference_loss_and_grads(ckpt, ref, triplets, cfg, want_grads=False)
                flat[i] = keep - h
                down, _ = preference_loss_and_grads(ckpt, ref, triplets, cfg, want_grads=False)
                flat[i] = keep
                fd = (up - down) / (2 * h)
                an = grads[name].reshape(-1)[i]
                assert abs(an - fd) / max(1.0, abs(an)) < 1e-6, (kind, name)


def test_mine_pairs_respects_invariants_and_dedup():
    kb, vocab, trie, idx, ckpt, examples = linking_setup()
    triplets = mine_pairs(ckpt, examples, kb, trie, idx, topk=3)
    assert triplets
    assert len(dedup_triplets(triplets)) == len(triplets)
    for t in triplets:
        ex = examples[t.mention_index]
        assert kb.align(t.preferred) & ex.gold_ids
        assert not (kb.align(t.dispreferred) & ex.gold_ids)


def test_mine_pairs_tfidf_mode_skips_decoding():
    kb, vocab, trie, idx, ckpt, examples = linking_setup()
    triplets = mine_pairs(ckpt, examples, kb, trie, idx, negatives="tfidf")
    # nearest gold synonym against three hard negatives per example
    assert len(triplets) == len(examples) * 2  # only two non-gold names exist per example
    for t in triplets:
        ex = examples[t.mention_index]
        syns = gold_synonyms(ex, kb)
        assert t.preferred == syns[0] or t.preferred in syns
        assert t.rank_w is None and t.rank_l is None


def test_train_preference_runs_and_freezes_reference():
    kb, vocab, trie, idx, ckpt, examples = linking_setup()
    triplets = [
        make_triplet(vocab, examples[0], "abc", "bcd"),
        make_triplet(vocab, examples[1], "bcd", "abc"),
        make_triplet(vocab, examples[0], "abd", "bce"),
        make_triplet(vocab, examples[1], "bce", "abd"),
    ]
    cfg = pconfig("dpo", lr=1e-3, epochs=2)
    result = train_preference(ckpt, triplets, cfg, seed=0)
    assert result.checkpoint.stage == "negative"
    assert len(result.loss_log) == 2 * math.ceil(len(triplets) / cfg.optimizer.batch_size)
    # first batch of the first epoch starts at the reference, so its dpo loss is ln 2
    assert result.loss_log[0][1] == pytest.approx(math.log(2.0), abs=1e-12)
    before = {k: v.copy() for k, v in ckpt.params.items()}
    for name in before:
        assert np.array_equal(ckpt.params[name], before[name])


def test_train_preference_zero_rate_is_identity():
    kb, vocab, trie, idx, ckpt, examples = linking_setup()
    triplets = [make_triplet(vocab, examples[0], "abc", "bcd")]
    cfg = pconfig("simpo", lr=0.0)
    result = train_preference(ckpt, triplets, cfg, seed=3)
    for name, p in ckpt.params.items():
        assert np.array_equal(result.checkpoint.params[name], p)


def test_train_preference_deterministic():
    kb, vocab, trie, idx, ckpt, examples = linking_setup()
    triplets = [
        make_triplet(vocab, examples[0], "abc", "bcd"),
        make_triplet(vocab, examples[1], "bcd", "abc"),
        make_triplet(vocab, examples[0], "abd", "bce"),
    ]
    cfg = pconfig("cpo", lr=1e-3, epochs=2)
    r1 = train_preference(ckpt, triplets, cfg, seed=11)
    r2 = train_preference(ckpt, triplets, cfg, seed=11)
    assert r1.loss_log == r2.loss_log
    for name in ckpt.params:
        assert np.array_equal(r1.checkpoint.params[name], r2.checkpoint.params[name])
