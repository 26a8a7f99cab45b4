"""Evaluation: Acc@k, the paired bootstrap test, and the two reports.

Compares a trained stage-1 model against an untrained one on the toy
test set, then walks the full evaluation toolbox: accuracy at several
cutoffs, a bootstrap paired significance test of the difference, the
error rate stratified by gold-synonym similarity, and the log-prob gap
between positives and decoded negatives stratified by mention-negative
similarity. Takes about half a minute.

Run from the repository root:

    python3 demos/05_evaluate_and_analyze.py
"""

from __future__ import annotations

from pathlib import Path

from neglink import model
from neglink.beam import constrained_beam_search
from neglink.cli import vocab_from_sources
from neglink.config import build_config
from neglink.corpus import prepare_mentions, render
from neglink.evaluate import (
    binned_error_report,
    bootstrap_paired_test,
    evaluate,
    logprob_gap_report,
)
from neglink.kb import load_kb
from neglink.tfidf import build_index
from neglink.train_positive import build_positive_set, train
from neglink.trie import build_trie

DATA = Path(__file__).resolve().parents[1] / "data" / "toy"


def main() -> None:
    cfg = build_config(preset="toy")
    kb = load_kb(DATA / "kb.jsonl")
    vocab = vocab_from_sources(kb, [str(DATA / "train.jsonl"), str(DATA / "test.jsonl")], None)
    trie = build_trie(kb.names(), vocab)
    idx = build_index(kb.names())
    train_ex, _ = prepare_mentions(DATA / "train.jsonl", kb, None)
    test_ex, _ = prepare_mentions(DATA / "test.jsonl", kb, None)
    gold = [ex.gold_ids for ex in test_ex]

    untrained = model.init_checkpoint(vocab, model.ModelConfig(hidden_dim=cfg.hidden_dim, seed=cfg.seed))
    instances = build_positive_set(train_ex, kb, idx, vocab, k=cfg.syn_topk, max_ctx=cfg.max_ctx)
    trained = train(untrained, instances, cfg.positive_optimizer(), seed=cfg.seed).checkpoint

    def link(ckpt):
        return [
            constrained_beam_search(ckpt, render(ex, vocab), trie, kb, beam=cfg.beam, k=cfg.topk)
            for ex in test_ex
        ]

    preds_a, preds_b = link(trained), link(untrained)

    print("=== Acc@k ===")
    report_a = evaluate(preds_a, gold, ks=(1, 3, 5))
    report_b = evaluate(preds_b, gold, ks=(1, 3, 5))
    for k in (1, 3, 5):
        print(f"Acc@{k}: trained {report_a.acc_at[k]:.3f}   untrained {report_b.acc_at[k]:.3f}")

    print("\n=== paired bootstrap test (is the difference real?) ===")
    boot = bootstrap_paired_test(report_a.per_example, report_b.per_example, k=1,
                                 resamples=200, seed=0)
    print(f"mean Acc@1 difference over 200 resamples: {boot.mean_diff:+.4f}")
    print(f"two-sided p-value: {boot.p_value:.2e}")

    print("\n=== error rate by gold-synonym similarity ===")
    print("(how mention-like is the *correct* answer? errors cluster where")
    print(" the gold surface form is far from the mention)")
    binned = binned_error_report(test_ex, preds_a, kb, idx)
    for b in binned.bins:
        acc = "     -" if b.accuracy is None else f"{b.accuracy:.3f}"
        print(f"  sim [{b.lo:.1f}, {b.hi:.1f}): n={b.count:4d}  errors={b.errors:4d}  Acc@1={acc}")

    print("\n=== log-prob gap by mention-negative similarity ===")
    print("(positive score minus negative score, binned by how confusable the")
    print(" negative is; preference training widens the high-similarity bins)")
    gaps = logprob_gap_report(trained, test_ex, preds_a, kb, idx)
    for g in gaps.bins:
        if g.count == 0:
            continue
        print(f"  sim [{g.lo:.1f}, {g.hi:.1f}): pairs={g.count:4d}  mean gap={g.mean_gap:+.3f}")


if __name__ == "__main__":
    main()
