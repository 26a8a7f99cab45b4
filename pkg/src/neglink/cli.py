"""Command-line pipeline driver.

One subcommand per pipeline stage, file handoff between stages:

    kb build        cache vocabulary + decoding trie for a knowledge base
    synth           KB-derived synthetic mentions and preference pairs
    train-positive  stage-1 checkpoint from mention synonyms
    mine            preference pairs from a checkpoint's predictions
    train-negative  stage-2 checkpoint from a pairs file
    link            constrained predictions for a mention file
    eval            accuracy report, optional paired bootstrap comparison
    analyze         similarity-binned errors and log-prob gap tables
    gradcheck       finite-difference verification of all losses

Exit codes: 0 success, 1 usage, 2 malformed/missing input, 3 numeric
failure, 4 gradient check failure. Logs go to stderr; data to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, artifacts, model, synth
from .beam import Prediction, constrained_beam_search
from .config import PRESETS, RunConfig, build_config
from .corpus import MentionExample, prepare_mentions, render
from .errors import ConfigError, FormatError, NeglinkError, NumericError
from .evaluate import (
    bootstrap_paired_test,
    binned_error_report,
    evaluate,
    kfold_aggregate,
    logprob_gap_report,
)
from .gradcheck import run_gradcheck
from .kb import KnowledgeBase, load_kb, normalize_name
from .tfidf import build_index
from .train_negative import PreferenceTriplet, mine_pairs, train_preference
from .train_positive import build_positive_set, train
from .trie import TokenTrie, build_trie, load_trie, save_trie
from .vocab import Vocab

log = logging.getLogger("neglink")

PROMPT_SUFFIX = " is"


# ---------------------------------------------------------------------------
# shared plumbing


def _require_paths(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FormatError(f"input path does not exist: {p}")


def _config_from_args(args) -> RunConfig:
    overrides: dict[str, str] = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    for key in ("seed", "beam", "topk", "loss", "negatives", "pairs_mode"):
        value = getattr(args, key, None)
        if value is not None:
            overrides["pairs" if key == "pairs_mode" else key] = str(value)
    return build_config(preset=getattr(args, "preset", None), config_file=getattr(args, "config", None), overrides=overrides)


def vocab_from_sources(kb: KnowledgeBase, mention_files: list[str], abbrev: str | None) -> Vocab:
    """Characters of every string the pipeline can ask the model to read."""
    texts = [PROMPT_SUFFIX, synth.DEFINITION_TEMPLATE, synth.SYNONYM_TEMPLATE]
    texts.extend(kb.name_index)
    for concept in kb.concepts.values():
        if concept.definition:
            texts.append(normalize_name(concept.definition))
    for path in mention_files:
        examples, _ = prepare_mentions(path, kb, abbrev)
        for ex in examples:
            texts.extend((ex.left_context, ex.mention, ex.right_context))
    return Vocab.from_texts(texts)


def _load_cache(cache_dir) -> tuple[Vocab, TokenTrie]:
    cache = Path(cache_dir)
    _require_paths(cache / "vocab.json", cache / "trie.bin")
    with open(cache / "vocab.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    vocab = Vocab(list(doc["tokens"]))
    return vocab, load_trie(cache / "trie.bin")


def _check_vocab(ckpt: model.Checkpoint, vocab: Vocab) -> None:
    if ckpt.vocab != vocab:
        raise ConfigError("checkpoint vocabulary does not match the cache vocabulary")


def _write_loss_log(path, header: dict, loss_log) -> None:
    artifacts.write_jsonl(path, header, ({"step": s, "loss": l} for s, l in loss_log))


def _prediction_records(i: int, preds: list[Prediction]) -> list[dict]:
    return [
        {"mention_index": i, "rank": r, "name": p.name, "ids": sorted(p.ids), "score": p.score}
        for r, p in enumerate(preds, start=1)
    ]


def _link_all(ckpt, examples, trie, kb, cfg: RunConfig) -> list[list[Prediction]]:
    out = []
    for ex in examples:
        enc = render(ex, ckpt.vocab, max_ctx=cfg.max_ctx)
        out.append(constrained_beam_search(ckpt, enc, trie, kb, beam=cfg.beam, k=cfg.topk))
    return out


def _predictions_from_file(path, kb: KnowledgeBase, n_examples: int) -> list[list[Prediction]]:
    _, records = artifacts.read_jsonl(path)
    lists: list[list[Prediction]] = [[] for _ in range(n_examples)]
    for rec in records:
        try:
            i, rank, name, score = rec["mention_index"], rec["rank"], rec["name"], rec["score"]
        except KeyError as e:
            raise FormatError(f"{path}: prediction record missing {e}") from e
        if not 0 <= i < n_examples:
            raise FormatError(f"{path}: mention_index {i} out of range for {n_examples} examples")
        lists[i].append((rank, Prediction(name=name, ids=kb.align(name), score=float(score))))
    out = []
    for i, preds in enumerate(lists):
        preds.sort(key=lambda rp: rp[0])
        out.append([p for _, p in preds])
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_kb_build(args) -> int:
    cfg = _config_from_args(args)
    _require_paths(args.kb, *(args.mentions or []), args.abbrev)
    kb = load_kb(args.kb)
    vocab = vocab_from_sources(kb, args.mentions or [], args.abbrev)
    trie = build_trie(kb.names(), vocab)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    inputs = {"kb": args.kb}
    inputs.update({f"mentions{i}": p for i, p in enumerate(args.mentions or [])})
    header = artifacts.make_header(cfg.seed, inputs)
    with open(outdir / "vocab.json", "w", encoding="utf-8") as fh:
        fh.write(artifacts.canonical_json({"header": header, "tokens": list(vocab.tokens)}) + "\n")
    save_trie(trie, outdir / "trie.bin", metadata={"names": trie.size, "vocab_size": len(vocab)})
    with open(outdir / "kb_info.json", "w", encoding="utf-8") as fh:
        fh.write(
            artifacts.canonical_json(
                {
                    "header": header,
                    "concepts": len(kb.concepts),
                    "names": len(kb.name_index),
                    "rejected": kb.rejected_count,
                    "vocab_size": len(vocab),
                }
            )
            + "\n"
        )
    log.info("cached vocab (%d tokens) and trie (%d names) in %s", len(vocab), trie.size, outdir)
    return 0


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    _require_paths(args.kb, args.cache)
    kb = load_kb(args.kb)
    vocab, _ = _load_cache(args.cache)
    idx = build_index(kb.names())
    examples = synth.gen_pretrain_examples(kb, idx, cap=args.cap)
    pairs = synth.gen_pretrain_pairs(kb, idx, vocab, k=args.k, examples=examples, max_ctx=cfg.max_ctx)
    header = artifacts.make_header(cfg.seed, {"kb": args.kb})
    artifacts.write_jsonl(
        args.out_mentions,
        header,
        (
            {
                "left": "",
                "mention": ex.mention,
                "right": ex.right_context,
                "gold_ids": [ex.concept_id],
                "targets": [ex.target],
                "kind": ex.source_kind,
            }
            for ex in examples
        ),
    )
    artifacts.write_jsonl(
        args.out_pairs,
        header,
        (
            {"mention_index": t.mention_index, "e_w": t.preferred, "e_l": t.dispreferred,
             "rank_w": t.rank_w, "rank_l": t.rank_l}
            for t in pairs
        ),
    )
    log.info("synthesized %d examples and %d pairs", len(examples), len(pairs))
    return 0


def _load_training_inputs(args, need_trie: bool = True):
    cfg = _config_from_args(args)
    _require_paths(args.kb, args.mentions, args.cache, getattr(args, "abbrev", None))
    kb = load_kb(args.kb)
    vocab, trie = _load_cache(args.cache)
    examples, dropped = prepare_mentions(args.mentions, kb, getattr(args, "abbrev", None))
    if dropped:
        log.info("dropped %d unlinkable examples", dropped)
    if not examples:
        raise FormatError(f"{args.mentions}: no linkable examples")
    return cfg, kb, vocab, trie, examples


def cmd_train_positive(args) -> int:
    cfg, kb, vocab, trie, examples = _load_training_inputs(args)
    idx = build_index(kb.names())
    instances = build_positive_set(examples, kb, idx, vocab, k=cfg.syn_topk, max_ctx=cfg.max_ctx)
    if args.init:
        _require_paths(args.init)
        ckpt = model.load(args.init)
        _check_vocab(ckpt, vocab)
    else:
        ckpt = model.init_checkpoint(vocab, model.ModelConfig(hidden_dim=cfg.hidden_dim, seed=cfg.seed))
    result = train(ckpt, instances, cfg.positive_optimizer(), seed=cfg.seed)
    model.save(result.checkpoint, args.out)
    header = artifacts.make_header(cfg.seed, {"kb": args.kb, "mentions": args.mentions})
    _write_loss_log(str(args.out) + ".losses.jsonl", header, result.loss_log)
    log.info("stage-1 checkpoint: %d instances, %d steps, final loss %.4f",
             len(instances), len(result.loss_log), result.loss_log[-1][1])
    return 0


def cmd_mine(args) -> int:
    cfg, kb, vocab, trie, examples = _load_training_inputs(args)
    _require_paths(args.ckpt)
    ckpt = model.load(args.ckpt)
    _check_vocab(ckpt, vocab)
    idx = build_index(kb.names())
    triplets = mine_pairs(
        ckpt, examples, kb, trie, idx,
        topk=cfg.topk, negatives=cfg.negatives, pairs=cfg.pairs, max_ctx=cfg.max_ctx,
    )
    header = artifacts.make_header(cfg.seed, {"kb": args.kb, "mentions": args.mentions, "ckpt": args.ckpt})
    artifacts.write_jsonl(
        args.out,
        header,
        (
            {"mention_index": t.mention_index, "e_w": t.preferred, "e_l": t.dispreferred,
             "rank_w": t.rank_w, "rank_l": t.rank_l}
            for t in triplets
        ),
    )
    log.info("mined %d preference pairs from %d examples", len(triplets), len(examples))
    return 0


def cmd_train_negative(args) -> int:
    cfg, kb, vocab, trie, examples = _load_training_inputs(args)
    _require_paths(args.ckpt, args.pairs)
    ckpt = model.load(args.ckpt)
    _check_vocab(ckpt, vocab)
    _, records = artifacts.read_jsonl(args.pairs)
    triplets = []
    for rec in records:
        try:
            i, e_w, e_l = rec["mention_index"], rec["e_w"], rec["e_l"]
        except KeyError as e:
            raise FormatError(f"{args.pairs}: pair record missing {e}") from e
        if not 0 <= i < len(examples):
            raise FormatError(f"{args.pairs}: mention_index {i} out of range")
        enc = render(examples[i], vocab, max_ctx=cfg.max_ctx)
        triplets.append(
            PreferenceTriplet(input=enc, preferred=e_w, dispreferred=e_l,
                              mention_index=i, rank_w=rec.get("rank_w"), rank_l=rec.get("rank_l"))
        )
    if not triplets:
        raise FormatError(f"{args.pairs}: no preference pairs")
    result = train_preference(ckpt, triplets, cfg.preference_config(), seed=cfg.seed)
    model.save(result.checkpoint, args.out)
    header = artifacts.make_header(cfg.seed, {"kb": args.kb, "mentions": args.mentions,
                                              "ckpt": args.ckpt, "pairs": args.pairs})
    _write_loss_log(str(args.out) + ".losses.jsonl", header, result.loss_log)
    log.info("stage-2 (%s) checkpoint from %d pairs, mean loss %.4f",
             cfg.loss, len(triplets),
             sum(l for _, l in result.loss_log) / len(result.loss_log))
    return 0


def cmd_link(args) -> int:
    cfg, kb, vocab, trie, examples = _load_training_inputs(args)
    _require_paths(args.ckpt)
    ckpt = model.load(args.ckpt)
    _check_vocab(ckpt, vocab)
    prediction_lists = _link_all(ckpt, examples, trie, kb, cfg)
    header = artifacts.make_header(cfg.seed, {"kb": args.kb, "mentions": args.mentions, "ckpt": args.ckpt})
    artifacts.write_jsonl(
        args.out,
        header,
        (rec for i, preds in enumerate(prediction_lists) for rec in _prediction_records(i, preds)),
    )
    log.info("linked %d mentions (beam %d, top %d)", len(examples), cfg.beam, cfg.topk)
    return 0


def _fold_reports(examples: list[MentionExample], prediction_lists, ks) -> dict:
    folds = sorted({ex.fold for ex in examples if ex.fold is not None})
    whole = evaluate(prediction_lists, [ex.gold_ids for ex in examples], ks=ks)
    doc = {"n": whole.n, "acc_at": {str(k): v for k, v in whole.acc_at.items()}}
    if folds:
        per_fold = []
        for f in folds:
            sub = [i for i, ex in enumerate(examples) if ex.fold == f]
            rep = evaluate([prediction_lists[i] for i in sub], [examples[i].gold_ids for i in sub], ks=ks)
            per_fold.append((f, rep))
        agg = kfold_aggregate([r for _, r in per_fold])
        doc["folds"] = {str(f): {"n": r.n, "acc_at": {str(k): v for k, v in r.acc_at.items()}} for f, r in per_fold}
        doc["fold_mean"] = {str(k): v for k, v in agg.acc_at.items()}
    return doc


def cmd_eval(args) -> int:
    cfg, kb, vocab, trie, examples = _load_training_inputs(args)
    _require_paths(args.preds)
    ks = (1, args.k) if args.k != 1 else (1,)
    prediction_lists = _predictions_from_file(args.preds, kb, len(examples))
    doc = _fold_reports(examples, prediction_lists, ks)
    gold_sets = [ex.gold_ids for ex in examples]
    report_a = evaluate(prediction_lists, gold_sets, ks=ks)
    if args.preds_b:
        _require_paths(args.preds_b)
        lists_b = _predictions_from_file(args.preds_b, kb, len(examples))
        report_b = evaluate(lists_b, gold_sets, ks=ks)
        boot = bootstrap_paired_test(
            report_a.per_example, report_b.per_example, k=args.k,
            resamples=args.resamples, seed=cfg.seed,
        )
        doc["comparison"] = {
            "k": args.k,
            "acc_b": {str(k): v for k, v in report_b.acc_at.items()},
            "mean_diff": boot.mean_diff,
            "p_value": boot.p_value,
        }
    header = artifacts.make_header(cfg.seed, {"mentions": args.mentions, "preds": args.preds})
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(artifacts.canonical_json({"header": header, "report": doc}) + "\n")
    for k in ks:
        print(f"Acc@{k} = {report_a.acc_at[k]:.4f}")
    if args.preds_b:
        print(f"mean_diff@{args.k} = {doc['comparison']['mean_diff']:+.4f}  p = {doc['comparison']['p_value']:.6f}")
    return 0


def cmd_analyze(args) -> int:
    cfg, kb, vocab, trie, examples = _load_training_inputs(args)
    _require_paths(args.ckpt, args.preds)
    ckpt = model.load(args.ckpt)
    _check_vocab(ckpt, vocab)
    idx = build_index(kb.names())
    prediction_lists = _predictions_from_file(args.preds, kb, len(examples))
    binned = binned_error_report(examples, prediction_lists, kb, idx)
    gaps = logprob_gap_report(ckpt, examples, prediction_lists, kb, idx, max_ctx=cfg.max_ctx)
    header = artifacts.make_header(cfg.seed, {"mentions": args.mentions, "preds": args.preds, "ckpt": args.ckpt})
    artifacts.write_jsonl(
        args.out_bins,
        header,
        (
            {"lo": b.lo, "hi": b.hi, "count": b.count, "errors": b.errors, "accuracy": b.accuracy}
            for b in binned.bins
        ),
    )
    artifacts.write_jsonl(
        args.out_gaps,
        header,
        (
            {"lo": b.lo, "hi": b.hi, "count": b.count, "mean_gap": b.mean_gap}
            for b in gaps.bins
        ),
    )
    log.info("analysis written to %s and %s", args.out_bins, args.out_gaps)
    return 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(seeds=tuple(args.seeds), n_coords=args.coords, tol=args.tol)
    for c in report.checks:
        status = "ok" if c.ok else "FAIL"
        print(f"{c.loss_kind:8s} seed={c.seed}  max_rel_err={c.max_rel_err:.3e}  {status}")
    if not report.passed:
        return 4
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named hyperparameter preset")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neglink", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"neglink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    kb_p = sub.add_parser("kb", help="knowledge-base utilities")
    kb_sub = kb_p.add_subparsers(dest="kb_command", required=True)
    p = kb_sub.add_parser("build", help="cache vocabulary and decoding trie")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--mentions", action="append", help="mention file whose text joins the vocabulary (repeatable)")
    p.add_argument("--abbrev")
    p.add_argument("--out", required=True, help="cache directory")
    p.set_defaults(func=cmd_kb_build)

    p = sub.add_parser("synth", help="KB-derived synthetic pre-training data")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--cap", type=int, default=8, help="examples per concept per template")
    p.add_argument("--k", type=int, default=3, help="negatives per synthetic example")
    p.add_argument("--out-mentions", required=True)
    p.add_argument("--out-pairs", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-positive", help="stage-1 synonym generation training")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--abbrev")
    p.add_argument("--cache", required=True)
    p.add_argument("--init", help="checkpoint to start from instead of a fresh init")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_positive)

    p = sub.add_parser("mine", help="mine preference pairs from a checkpoint")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--abbrev")
    p.add_argument("--cache", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--topk", type=int, default=None)
    p.add_argument("--negatives", choices=("pred", "tfidf"), default=None)
    p.add_argument("--pairs", dest="pairs_mode", choices=("filtered", "all"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train-negative", help="stage-2 preference training")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--abbrev")
    p.add_argument("--cache", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pairs", dest="pairs", required=True, help="mined pairs file")
    p.add_argument("--loss", choices=("pairwise", "dpo", "cpo", "simpo"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_negative)

    p = sub.add_parser("link", help="constrained predictions for mentions")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--abbrev")
    p.add_argument("--cache", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--topk", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("eval", help="accuracy report, optional system comparison")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--abbrev")
    p.add_argument("--cache", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--preds-b", help="second predictions file for the paired bootstrap test")
    p.add_argument("--k", type=int, default=5, help="second accuracy cutoff and the bootstrap k")
    p.add_argument("--resamples", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="similarity-binned errors and log-prob gaps")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--abbrev")
    p.add_argument("--cache", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--out-bins", required=True)
    p.add_argument("--out-gaps", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--coords", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help/--version
        return 0 if e.code in (0, None) else 1
    try:
        return args.func(args)
    except NumericError as e:
        log.error("numeric failure: %s", e)
        return 3
    except (FormatError, NeglinkError) as e:
        log.error("%s", e)
        return 2
    except OSError as e:
        log.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
