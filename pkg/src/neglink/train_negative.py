"""Stage-2 training: mine preference pairs, optimize a preference loss.

Mining runs the constrained decoder over the training mentions and turns
its top-k lists into (input, preferred, dispreferred) triplets:

  (a) every correct prediction is paired with every incorrect prediction
      ranked above it;
  (b) when rank 1 is already correct, it is paired with the single
      highest-ranked incorrect prediction, if one exists;
  (c) when no prediction is correct, the TF-IDF-nearest gold synonym is
      paired with each of the top-3 incorrect predictions.

Triplets are deduplicated on (input, preferred, dispreferred), keeping
the first occurrence. Four losses share one margin form; dpo measures
log-probs relative to a frozen copy of the starting checkpoint, which the
trainer re-scores on every batch so that an untrained model sits at
exactly ln 2 per pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import model, optim
from .beam import Prediction, constrained_beam_search, name_tokens
from .corpus import EncodedInput, MentionExample, render
from .errors import ConfigError
from .kb import KnowledgeBase
from .tfidf import TfIdfIndex, hard_negatives, rank_synonyms
from .train_positive import TrainResult, gold_synonyms

LOSS_KINDS = ("pairwise", "dpo", "cpo", "simpo")


@dataclass(frozen=True)
class PreferenceTriplet:
    input: EncodedInput
    preferred: str
    dispreferred: str
    mention_index: int | None = field(default=None, compare=False)
    rank_w: int | None = field(default=None, compare=False)
    rank_l: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class PreferenceConfig:
    loss_kind: str = "dpo"
    beta: float = 0.1
    cpo_lambda: float = 1.0
    simpo_gamma: float = 0.5
    epochs: int = 1
    optimizer: optim.OptimizerConfig = field(
        default_factory=lambda: optim.OptimizerConfig(learning_rate=1e-3, steps=1, batch_size=8)
    )

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.beta <= 0:
            raise ConfigError("beta must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.cpo_lambda < 0 or self.simpo_gamma < 0:
            raise ConfigError("cpo_lambda and simpo_gamma must be >= 0")


# ---------------------------------------------------------------------------
# mining


def triplets_from_predictions(
    enc_input: EncodedInput,
    predictions: list[Prediction],
    gold_ids: frozenset[str],
    mention: str,
    gold_names: list[str],
    idx: TfIdfIndex,
    pairs: str = "filtered",
    mention_index: int | None = None,
) -> list[PreferenceTriplet]:
    """Apply the pairing rules to one top-k prediction list."""
    correct = [(r, p) for r, p in enumerate(predictions, start=1) if p.ids & gold_ids]
    incorrect = [(r, p) for r, p in enumerate(predictions, start=1) if not (p.ids & gold_ids)]
    out: list[PreferenceTriplet] = []

    def emit(e_w: str, e_l: str, rank_w: int | None, rank_l: int | None):
        out.append(
            PreferenceTriplet(
                input=enc_input, preferred=e_w, dispreferred=e_l,
                mention_index=mention_index, rank_w=rank_w, rank_l=rank_l,
            )
        )

    if correct:
        if pairs == "all":
            for rw, pw in correct:
                for rl, pl in incorrect:
                    emit(pw.name, pl.name, rw, rl)
        else:
            for rw, pw in correct:
                for rl, pl in incorrect:
                    if rl < rw:
                        emit(pw.name, pl.name, rw, rl)
            if correct[0][0] == 1 and incorrect:
                rl, pl = incorrect[0]
                emit(correct[0][1].name, pl.name, 1, rl)
    else:
        e_w = rank_synonyms(mention, gold_names, 1, idx)[0]
        for rl, pl in incorrect[:3]:
            emit(e_w, pl.name, None, rl)
    return out


def dedup_triplets(triplets: list[PreferenceTriplet]) -> list[PreferenceTriplet]:
    seen: set[tuple] = set()
    out = []
    for t in triplets:
        key = (t.input, t.preferred, t.dispreferred)
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


def mine_pairs(
    ckpt: model.Checkpoint,
    examples: list[MentionExample],
    kb: KnowledgeBase,
    trie,
    idx: TfIdfIndex,
    topk: int = 5,
    negatives: str = "pred",
    pairs: str = "filtered",
    max_ctx: int = 128,
) -> list[PreferenceTriplet]:
    """Mine the preference dataset from the model's constrained predictions.

    negatives="tfidf" skips decoding and pairs the nearest gold synonym
    against the three most mention-similar wrong-concept names instead.
    """
    if topk < 2:
        raise ValueError("topk must be >= 2")
    if negatives not in ("pred", "tfidf"):
        raise ValueError(f"negatives must be 'pred' or 'tfidf', got {negatives!r}")
    if pairs not in ("filtered", "all"):
        raise ValueError(f"pairs must be 'filtered' or 'all', got {pairs!r}")
    out: list[PreferenceTriplet] = []
    for i, ex in enumerate(examples):
        enc = render(ex, ckpt.vocab, max_ctx=max_ctx)
        names = gold_synonyms(ex, kb)
        if negatives == "tfidf":
            e_w = rank_synonyms(ex.mention, names, 1, idx)[0]
            mined = [
                PreferenceTriplet(input=enc, preferred=e_w, dispreferred=e_l, mention_index=i)
                for e_l in hard_negatives(ex.mention, kb, ex.gold_ids, 3, idx)
            ]
        else:
            preds = constrained_beam_search(ckpt, enc, trie, kb, beam=topk, k=topk)
            mined = triplets_from_predictions(enc, preds, ex.gold_ids, ex.mention, names, idx, pairs, i)
        for t in mined:
            ok = (
                kb.align(t.preferred) & ex.gold_ids
                and not (kb.align(t.dispreferred) & ex.gold_ids)
                and t.preferred != t.dispreferred
            )
            if not ok:
                raise AssertionError(
                    f"mined triplet violates invariants: {t.preferred!r} vs {t.dispreferred!r}"
                )
        out.extend(mined)
    return dedup_triplets(out)


# ---------------------------------------------------------------------------
# losses


def preference_loss_values(
    lp_w: np.ndarray,
    lp_l: np.ndarray,
    ref_w: np.ndarray,
    ref_l: np.ndarray,
    len_w: np.ndarray,
    len_l: np.ndarray,
    cfg: PreferenceConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pair losses and d(loss)/d(lp_w), d(loss)/d(lp_l), all (B,).

    -log sigma(m) is computed as logaddexp(0, -m) for stability.
    """
    beta = cfg.beta
    if cfg.loss_kind == "simpo":
        margin = (beta / len_w) * lp_w - (beta / len_l) * lp_l - cfg.simpo_gamma
        s = expit(-margin)
        return np.logaddexp(0.0, -margin), -(beta / len_w) * s, (beta / len_l) * s
    if cfg.loss_kind == "dpo":
        margin = beta * ((lp_w - ref_w) - (lp_l - ref_l))
    else:
        margin = beta * (lp_w - lp_l)
    loss = np.logaddexp(0.0, -margin)
    s = expit(-margin)
    dlp_w = -beta * s
    dlp_l = beta * s
    if cfg.loss_kind == "cpo":
        loss = loss - cfg.cpo_lambda * lp_w / len_w
        dlp_w = dlp_w - cfg.cpo_lambda / len_w
    return loss, dlp_w, dlp_l


def _triplet_tokens(triplet: PreferenceTriplet, vocab) -> tuple[list[int], list[int]]:
    return name_tokens(triplet.preferred, vocab), name_tokens(triplet.dispreferred, vocab)


def preference_loss(
    ckpt: model.Checkpoint,
    ref: model.Checkpoint | None,
    triplet: PreferenceTriplet,
    cfg: PreferenceConfig,
) -> float:
    """Per-pair loss for one triplet; ref is consulted only for dpo."""
    loss, _ = preference_loss_and_grads(ckpt, ref, [triplet], cfg, want_grads=False)
    return model.check_finite_loss(loss)


def preference_loss_and_grads(
    ckpt: model.Checkpoint,
    ref: model.Checkpoint | None,
    triplets: list[PreferenceTriplet],
    cfg: PreferenceConfig,
    want_grads: bool = True,
) -> tuple[float, dict[str, np.ndarray] | None]:
    """Mean per-pair loss over the batch, plus exact parameter gradients.

    Preferred and dispreferred sequences share one forward pass (the batch
    is stacked [w..., l...]); for dpo the frozen reference is re-scored on
    the identical arrays so both sides see the same padding and reduction
    order.
    """
    if cfg.loss_kind == "dpo" and ref is None:
        raise ValueError("dpo requires a frozen reference checkpoint")
    B = len(triplets)
    vocab = ckpt.vocab
    pad = vocab.pad_id
    entities = []
    for t in triplets:
        entities.append(name_tokens(t.preferred, vocab))
    for t in triplets:
        entities.append(name_tokens(t.dispreferred, vocab))
    prompts = [list(t.input.prompt_tokens) for t in triplets] * 2
    enc_seqs = [list(t.input.encoder_tokens) for t in triplets] * 2
    enc_t, enc_m = model.pad_batch(enc_seqs, pad)
    dec_t, dec_m, tg, tm = model.build_decoder_batch(prompts, entities, pad)

    cache = model.forward_teacher(ckpt, enc_t, enc_m, dec_t, dec_m)
    lp = model.sequence_log_probs(cache, tg, tm)
    if cfg.loss_kind == "dpo":
        ref_cache = model.forward_teacher(ref, enc_t, enc_m, dec_t, dec_m)
        ref_lp = model.sequence_log_probs(ref_cache, tg, tm)
    else:
        ref_lp = np.zeros_like(lp)
    len_w = np.array([len(e) for e in entities[:B]], dtype=np.float64)
    len_l = np.array([len(e) for e in entities[B:]], dtype=np.float64)
    losses, dlp_w, dlp_l = preference_loss_values(
        lp[:B], lp[B:], ref_lp[:B], ref_lp[B:], len_w, len_l, cfg
    )
    loss = float(losses.mean())
    if not want_grads:
        return loss, None
    coeffs = np.concatenate([dlp_w, dlp_l]) / B
    dlogits = model.sequence_grad_dlogits(cache, tg, tm, coeffs)
    return loss, model.backward_from_dlogits(ckpt, cache, dlogits)


# ---------------------------------------------------------------------------
# training


def train_preference(
    ckpt: model.Checkpoint,
    triplets: list[PreferenceTriplet],
    cfg: PreferenceConfig,
    seed: int,
) -> TrainResult:
    """Preference-loss epochs over the mined triplets.

    The input checkpoint is copied, never modified; for dpo that copy of
    the starting parameters also serves as the frozen reference.
    """
    if not triplets:
        raise ValueError("no preference triplets")
    ref = model.copy_checkpoint(ckpt) if cfg.loss_kind == "dpo" else None
    out = model.copy_checkpoint(ckpt)
    out.opt_state = model.OptimizerState.fresh(out.params)
    opt = cfg.optimizer
    rng = np.random.default_rng(seed)
    loss_log: list[tuple[int, float]] = []
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(triplets))
        for start in range(0, len(order), opt.batch_size):
            batch = [triplets[i] for i in order[start : start + opt.batch_size]]
            loss, grads = preference_loss_and_grads(out, ref, batch, cfg)
            model.check_finite_loss(loss, step_index=step)
            optim.clip_grads(grads, opt.grad_clip)
            optim.adamw_step(out.params, grads, out.opt_state, opt)
            loss_log.append((step, loss))
            step += 1
    out.stage = "negative"
    return TrainResult(checkpoint=out, loss_log=loss_log)
