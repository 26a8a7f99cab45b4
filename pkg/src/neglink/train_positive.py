"""Stage-1 training: generate TF-IDF-selected gold synonyms.

Each mention contributes one instance per selected synonym (top-k by
trigram similarity to the mention, over the union of all its gold
concepts' names). The objective is label-smoothed cross-entropy over the
entity tokens, teacher-forced behind the prompt. Per-instance loss is the
mean over that instance's target positions; batch loss is the mean over
instances, so short and long names weigh equally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model, optim
from .corpus import EncodedInput, MentionExample, render
from .kb import KnowledgeBase
from .model import Checkpoint, ForwardCache
from .tfidf import TfIdfIndex, rank_synonyms
from .vocab import Vocab


@dataclass(frozen=True)
class PositiveInstance:
    input: EncodedInput
    target: tuple[int, ...]  # synonym tokens ending in EOS
    target_name: str


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_log: list[tuple[int, float]]  # (step, batch loss)


def gold_synonyms(ex: MentionExample, kb: KnowledgeBase) -> list[str]:
    """Union of the names of every gold concept, deduplicated, sorted."""
    out: set[str] = set()
    for cid in ex.gold_ids:
        out.update(kb.concepts[cid].names)
    return sorted(out)


def build_positive_set(
    examples: list[MentionExample],
    kb: KnowledgeBase,
    idx: TfIdfIndex,
    vocab: Vocab,
    k: int = 3,
    max_ctx: int = 128,
) -> list[PositiveInstance]:
    """One instance per (example, selected synonym), in rank order.

    Examples carrying explicit targets (synthetic pre-training data) use
    those verbatim instead of similarity-ranked gold synonyms.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    instances: list[PositiveInstance] = []
    for ex in examples:
        enc = render(ex, vocab, max_ctx=max_ctx)
        if ex.targets is not None:
            targets = list(ex.targets)[:k]
        else:
            targets = rank_synonyms(ex.mention, gold_synonyms(ex, kb), k, idx)
        for name in targets:
            tokens = tuple(vocab.encode_chars(name)) + (vocab.eos_id,)
            instances.append(PositiveInstance(input=enc, target=tokens, target_name=name))
    return instances


def _batch_arrays(instances: list[PositiveInstance], vocab: Vocab):
    pad = vocab.pad_id
    enc_tokens, enc_mask = model.pad_batch([list(i.input.encoder_tokens) for i in instances], pad)
    dec_tokens, dec_mask, targets, target_mask = model.build_decoder_batch(
        [list(i.input.prompt_tokens) for i in instances],
        [list(i.target) for i in instances],
        pad,
    )
    return enc_tokens, enc_mask, dec_tokens, dec_mask, targets, target_mask


def ce_from_cache(
    cache: ForwardCache, targets: np.ndarray, target_mask: np.ndarray, smoothing: float
) -> tuple[float, np.ndarray]:
    """(batch loss, dloss/dlogits) for smoothed cross-entropy.

    Loss = mean over instances of (mean over target positions of
    -sum_v q_v log p_v), q = (1 - eps) * onehot + eps / V.
    """
    B, T, V = cache.logits.shape
    logp = model.log_softmax(cache.logits)
    picked = np.take_along_axis(logp, targets[:, :, None], axis=2)[:, :, 0]
    lengths = target_mask.sum(axis=1)
    # -sum_v q_v log p_v = -(1-eps) log p_target - eps/V * sum_v log p_v
    per_pos = -(1.0 - smoothing) * picked - (smoothing / V) * logp.sum(axis=2)
    per_seq = (per_pos * target_mask).sum(axis=1) / lengths
    loss = float(per_seq.mean())

    probs = cache.softmax_probs()
    dlogits = probs - smoothing / V
    np.put_along_axis(
        dlogits,
        targets[:, :, None],
        np.take_along_axis(dlogits, targets[:, :, None], axis=2) - (1.0 - smoothing),
        axis=2,
    )
    dlogits *= (target_mask / lengths[:, None] / B)[:, :, None]
    return loss, dlogits


def ce_loss(ckpt: Checkpoint, instance: PositiveInstance, smoothing: float) -> float:
    """Label-smoothed cross-entropy of one instance (mean over positions)."""
    if not 0 <= smoothing < 1:
        raise ValueError("smoothing must lie in [0, 1)")
    enc_t, enc_m, dec_t, dec_m, tg, tm = _batch_arrays([instance], ckpt.vocab)
    cache = model.forward_teacher(ckpt, enc_t, enc_m, dec_t, dec_m)
    loss, _ = ce_from_cache(cache, tg, tm, smoothing)
    return model.check_finite_loss(loss)


def ce_loss_and_grads(
    ckpt: Checkpoint, instances: list[PositiveInstance], smoothing: float
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch loss and exact gradients; used by training and gradient checks."""
    enc_t, enc_m, dec_t, dec_m, tg, tm = _batch_arrays(instances, ckpt.vocab)
    cache = model.forward_teacher(ckpt, enc_t, enc_m, dec_t, dec_m)
    loss, dlogits = ce_from_cache(cache, tg, tm, smoothing)
    grads = model.backward_from_dlogits(ckpt, cache, dlogits)
    return loss, grads


def train(
    ckpt: Checkpoint,
    instances: list[PositiveInstance],
    opt: optim.OptimizerConfig,
    seed: int,
) -> TrainResult:
    """Stage-1 loop; returns a positive-stage checkpoint and the loss curve.

    The input checkpoint is not modified. Data is reshuffled every epoch
    from the seeded generator; the final short batch of an epoch is kept.
    """
    if not instances:
        raise ValueError("no training instances")
    out = model.copy_checkpoint(ckpt)
    out.opt_state = model.OptimizerState.fresh(out.params)
    rng = np.random.default_rng(seed)
    loss_log: list[tuple[int, float]] = []
    step = 0
    while step < opt.steps:
        order = rng.permutation(len(instances))
        for start in range(0, len(order), opt.batch_size):
            if step >= opt.steps:
                break
            batch = [instances[i] for i in order[start : start + opt.batch_size]]
            loss, grads = ce_loss_and_grads(out, batch, opt.label_smoothing)
            model.check_finite_loss(loss, step_index=step)
            optim.clip_grads(grads, opt.grad_clip)
            optim.adamw_step(out.params, grads, out.opt_state, opt)
            loss_log.append((step, loss))
            step += 1
    out.stage = "positive"
    return TrainResult(checkpoint=out, loss_log=loss_log)
