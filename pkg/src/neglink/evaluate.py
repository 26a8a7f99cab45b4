"""Accuracy metrics, bootstrap significance, and the two analysis reports.

Rank here always means the 1-based position of the first prediction whose
identifier set intersects the gold set; None when the gold never appears.
The bootstrap test resamples example indices with replacement, computes
the paired Acc@k difference per resample, and runs a two-sided one-sample
t-test on those differences. Zero variance is degenerate for a t-test, so
it is mapped to p=1.0 when the mean difference is zero and p=0.0
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .beam import Prediction, rank_of_gold, sequence_score
from .corpus import MentionExample, render
from .kb import KnowledgeBase
from .model import Checkpoint
from .tfidf import TfIdfIndex, rank_synonyms, similarity
from .train_positive import gold_synonyms

FIVE_BINS = ((0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 0.8), (0.8, 1.0))


@dataclass
class EvalReport:
    acc_at: dict[int, float]
    n: int
    per_example: list[int | None] | None


@dataclass(frozen=True)
class BinRecord:
    lo: float
    hi: float
    count: int
    errors: int
    accuracy: float | None


@dataclass
class BinnedReport:
    bins: list[BinRecord]


@dataclass(frozen=True)
class GapBin:
    lo: float
    hi: float
    count: int
    mean_gap: float | None


@dataclass
class GapReport:
    bins: list[GapBin]


@dataclass(frozen=True)
class BootstrapResult:
    p_value: float
    mean_diff: float


def ranks_of(prediction_lists: list[list[Prediction]], gold_sets: list[frozenset[str]]) -> list[int | None]:
    if len(prediction_lists) != len(gold_sets):
        raise ValueError("prediction and gold lists differ in length")
    return [rank_of_gold(preds, gold) for preds, gold in zip(prediction_lists, gold_sets)]


def acc_from_ranks(ranks: list[int | None], k: int) -> float:
    if not ranks:
        raise ValueError("no examples to score")
    return sum(1 for r in ranks if r is not None and r <= k) / len(ranks)


def acc_at_k(prediction_lists: list[list[Prediction]], gold_sets, k: int) -> float:
    return acc_from_ranks(ranks_of(prediction_lists, list(gold_sets)), k)


def evaluate(prediction_lists, gold_sets, ks=(1, 5)) -> EvalReport:
    ranks = ranks_of(prediction_lists, list(gold_sets))
    return EvalReport(
        acc_at={k: acc_from_ranks(ranks, k) for k in ks},
        n=len(ranks),
        per_example=ranks,
    )


def bootstrap_paired_test(
    ranks_a: list[int | None],
    ranks_b: list[int | None],
    k: int,
    resamples: int = 100,
    seed: int = 0,
) -> BootstrapResult:
    """Resampled paired Acc@k comparison of two systems on the same examples."""
    if len(ranks_a) != len(ranks_b):
        raise ValueError("rank lists differ in length")
    if resamples < 2:
        raise ValueError("resamples must be >= 2")
    n = len(ranks_a)
    if n == 0:
        raise ValueError("no examples to compare")
    hit_a = np.array([r is not None and r <= k for r in ranks_a], dtype=np.float64)
    hit_b = np.array([r is not None and r <= k for r in ranks_b], dtype=np.float64)
    rng = np.random.default_rng(seed)
    diffs = np.empty(resamples)
    for i in range(resamples):
        idx = rng.integers(0, n, size=n)
        diffs[i] = hit_a[idx].mean() - hit_b[idx].mean()
    mean = float(diffs.mean())
    if float(diffs.std(ddof=1)) == 0.0:
        return BootstrapResult(p_value=1.0 if mean == 0.0 else 0.0, mean_diff=mean)
    p = float(stats.ttest_1samp(diffs, 0.0).pvalue)
    return BootstrapResult(p_value=p, mean_diff=mean)


def _five_bin_index(s: float) -> int:
    # Left-closed, right-open bins; similarity 1.0 folds into the top bin.
    return min(int(s / 0.2), 4)


def binned_error_report(
    examples: list[MentionExample],
    prediction_lists: list[list[Prediction]],
    kb: KnowledgeBase,
    idx: TfIdfIndex,
) -> BinnedReport:
    """Acc@1 stratified by the mention's best gold-synonym similarity."""
    if len(examples) != len(prediction_lists):
        raise ValueError("examples and predictions differ in length")
    counts = [0] * 5
    errors = [0] * 5
    for ex, preds in zip(examples, prediction_lists):
        best = max(similarity(ex.mention, name, idx) for name in gold_synonyms(ex, kb))
        b = _five_bin_index(best)
        counts[b] += 1
        if rank_of_gold(preds, ex.gold_ids) != 1:
            errors[b] += 1
    bins = [
        BinRecord(
            lo=lo, hi=hi, count=c, errors=e,
            accuracy=None if c == 0 else (c - e) / c,
        )
        for (lo, hi), c, e in zip(FIVE_BINS, counts, errors)
    ]
    return BinnedReport(bins=bins)


def logprob_gap_report(
    ckpt: Checkpoint,
    examples: list[MentionExample],
    prediction_lists: list[list[Prediction]],
    kb: KnowledgeBase,
    idx: TfIdfIndex,
    n_bins: int = 10,
    max_ctx: int = 128,
) -> GapReport:
    """Mean (positive score - negative score) binned by mention-negative similarity.

    The positive score is the best-ranked correct prediction's score; when
    no correct name appears in the list, the most mention-similar gold
    synonym is scored directly so every negative still contributes a pair.
    Scores on both sides include the shared prompt log-prob, so the gap is
    a pure entity log-prob difference.
    """
    if len(examples) != len(prediction_lists):
        raise ValueError("examples and predictions differ in length")
    sums = [0.0] * n_bins
    counts = [0] * n_bins
    for ex, preds in zip(examples, prediction_lists):
        negatives = [p for p in preds if not (p.ids & ex.gold_ids)]
        if not negatives:
            continue
        pos_score = None
        for p in preds:
            if p.ids & ex.gold_ids:
                pos_score = p.score
                break
        if pos_score is None:
            best = rank_synonyms(ex.mention, gold_synonyms(ex, kb), 1, idx)[0]
            enc = render(ex, ckpt.vocab, max_ctx=max_ctx)
            entity = ckpt.vocab.encode_chars(best) + [ckpt.vocab.eos_id]
            pos_score = sequence_score(ckpt, enc, entity)
        for neg in negatives:
            s = similarity(ex.mention, neg.name, idx)
            b = min(int(s * n_bins), n_bins - 1)
            sums[b] += pos_score - neg.score
            counts[b] += 1
    bins = [
        GapBin(
            lo=i / n_bins, hi=(i + 1) / n_bins, count=c,
            mean_gap=None if c == 0 else sums[i] / c,
        )
        for i, c in enumerate(counts)
    ]
    return GapReport(bins=bins)


def kfold_aggregate(reports: list[EvalReport]) -> EvalReport:
    """Unweighted mean of per-fold accuracies; per-example ranks do not carry over."""
    if not reports:
        raise ValueError("no fold reports")
    keys = set(reports[0].acc_at)
    for r in reports[1:]:
        if set(r.acc_at) != keys:
            raise ValueError("fold reports disagree on which k values were measured")
    acc = {k: sum(r.acc_at[k] for r in reports) / len(reports) for k in sorted(keys)}
    return EvalReport(acc_at=acc, n=sum(r.n for r in reports), per_example=None)
