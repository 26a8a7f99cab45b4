"""Finite-difference verification of every training loss.

For each loss (smoothed cross-entropy plus the four preference losses) the
suite samples random parameter coordinates, perturbs them by ±h, and
compares the central difference quotient against the analytic gradient at
relative error |analytic - fd| / max(1, |analytic|). The fixture is a tiny
model over a fixed micro-corpus; seeds vary the parameter draw and the
sampled coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .corpus import MentionExample, render
from .optim import OptimizerConfig
from .train_negative import LOSS_KINDS, PreferenceConfig, PreferenceTriplet, preference_loss_and_grads
from .train_positive import PositiveInstance, ce_loss_and_grads
from .vocab import Vocab

ALL_LOSSES = ("ce",) + LOSS_KINDS


@dataclass(frozen=True)
class LossCheck:
    loss_kind: str
    seed: int
    max_rel_err: float
    ok: bool


@dataclass
class GradcheckReport:
    checks: list[LossCheck]
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)


def _fixture(seed: int):
    texts = ["abac", "abad", "bacab", "dabac", "x y z", "abacs is"]
    vocab = Vocab.from_texts(texts)
    ckpt = model.init_checkpoint(vocab, model.ModelConfig(hidden_dim=8, seed=seed))
    ref = model.init_checkpoint(vocab, model.ModelConfig(hidden_dim=8, seed=seed + 1009))
    ex1 = MentionExample(left_context="x y", mention="abacs", right_context="z", gold_ids=frozenset({"C1"}))
    ex2 = MentionExample(left_context="", mention="bacab", right_context="x", gold_ids=frozenset({"C2"}))
    enc1, enc2 = render(ex1, vocab), render(ex2, vocab)

    def toks(name: str) -> tuple[int, ...]:
        return tuple(vocab.encode_chars(name)) + (vocab.eos_id,)

    instances = [
        PositiveInstance(input=enc1, target=toks("abac"), target_name="abac"),
        PositiveInstance(input=enc2, target=toks("bacab"), target_name="bacab"),
    ]
    triplets = [
        PreferenceTriplet(input=enc1, preferred="abac", dispreferred="abad"),
        PreferenceTriplet(input=enc2, preferred="bacab", dispreferred="dabac"),
    ]
    return ckpt, ref, instances, triplets


def _loss_fn(kind: str, ckpt, ref, instances, triplets):
    if kind == "ce":
        return lambda want: ce_loss_and_grads(ckpt, instances, smoothing=0.1)
    cfg = PreferenceConfig(
        loss_kind=kind,
        optimizer=OptimizerConfig(learning_rate=0.0, steps=1, batch_size=2),
    )
    return lambda want: preference_loss_and_grads(ckpt, ref, triplets, cfg, want_grads=want)


def check_loss(kind: str, seed: int, n_coords: int = 20, h: float = 1e-5, tol: float = 1e-4) -> LossCheck:
    ckpt, ref, instances, triplets = _fixture(seed)
    fn = _loss_fn(kind, ckpt, ref, instances, triplets)
    _, grads = fn(True)
    rng = np.random.default_rng(seed * 7919 + 13)
    names = sorted(ckpt.params)
    worst = 0.0
    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        arr = ckpt.params[name]
        flat = int(rng.integers(arr.size))
        idx = np.unravel_index(flat, arr.shape)
        orig = arr[idx]
        arr[idx] = orig + h
        plus, _ = fn(False)
        arr[idx] = orig - h
        minus, _ = fn(False)
        arr[idx] = orig
        fd = (plus - minus) / (2.0 * h)
        analytic = float(grads[name][idx])
        rel = abs(analytic - fd) / max(1.0, abs(analytic))
        worst = max(worst, rel)
    return LossCheck(loss_kind=kind, seed=seed, max_rel_err=worst, ok=worst <= tol)


def run_gradcheck(
    seeds=(0, 1, 2), n_coords: int = 20, h: float = 1e-5, tol: float = 1e-4
) -> GradcheckReport:
    checks = [check_loss(kind, seed, n_coords, h, tol) for kind in ALL_LOSSES for seed in seeds]
    return GradcheckReport(checks=checks, tol=tol)
