"""Synthetic confusable-entity benchmark generator.

Concepts come in pairs that share a made-up word stem: concept A of a pair
carries names like "brivalin", "brivaline", "brivalinum" and its partner B
carries "brivalol", "brivalolex", "brivaloside". Names of paired concepts
therefore overlap heavily in character trigrams, which is the regime where
surface copying fails and context has to decide.

Mentions come in three kinds:
  easy     the mention is one of the gold concept's names verbatim;
  variant  the mention is a gold name with a small character distortion;
  ambig    the mention is a name of the partner concept, while the context
           words still belong to the gold concept's side, so the surface
           form actively points at the wrong entity.

Context cue words are drawn from two disjoint global word lists, one per
pair side, making the side recoverable from context alone. A-side concepts
carry definitions, B-side concepts do not, so both synthetic pre-training
templates find material on this KB.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"
SUFFIXES_A = ("in", "ine", "inum")
SUFFIXES_B = ("ol", "olex", "oside")
CTX_A = ("chronic", "relapse", "episode", "screening", "inpatient", "followup", "pediatric", "acute")
CTX_B = ("assay", "titration", "serum", "dosage", "infusion", "tablet", "solvent", "vial")


@dataclass
class ToyBenchmark:
    concepts: list[dict]
    train: list[dict]
    test: list[dict]


def _stem(rng: np.random.Generator, n_syllables: int) -> str:
    return "".join(
        CONSONANTS[rng.integers(len(CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))]
        for _ in range(n_syllables)
    )


def _distort(name: str, rng: np.random.Generator) -> str:
    kind = rng.integers(3)
    if kind == 0:
        return name + name[-1]  # doubled final letter
    if kind == 1 and len(name) > 4:
        return name[:-1]  # clipped final letter
    pos = int(rng.integers(1, len(name) - 1))
    return name[:pos] + ("e" if name[pos] != "e" else "a") + name[pos + 1 :]


def _context(rng: np.random.Generator, words: tuple[str, ...]) -> tuple[str, str]:
    picks = [words[rng.integers(len(words))] for _ in range(3)]
    return f"{picks[0]} {picks[1]} case with", f"during {picks[2]} review"


def _mention_record(rng, concept, partner, kind: str) -> dict:
    words = CTX_A if concept["id"].startswith("A") else CTX_B
    left, right = _context(rng, words)
    if kind == "easy":
        mention = concept["names"][rng.integers(len(concept["names"]))]
    elif kind == "variant":
        mention = _distort(concept["names"][rng.integers(len(concept["names"]))], rng)
    elif kind == "ambig":
        mention = partner["names"][rng.integers(len(partner["names"]))]
    else:
        raise ValueError(f"unknown mention kind {kind!r}")
    return {"left": left, "mention": mention, "right": right, "gold_ids": [concept["id"]]}


def gen_benchmark(
    n_pairs: int = 100,
    n_train: int = 800,
    n_test: int = 300,
    seed: int = 318,
    train_mix: tuple[float, float, float] = (0.4, 0.3, 0.3),
    test_mix: tuple[float, float, float] = (0.45, 0.15, 0.4),
) -> ToyBenchmark:
    """Deterministic KB plus train/test mention sets.

    The mixes give the fractions of easy/variant/ambig mentions.
    """
    rng = np.random.default_rng(seed)
    concepts = []
    stems: set[str] = set()
    for i in range(n_pairs):
        while True:
            stem = _stem(rng, int(rng.integers(3, 5)))
            if stem not in stems:
                stems.add(stem)
                break
        side_a = {
            "id": f"A{i:03d}",
            "names": [stem + s for s in SUFFIXES_A],
            "definition": f"a {CTX_A[i % len(CTX_A)]} condition of the {stem} group",
        }
        side_b = {"id": f"B{i:03d}", "names": [stem + s for s in SUFFIXES_B]}
        concepts.extend([side_a, side_b])

    def sample_mentions(count: int, mix: tuple[float, float, float]) -> list[dict]:
        kinds = ["easy"] * round(count * mix[0]) + ["variant"] * round(count * mix[1])
        kinds += ["ambig"] * (count - len(kinds))
        out = []
        for kind in kinds:
            pair = int(rng.integers(n_pairs))
            flip = int(rng.integers(2))
            concept = concepts[2 * pair + flip]
            partner = concepts[2 * pair + 1 - flip]
            out.append(_mention_record(rng, concept, partner, kind))
        return out

    return ToyBenchmark(
        concepts=concepts,
        train=sample_mentions(n_train, train_mix),
        test=sample_mentions(n_test, test_mix),
    )


def write_benchmark(bench: ToyBenchmark, outdir) -> None:
    import json
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "kb.jsonl", "w", encoding="utf-8") as fh:
        for c in bench.concepts:
            fh.write(json.dumps(c, sort_keys=True) + "\n")
    for name, records in (("train.jsonl", bench.train), ("test.jsonl", bench.test)):
        with open(outdir / name, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
