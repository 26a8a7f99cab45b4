"""Mention datasets: loading, preprocessing, and input rendering.

A mention example is a text span with left/right context and a gold
identifier set. Preprocessing lowercases, expands abbreviations through a
user-supplied dictionary (whole-word, longest key first), and collapses
whitespace. Rendering produces the encoder token sequence
[BOS] left [ST] mention [ET] right [EOS] and the decoder prompt
[BOS] mention " is".
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import MentionFormatError
from .kb import KnowledgeBase, normalize_name
from .vocab import Vocab


@dataclass(frozen=True)
class MentionExample:
    left_context: str
    mention: str
    right_context: str
    gold_ids: frozenset[str]
    fold: int | None = None
    # Optional explicit generation targets (KB names). Set by the KB-derived
    # synthetic data generator, where the target is chosen per template rather
    # than by mention similarity. Human-annotated files normally omit it.
    targets: tuple[str, ...] | None = None


@dataclass(frozen=True)
class EncodedInput:
    """Token ids for the encoder and the decoder prompt prefix."""

    encoder_tokens: tuple[int, ...]
    prompt_tokens: tuple[int, ...]


def load_mentions(path: str | Path) -> list[MentionExample]:
    """Load a line-delimited JSON mention file, preserving file order.

    Each line: {"left": str?, "mention": str, "right": str?,
    "gold_ids": [str, ...], "fold": int?, "targets": [str, ...]?}.
    """
    out: list[MentionExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise MentionFormatError(f"{path}: line {lineno}: invalid JSON ({e})") from e
            if not isinstance(rec, dict):
                raise MentionFormatError(f"{path}: line {lineno}: record must be an object")
            mention = rec.get("mention")
            if not isinstance(mention, str) or not mention.strip():
                raise MentionFormatError(f"{path}: line {lineno}: missing or empty 'mention'")
            gold = rec.get("gold_ids")
            if not isinstance(gold, list) or not gold or not all(isinstance(g, str) for g in gold):
                raise MentionFormatError(f"{path}: line {lineno}: 'gold_ids' must be a non-empty list of strings")
            fold = rec.get("fold")
            if fold is not None and not isinstance(fold, int):
                raise MentionFormatError(f"{path}: line {lineno}: 'fold' must be an integer")
            targets = rec.get("targets")
            if targets is not None:
                if not isinstance(targets, list) or not all(isinstance(t, str) for t in targets):
                    raise MentionFormatError(f"{path}: line {lineno}: 'targets' must be a list of strings")
                targets = tuple(targets)
            out.append(
                MentionExample(
                    left_context=rec.get("left", "") or "",
                    mention=mention,
                    right_context=rec.get("right", "") or "",
                    gold_ids=frozenset(gold),
                    fold=fold,
                    targets=targets,
                )
            )
    return out


def load_abbreviations(path: str | Path) -> dict[str, str]:
    """Two-column tab-separated short<TAB>long file; both sides normalized."""
    table: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise MentionFormatError(f"{path}: line {lineno}: expected short<TAB>long")
            short, long = normalize_name(parts[0]), normalize_name(parts[1])
            if not short or not long:
                raise MentionFormatError(f"{path}: line {lineno}: empty abbreviation entry")
            table[short] = long
    return table


def _expand(text: str, abbrev: dict[str, str]) -> str:
    if not abbrev:
        return text
    # Longest key first so overlapping keys resolve deterministically;
    # lookarounds give whole-word semantics even for keys with edge symbols.
    keys = sorted(abbrev, key=lambda k: (-len(k), k))
    pattern = "|".join(f"(?<!\\w){re.escape(k)}(?!\\w)" for k in keys)
    return re.sub(pattern, lambda m: abbrev[m.group(0)], text)


def preprocess(ex: MentionExample, abbrev: dict[str, str] | None = None) -> MentionExample:
    """Lowercase, expand abbreviations whole-word, collapse whitespace."""
    abbrev = abbrev or {}

    def clean(text: str) -> str:
        return normalize_name(_expand(text.lower(), abbrev))

    return replace(
        ex,
        left_context=clean(ex.left_context),
        mention=clean(ex.mention),
        right_context=clean(ex.right_context),
    )


def filter_linkable(
    examples: list[MentionExample], kb: KnowledgeBase
) -> tuple[list[MentionExample], int]:
    """Keep examples whose every gold id exists in the KB."""
    kept = [ex for ex in examples if ex.gold_ids and ex.gold_ids <= kb.concepts.keys()]
    return kept, len(examples) - len(kept)


def render(ex: MentionExample, vocab: Vocab, max_ctx: int = 128) -> EncodedInput:
    """Token sequences for one preprocessed example.

    Context is clipped to the `max_ctx` characters adjacent to the mention:
    the tail of the left context and the head of the right context.
    """
    left = ex.left_context[-max_ctx:] if max_ctx > 0 else ""
    right = ex.right_context[:max_ctx] if max_ctx > 0 else ""
    encoder = (
        [vocab.bos_id]
        + vocab.encode_chars(left)
        + [vocab.st_id]
        + vocab.encode_chars(ex.mention)
        + [vocab.et_id]
        + vocab.encode_chars(right)
        + [vocab.eos_id]
    )
    prompt = [vocab.bos_id] + vocab.encode_chars(ex.mention + " is")
    return EncodedInput(encoder_tokens=tuple(encoder), prompt_tokens=tuple(prompt))


def prepare_mentions(
    mentions_path: str | Path,
    kb: KnowledgeBase,
    abbrev_path: str | Path | None = None,
) -> tuple[list[MentionExample], int]:
    """Load -> preprocess -> filter pipeline used by every CLI stage.

    Downstream artifacts refer to examples by index into the returned list,
    so all stages must call this with identical inputs.
    """
    abbrev = load_abbreviations(abbrev_path) if abbrev_path else {}
    examples = [preprocess(ex, abbrev) for ex in load_mentions(mentions_path)]
    return filter_linkable(examples, kb)
