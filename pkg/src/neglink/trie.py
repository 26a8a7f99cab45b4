"""Prefix tree over tokenized KB names, used to mask decoder outputs.

Every root-to-terminal path spells exactly one KB name. During decoding
the set of legal next tokens at a prefix is the node's children, plus EOS
when the node is terminal, so any sequence the decoder can finish is a KB
name and every KB name remains reachable.

Serialization: magic b"ATRI", format version u32 LE, u32 metadata length +
UTF-8 JSON metadata, then a preorder node stream. Each node is
[u8 terminal][u32 child count] followed by its children in ascending
token-id order, each as [u32 token id][node]. All integers little-endian.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from .errors import TrieFormatError, VocabError
from .vocab import Vocab

MAGIC = b"ATRI"
FORMAT_VERSION = 1


@dataclass
class TrieNode:
    children: dict[int, "TrieNode"] = field(default_factory=dict)
    terminal: bool = False


@dataclass
class TokenTrie:
    root: TrieNode = field(default_factory=TrieNode)
    size: int = 0  # number of names inserted

    def insert(self, token_ids) -> None:
        node = self.root
        for t in token_ids:
            node = node.children.setdefault(int(t), TrieNode())
        if not node.terminal:
            node.terminal = True
            self.size += 1

    def node_at(self, prefix) -> TrieNode:
        node = self.root
        for t in prefix:
            child = node.children.get(int(t))
            if child is None:
                raise ValueError(f"prefix {tuple(prefix)} is not a path in the trie")
            node = child
        return node

    def contains(self, token_ids) -> bool:
        node = self.root
        for t in token_ids:
            node = node.children.get(int(t))
            if node is None:
                return False
        return node.terminal

    def max_depth(self) -> int:
        """Length of the longest name (token count)."""
        best = 0
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            if node.terminal and depth > best:
                best = depth
            for child in node.children.values():
                stack.append((child, depth + 1))
        return best


def build_trie(names: list[str], vocab: Vocab) -> TokenTrie:
    """Trie over the character tokenizations of `names`."""
    trie = TokenTrie()
    for name in names:
        try:
            ids = vocab.encode_chars(name)
        except VocabError as e:
            raise VocabError(f"name {name!r}: {e}") from None
        trie.insert(ids)
    return trie


def allowed_next(trie: TokenTrie, prefix, eos_id: int) -> list[int]:
    """Legal next token ids after `prefix`, ascending; EOS iff terminal."""
    node = trie.node_at(prefix)
    out = sorted(node.children)
    if node.terminal:
        out.append(eos_id)
    return out


def _write_node(node: TrieNode, chunks: list[bytes]) -> None:
    chunks.append(struct.pack("<BI", 1 if node.terminal else 0, len(node.children)))
    for token_id in sorted(node.children):
        chunks.append(struct.pack("<I", token_id))
        _write_node(node.children[token_id], chunks)


def serialize(trie: TokenTrie, metadata: dict | None = None) -> bytes:
    meta = json.dumps(metadata or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(meta)), meta]
    _write_node(trie.root, chunks)
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise TrieFormatError("truncated trie stream")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def take_bytes(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TrieFormatError("truncated trie stream")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def _read_node(r: _Reader, depth: int = 0) -> tuple[TrieNode, int]:
    if depth > 4096:
        raise TrieFormatError("trie nesting too deep")
    terminal, n_children = r.take("<BI")
    if terminal not in (0, 1):
        raise TrieFormatError(f"bad terminal flag {terminal}")
    node = TrieNode(terminal=bool(terminal))
    count = 1 if node.terminal else 0
    prev = -1
    for _ in range(n_children):
        (token_id,) = r.take("<I")
        if token_id <= prev:
            raise TrieFormatError("child token ids not strictly ascending")
        prev = token_id
        child, child_count = _read_node(r, depth + 1)
        node.children[token_id] = child
        count += child_count
    return node, count


def deserialize(data: bytes) -> TokenTrie:
    r = _Reader(data)
    if r.take_bytes(4) != MAGIC:
        raise TrieFormatError("bad magic bytes, not a trie file")
    (version,) = r.take("<I")
    if version != FORMAT_VERSION:
        raise TrieFormatError(f"unsupported trie format version {version}")
    (meta_len,) = r.take("<I")
    meta = r.take_bytes(meta_len)
    try:
        json.loads(meta.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TrieFormatError(f"bad trie metadata: {e}") from e
    root, size = _read_node(r)
    if r.pos != len(r.data):
        raise TrieFormatError(f"{len(r.data) - r.pos} trailing bytes after node stream")
    return TokenTrie(root=root, size=size)


def save_trie(trie: TokenTrie, path, metadata: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(trie, metadata))


def load_trie(path) -> TokenTrie:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
