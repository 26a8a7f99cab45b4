"""Artifact headers, digests, and canonical JSON lines."""

from __future__ import annotations

import hashlib
import json

import pytest

from neglink import __version__
from neglink.artifacts import canonical_json, make_header, read_jsonl, sha256_file, write_jsonl
from neglink.errors import FormatError


def test_sha256_file_matches_hashlib(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"some bytes\x00\xff")
    assert sha256_file(p) == hashlib.sha256(b"some bytes\x00\xff").hexdigest()


def test_canonical_json_is_sorted_and_compact():
    s = canonical_json({"b": 1, "a": [1.5, None, "x"]})
    assert s == '{"a":[1.5,null,"x"],"b":1}'
    # float serialization must be stable across calls
    assert canonical_json(0.1 + 0.2) == canonical_json(0.30000000000000004)


def test_make_header_contents(tmp_path):
    f = tmp_path / "in.txt"
    f.write_text("data")
    header = make_header(7, {"kb": f})
    assert header["tool"] == "neglink"
    assert header["version"] == __version__
    assert header["seed"] == 7
    assert header["inputs"]["kb"] == sha256_file(f)


def test_write_read_round_trip(tmp_path):
    path = tmp_path / "a.jsonl"
    header = {"tool": "neglink", "seed": 0}
    records = [{"x": 1}, {"y": [2, 3]}]
    write_jsonl(path, header, iter(records))
    got_header, got_records = read_jsonl(path)
    assert got_header == header
    assert got_records == records


def test_write_is_byte_deterministic(tmp_path):
    p1, p2 = tmp_path / "1.jsonl", tmp_path / "2.jsonl"
    header = {"seed": 1}
    records = [{"b": 2, "a": 1}]
    write_jsonl(p1, header, records)
    write_jsonl(p2, header, records)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().splitlines()[1] == '{"a":1,"b":2}'


def test_read_requires_header(tmp_path):
    p = tmp_path / "no_header.jsonl"
    p.write_text(json.dumps({"x": 1}) + "\n")
    with pytest.raises(FormatError):
        read_jsonl(p)
    header, records = read_jsonl(p, require_header=False)
    assert header is None
    assert records == [{"x": 1}]


def test_read_rejects_bad_json(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"header":{}}\n{oops\n')
    with pytest.raises(FormatError) as err:
        read_jsonl(p)
    assert "line 2" in str(err.value)
