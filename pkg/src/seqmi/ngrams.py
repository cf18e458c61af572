"""Streaming n-gram counting and token-corpus file formats.

Counting is sharded by document and merged by key union, so any partition of
the corpus yields exactly the sequential result. Two interchangeable corpus
formats are supported: text JSONL (one {"doc_id", "tokens"} object per line)
and the binary NGC1 layout (magic, u32 doc count, then per document a u64
length followed by little-endian u32 ids). A real-valued sibling NGF1 with
f64 rows carries Gaussian sample exports through the same machinery.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .entropy import CountTable
from .errors import (
    EmptyCorpus,
    EmptyResultWarning,
    MalformedDocument,
    SegmentTooShort,
)

__all__ = [
    "TokenCorpus",
    "count_pairs_at_distance",
    "count_segment_leading_pairs",
    "count_unigrams",
    "read_corpus",
    "read_real_corpus",
    "write_corpus_jsonl",
    "write_corpus_ngc1",
    "write_real_corpus",
]

_ID_LIMIT = 1 << 32


@dataclass
class TokenCorpus:
    """A sequence of token-id documents plus an optional provenance tag."""

    documents: list[np.ndarray]
    source: str = ""
    doc_ids: list[str] = field(default_factory=list)
    vocab_bound: int | None = None

    def __post_init__(self):
        if not self.doc_ids:
            self.doc_ids = [f"{i:08d}" for i in range(len(self.documents))]
        if len(self.doc_ids) != len(self.documents):
            raise ValueError("doc_ids and documents length mismatch")
        self.documents = [self._check_doc(d, i) for i, d in enumerate(self.documents)]

    def _check_doc(self, doc, idx: int) -> np.ndarray:
        arr = np.asarray(doc)
        if arr.ndim != 1 or arr.size == 0:
            raise MalformedDocument(f"document {self.doc_ids[idx]} is empty or not 1-D")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(arr == np.floor(arr)):
                raise MalformedDocument(f"document {self.doc_ids[idx]} has non-integer tokens")
            arr = arr.astype(np.int64)
        bound = self.vocab_bound if self.vocab_bound is not None else _ID_LIMIT
        if arr.min() < 0 or arr.max() >= bound:
            raise MalformedDocument(
                f"document {self.doc_ids[idx]} has ids outside [0, {bound})"
            )
        return arr.astype(np.uint32)

    def __len__(self) -> int:
        return len(self.documents)

    def token_count(self) -> int:
        return sum(len(d) for d in self.documents)


def _require_nonempty(corpus: TokenCorpus) -> None:
    if len(corpus) == 0:
        raise EmptyCorpus("corpus contains no documents")


def count_unigrams(corpus: TokenCorpus) -> CountTable:
    """Histogram of single token ids; total equals the corpus token count."""
    _require_nonempty(corpus)
    entries: dict[int, int] = {}
    for doc in corpus.documents:
        keys, counts = np.unique(doc, return_counts=True)
        for k, c in zip(keys.tolist(), counts.tolist()):
            entries[k] = entries.get(k, 0) + c
    return CountTable(entries, "unigram")


def count_pairs_at_distance(corpus: TokenCorpus, d: int) -> CountTable:
    """Histogram of ordered within-document pairs (w_i, w_{i+d}).

    Documents shorter than d+1 contribute nothing; a corpus where no
    document is long enough yields an empty table under an
    EmptyResultWarning rather than an error.
    """
    if d < 1:
        raise ValueError(f"distance must be >= 1, got {d}")
    _require_nonempty(corpus)
    entries: dict[int, int] = {}
    for doc in corpus.documents:
        if len(doc) <= d:
            continue
        packed = (doc[:-d].astype(np.uint64) << np.uint64(32)) | doc[d:].astype(np.uint64)
        keys, counts = np.unique(packed, return_counts=True)
        for k, c in zip(keys.tolist(), counts.tolist()):
            entries[k] = entries.get(k, 0) + c
    if not entries:
        warnings.warn(
            f"no document is longer than d={d}; pair table is empty",
            EmptyResultWarning,
            stacklevel=2,
        )
        return CountTable({}, "pair", total=0)
    return CountTable(entries, "pair")


def count_segment_leading_pairs(segments: Iterable[Sequence[int]]) -> CountTable:
    """Histogram of the first two tokens of each segment; N = segment count."""
    entries: dict[int, int] = {}
    n_segments = 0
    for idx, seg in enumerate(segments):
        if len(seg) < 2:
            raise SegmentTooShort(f"segment {idx} has length {len(seg)} < 2")
        first, second = int(seg[0]), int(seg[1])
        if not (0 <= first < _ID_LIMIT and 0 <= second < _ID_LIMIT):
            raise MalformedDocument(f"segment {idx} leading pair out of 32-bit range")
        key = (first << 32) | second
        entries[key] = entries.get(key, 0) + 1
        n_segments += 1
    if n_segments == 0:
        raise EmptyCorpus("no segments supplied")
    return CountTable(entries, "pair", total=n_segments)


# ----------------------------------------------------------------- file IO ---

_NGC1_MAGIC = b"NGC1"
_NGF1_MAGIC = b"NGF1"


def write_corpus_jsonl(corpus: TokenCorpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc_id, doc in zip(corpus.doc_ids, corpus.documents):
            f.write(json.dumps({"doc_id": doc_id, "tokens": doc.tolist()}))
            f.write("\n")


def write_corpus_ngc1(corpus: TokenCorpus, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(_NGC1_MAGIC)
        f.write(struct.pack("<I", len(corpus.documents)))
        for doc in corpus.documents:
            f.write(struct.pack("<Q", len(doc)))
            f.write(doc.astype("<u4").tobytes())


def _read_jsonl_docs(path: Path) -> Iterator[tuple[str, list[int]]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedDocument(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "tokens" not in obj:
                raise MalformedDocument(f"{path}:{lineno}: missing 'tokens' field")
            yield str(obj.get("doc_id", f"{lineno - 1:08d}")), obj["tokens"]


def read_corpus(path: str | Path, vocab_bound: int | None = None) -> TokenCorpus:
    """Load a corpus from JSONL or NGC1, sniffed by magic bytes."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(4)
    if head == _NGC1_MAGIC:
        return _read_ngc1(path, vocab_bound)
    doc_ids, docs = [], []
    for doc_id, tokens in _read_jsonl_docs(path):
        doc_ids.append(doc_id)
        docs.append(np.asarray(tokens))
    if not docs:
        raise EmptyCorpus(f"{path}: no documents")
    return TokenCorpus(docs, source=str(path), doc_ids=doc_ids, vocab_bound=vocab_bound)


def _read_ngc1(path: Path, vocab_bound: int | None) -> TokenCorpus:
    with open(path, "rb") as f:
        f.read(4)
        (n_docs,) = struct.unpack("<I", f.read(4))
        docs = []
        for _ in range(n_docs):
            raw = f.read(8)
            if len(raw) != 8:
                raise MalformedDocument(f"{path}: truncated document header")
            (length,) = struct.unpack("<Q", raw)
            body = f.read(4 * length)
            if len(body) != 4 * length:
                raise MalformedDocument(f"{path}: truncated document body")
            docs.append(np.frombuffer(body, dtype="<u4").copy())
    if not docs:
        raise EmptyCorpus(f"{path}: no documents")
    # doc_ids synthesized as zero-padded indices in the binary->JSONL direction
    return TokenCorpus(docs, source=str(path), vocab_bound=vocab_bound)


def write_real_corpus(rows: np.ndarray, path: str | Path) -> None:
    """Write real-valued sample rows (n x L) in the NGF1 f64 layout."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("expected a 2-D array of sample rows")
    with open(path, "wb") as f:
        f.write(_NGF1_MAGIC)
        f.write(struct.pack("<I", rows.shape[0]))
        for row in rows:
            f.write(struct.pack("<Q", len(row)))
            f.write(row.astype("<f8").tobytes())


def read_real_corpus(path: str | Path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(4) != _NGF1_MAGIC:
            raise ValueError(f"{path}: bad magic, expected NGF1")
        (n_rows,) = struct.unpack("<I", f.read(4))
        rows = []
        for _ in range(n_rows):
            (length,) = struct.unpack("<Q", f.read(8))
            body = f.read(8 * length)
            if len(body) != 8 * length:
                raise ValueError(f"{path}: truncated row")
            rows.append(np.frombuffer(body, dtype="<f8"))
    if not rows:
        raise ValueError(f"{path}: no rows")
    return np.vstack(rows)
