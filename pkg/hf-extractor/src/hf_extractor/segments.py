"""Sentence-aligned segment sampling.

A segment is a window of exactly L tokens whose first token begins a
sentence under the rule tagged on the sample. Candidates are every
sentence start in every document with at least L tokens of tail;
build_segments draws n of them without replacement, deterministically in
the seed, and assigns sample ids in (document, offset) order so that the
output file is canonical for a given (corpus, tokenizer, L, ell, n, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import BOUNDARY_METHOD, Document, sentence_starts
from .errors import InputError, InsufficientCorpus
from .models import load_tokenizer

__all__ = [
    "SegmentSample",
    "build_segments",
    "eligible_spans",
    "read_segments",
    "write_segments",
]

# tokenizers average well under this many characters per token; slicing the
# candidate tail here bounds encode() cost without affecting the first L ids
_CHARS_PER_TOKEN_CAP = 16


@dataclass
class SegmentSample:
    """One sampled window: x is tokens 1..ell, y is tokens ell+1..L."""

    sample_id: str
    doc_id: str
    char_start: int
    text: str
    token_ids: list[int]
    ell: int
    L: int
    tokenizer: str
    boundary_method: str

    def check(self) -> list[str]:
        """Return violation messages (empty when well-formed)."""
        problems = []
        if len(self.token_ids) != self.L:
            problems.append(f"token_ids length {len(self.token_ids)} != L {self.L}")
        if not (0 <= self.ell < self.L):
            problems.append(f"need 0 <= ell < L, got ell={self.ell} L={self.L}")
        if any((not isinstance(t, int)) or t < 0 for t in self.token_ids):
            problems.append("token_ids must be non-negative integers")
        if self.char_start < 0:
            problems.append(f"negative char_start {self.char_start}")
        return problems

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "doc_id": self.doc_id,
                "char_start": self.char_start,
                "text": self.text,
                "token_ids": self.token_ids,
                "ell": self.ell,
                "L": self.L,
                "tokenizer": self.tokenizer,
                "boundary_method": self.boundary_method,
            },
            separators=(", ", ": "),
        )

    @classmethod
    def from_obj(cls, obj: dict) -> "SegmentSample":
        def need(name):
            if name not in obj:
                raise InputError(f"segment missing field {name!r}")
            return obj[name]

        token_ids = need("token_ids")
        if not isinstance(token_ids, list):
            raise InputError("token_ids must be an array")
        try:
            return cls(
                sample_id=str(need("sample_id")),
                doc_id=str(need("doc_id")),
                char_start=int(need("char_start")),
                text=str(need("text")),
                token_ids=token_ids,
                ell=int(need("ell")),
                L=int(need("L")),
                tokenizer=str(need("tokenizer")),
                boundary_method=str(need("boundary_method")),
            )
        except (TypeError, ValueError) as exc:
            raise InputError(f"malformed segment field: {exc}") from exc


def eligible_spans(corpus: list[Document], tokenizer, L: int) -> list[tuple[int, int, list[int]]]:
    """All (doc_index, char_start, first L token ids) sentence-start spans."""
    spans = []
    for di, doc in enumerate(corpus):
        for start in sentence_starts(doc.text):
            tail = doc.text[start : start + _CHARS_PER_TOKEN_CAP * L]
            ids = tokenizer.encode(tail)
            if len(ids) >= L:
                spans.append((di, start, ids[:L]))
    return spans


def build_segments(
    corpus: list[Document],
    tokenizer_id: str,
    L: int,
    ell: int,
    n: int,
    seed: int,
) -> list[SegmentSample]:
    """Draw n sentence-aligned L-token segments without replacement.

    Deterministic in the seed. Raises InsufficientCorpus when the corpus
    has fewer than n eligible spans.
    """
    if L < 1:
        raise InputError(f"L must be positive, got {L}")
    if not (0 <= ell < L):
        raise InputError(f"need 0 <= ell < L, got ell={ell} L={L}")
    if n < 1:
        raise InputError(f"n must be positive, got {n}")
    tokenizer = load_tokenizer(tokenizer_id)
    spans = eligible_spans(corpus, tokenizer, L)
    if len(spans) < n:
        raise InsufficientCorpus(f"corpus has {len(spans)} eligible spans, need {n}")
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(spans), size=n, replace=False).tolist())
    samples = []
    for i, k in enumerate(picked):
        di, start, ids = spans[k]
        samples.append(
            SegmentSample(
                sample_id=f"seg{i:05d}",
                doc_id=corpus[di].doc_id,
                char_start=start,
                text=tokenizer.decode(ids),
                token_ids=ids,
                ell=ell,
                L=L,
                tokenizer=tokenizer_id,
                boundary_method=BOUNDARY_METHOD,
            )
        )
    return samples


def write_segments(samples: list[SegmentSample], path: str | Path) -> None:
    """Write segments as JSONL, sorted by sample_id."""
    ordered = sorted(samples, key=lambda s: s.sample_id)
    with open(path, "w", encoding="utf-8") as f:
        for s in ordered:
            f.write(s.to_json())
            f.write("\n")


def read_segments(path: str | Path) -> list[SegmentSample]:
    """Parse a segment file; any malformed line raises InputError."""
    samples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            sample = SegmentSample.from_obj(obj)
            problems = sample.check()
            if problems:
                raise InputError(f"{path}: line {lineno}: {problems[0]}")
            samples.append(sample)
    if not samples:
        raise InputError(f"{path}: no segments")
    return samples
