"""Corpus loading and sentence boundary detection.

Plain-text files are read as a single document; JSONL files carry one
{"doc_id": ..., "text": ...} object per line (doc_id optional). Sentence
boundaries follow one deliberately simple rule so that every emitted
segment can be tagged with the convention that produced it: a sentence
starts at an ASCII uppercase letter that follows end punctuation (. ? !)
plus whitespace, or at the first non-whitespace character of a document
when that character is ASCII uppercase. Abbreviations like "Dr. Smith"
therefore count as boundaries; consumers that need a stricter notion can
filter on the tag.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

from .errors import InputError

__all__ = [
    "BOUNDARY_METHOD",
    "Document",
    "bundled_corpus_path",
    "read_corpus",
    "sentence_starts",
]

BOUNDARY_METHOD = "punct-ws-upper"

_BOUNDARY = re.compile(r"[.?!]\s+([A-Z])")


@dataclass(frozen=True)
class Document:
    """One unit of corpus text; segments never cross document edges."""

    doc_id: str
    text: str


def _is_ascii_upper(ch: str) -> bool:
    return "A" <= ch <= "Z"


def sentence_starts(text: str) -> list[int]:
    """Character offsets of sentence starts under the punct-ws-upper rule.

    Returns offsets in increasing order. The document head counts when its
    first non-whitespace character is ASCII uppercase.
    """
    starts = []
    head = len(text) - len(text.lstrip())
    if head < len(text) and _is_ascii_upper(text[head]):
        starts.append(head)
    # the regex cannot match at the head (it needs punctuation before the
    # whitespace run), so the two sources never collide
    starts.extend(m.start(1) for m in _BOUNDARY.finditer(text))
    return starts


def read_corpus(path: str | Path) -> list[Document]:
    """Load a corpus file.

    ``.jsonl`` suffixes parse as one document per line; anything else is
    read whole as a single plain-text document whose id is the file stem.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read corpus {path}: {exc}") from exc
    if path.suffix != ".jsonl":
        return [Document(doc_id=path.stem, text=raw)]

    docs = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
            raise InputError(f"{path}: line {lineno}: expected an object with a string 'text' field")
        doc_id = obj.get("doc_id", f"doc{lineno - 1:05d}")
        docs.append(Document(doc_id=str(doc_id), text=obj["text"]))
    if not docs:
        raise InputError(f"{path}: corpus is empty")
    return docs


def bundled_corpus_path() -> Path:
    """Path of the small plain-text corpus shipped with the package."""
    return Path(str(files(__package__) / "data" / "tiny_corpus.txt"))
