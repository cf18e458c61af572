"""Segment sampling and log-probability extraction for causal language models.

The package has two halves. `segments` samples fixed-length, sentence-aligned
token windows from a text corpus; `extract` scores those windows with a causal
LM under one of three roles (conditional, marginal, shuffled_conditional) and
writes the JSONL log-prob record schema that downstream bipartite estimators
consume. Models and tokenizers are resolved through a registry id string, with
builtin offline entries so the pipeline runs without hub access.
"""

__version__ = "0.1.0"

from .corpus import BOUNDARY_METHOD, Document, bundled_corpus_path, read_corpus, sentence_starts
from .errors import (
    ComputationError,
    ExtractorError,
    InputError,
    InsufficientCorpus,
    ModelLoadFailure,
    OutOfMemory,
)
from .extract import ROLES, extract, read_manifest, write_records
from .models import ByteTokenizer, ModelBundle, load_model, load_tokenizer
from .segments import SegmentSample, build_segments, read_segments, write_segments

__all__ = [
    "BOUNDARY_METHOD",
    "ByteTokenizer",
    "ComputationError",
    "Document",
    "ExtractorError",
    "InputError",
    "InsufficientCorpus",
    "ModelBundle",
    "ModelLoadFailure",
    "OutOfMemory",
    "ROLES",
    "SegmentSample",
    "build_segments",
    "bundled_corpus_path",
    "extract",
    "load_model",
    "load_tokenizer",
    "read_corpus",
    "read_manifest",
    "read_segments",
    "sentence_starts",
    "write_records",
    "write_segments",
]
