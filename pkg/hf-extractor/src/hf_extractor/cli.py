"""Command line interface.

Two subcommands mirror the two library operations: `segments` samples
sentence-aligned windows from a corpus, `extract` scores a segment file
under one role and writes log-prob records. Both print a one-line JSON
summary to stdout and log errors to stderr. Exit codes: 0 success, 1 a
well-posed run failed while executing, 2 the inputs were unusable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .corpus import read_corpus
from .errors import ComputationError, InputError
from .extract import ROLES, extract, read_manifest, write_records
from .models import BUILTIN_MODEL, BUILTIN_TOKENIZER, load_model
from .segments import build_segments, read_segments, write_segments

log = logging.getLogger("hf_extractor")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hf-extract",
        description="sentence-aligned segment sampling and causal-LM log-prob extraction",
    )
    p.add_argument("--version", action="version", version=f"hf-extract {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("segments", help="sample sentence-aligned segments from a corpus")
    sp.add_argument("--corpus", required=True, help="plain-text or JSONL corpus file")
    sp.add_argument("--tokenizer", default=BUILTIN_TOKENIZER, help="tokenizer id (default: %(default)s)")
    sp.add_argument("--L", type=int, required=True, help="segment length in tokens")
    sp.add_argument("--ell", type=int, required=True, help="split: x is tokens 1..ell, y is ell+1..L")
    sp.add_argument("--n", type=int, required=True, help="number of segments to draw")
    sp.add_argument("--seed", type=int, required=True, help="sampling seed")
    sp.add_argument("--out", required=True, help="segment JSONL output path")

    ep = sub.add_parser("extract", help="score segments with a causal LM and emit log-prob records")
    ep.add_argument("--role", required=True, choices=ROLES)
    ep.add_argument("--segments", required=True, help="segment JSONL file")
    ep.add_argument("--model", default=BUILTIN_MODEL, help="model id (default: %(default)s)")
    ep.add_argument("--manifest", help="shuffle manifest JSON (required for shuffled_conditional)")
    ep.add_argument("--batch-size", type=int, default=8)
    ep.add_argument("--out", required=True, help="record JSONL output path")
    return p


def _cmd_segments(args: argparse.Namespace) -> dict:
    corpus = read_corpus(args.corpus)
    samples = build_segments(corpus, args.tokenizer, args.L, args.ell, args.n, args.seed)
    write_segments(samples, args.out)
    return {"command": "segments", "written": len(samples), "out": args.out}


def _cmd_extract(args: argparse.Namespace) -> dict:
    if args.role == "shuffled_conditional" and not args.manifest:
        raise InputError("shuffled_conditional requires --manifest")
    segments = read_segments(args.segments)
    manifest = read_manifest(args.manifest) if args.manifest else None
    bundle = load_model(args.model)
    records = extract(args.role, segments, bundle, batch_size=args.batch_size, manifest=manifest)
    write_records(records, args.out)
    return {"command": "extract", "role": args.role, "written": len(records), "out": args.out}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        summary = _cmd_segments(args) if args.command == "segments" else _cmd_extract(args)
    except InputError as exc:
        log.error("%s", exc)
        return 2
    except ComputationError as exc:
        log.error("%s", exc)
        return 1
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
