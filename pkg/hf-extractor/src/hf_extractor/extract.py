"""Log-probability extraction over sampled segments.

Each role scores the y half (positions ell+1..L) of every segment:

    conditional          feed BOS + x + y, score y given its true prefix
    marginal             feed BOS + y, score y with no x at all
    shuffled_conditional feed BOS + x_s + y_p where p is s's manifest
                         partner, score the foreign y

Output is the JSONL record schema consumed by downstream estimators: one
object per line with schema_version 1, sample_id, role, ell, L, token_ids
(the scored y tokens), logprobs in natural-log units with exact zeros
written as the string "-inf", and partner_id on shuffled records only.
Files are sorted by sample_id.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from .errors import InputError
from .models import ModelBundle
from .segments import SegmentSample

__all__ = ["ROLES", "extract", "read_manifest", "write_records"]

ROLES = ("conditional", "marginal", "shuffled_conditional")

SCHEMA_VERSION = 1


def read_manifest(path: str | Path) -> dict[str, str]:
    """Load a shuffle manifest, returning the sample -> partner map.

    The file is a JSON object with a "pairs" array of [sample_id,
    partner_id] entries; fixed points and repeated sample ids are
    rejected.
    """
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    pairs = obj.get("pairs") if isinstance(obj, dict) else None
    if not isinstance(pairs, list):
        raise InputError(f"{path}: manifest needs a 'pairs' array")
    mapping: dict[str, str] = {}
    for entry in pairs:
        if not (isinstance(entry, list) and len(entry) == 2):
            raise InputError(f"{path}: each pair must be [sample_id, partner_id]")
        sid, pid = str(entry[0]), str(entry[1])
        if sid == pid:
            raise InputError(f"{path}: fixed point: {sid} pairs with itself")
        if sid in mapping:
            raise InputError(f"{path}: repeated sample id {sid}")
        mapping[sid] = pid
    if not mapping:
        raise InputError(f"{path}: manifest has no pairs")
    return mapping


def _uniform_split(segments: list[SegmentSample]) -> tuple[int, int]:
    ells = {s.ell for s in segments}
    lengths = {s.L for s in segments}
    if len(ells) != 1 or len(lengths) != 1:
        raise InputError(f"segments mix splits: ell values {sorted(ells)}, L values {sorted(lengths)}")
    return ells.pop(), lengths.pop()


def extract(
    role: str,
    segments: list[SegmentSample],
    bundle: ModelBundle,
    batch_size: int = 8,
    manifest: dict[str, str] | None = None,
) -> list[dict]:
    """Score every segment under one role; returns record dicts.

    Records come back sorted by sample_id, ready for write_records. The
    shuffled_conditional role requires a manifest covering every segment,
    with every partner present in the segment set.
    """
    if role not in ROLES:
        raise InputError(f"unknown role {role!r}; expected one of {ROLES}")
    if not segments:
        raise InputError("no segments to score")
    ell, L = _uniform_split(segments)
    top = max(max(s.token_ids) for s in segments)
    if top >= bundle.vocab_size:
        raise InputError(
            f"token id {top} is out of range for model {bundle.model_id!r} "
            f"(vocab {bundle.vocab_size})"
        )
    ordered = sorted(segments, key=lambda s: s.sample_id)

    partners: list[SegmentSample] | None = None
    if role == "shuffled_conditional":
        if manifest is None:
            raise InputError("shuffled_conditional requires a shuffle manifest")
        by_id = {s.sample_id: s for s in ordered}
        partners = []
        for s in ordered:
            pid = manifest.get(s.sample_id)
            if pid is None:
                raise InputError(f"manifest has no partner for {s.sample_id}")
            partner = by_id.get(pid)
            if partner is None:
                raise InputError(f"partner {pid} of {s.sample_id} is not in the segment set")
            partners.append(partner)
    elif manifest is not None:
        raise InputError(f"a manifest only applies to shuffled_conditional, not {role!r}")

    bos = bundle.bos_id
    if role == "conditional":
        rows = [[bos] + s.token_ids for s in ordered]
    elif role == "marginal":
        rows = [[bos] + s.token_ids[ell:] for s in ordered]
    else:
        rows = [[bos] + s.token_ids[:ell] + p.token_ids[ell:] for s, p in zip(ordered, partners)]

    scores = bundle.score_rows(rows, batch_size=batch_size)
    # row index j scores input position j+1; global token t sits at input
    # index t, so the y half (tokens ell+1..L) is columns ell..L-1 for the
    # full rows and everything for the marginal rows
    keep = scores if role == "marginal" else scores[:, ell:]

    records = []
    for i, s in enumerate(ordered):
        y_ids = (partners[i] if role == "shuffled_conditional" else s).token_ids[ell:]
        rec = {
            "schema_version": SCHEMA_VERSION,
            "sample_id": s.sample_id,
            "role": role,
            "ell": ell,
            "L": L,
            "token_ids": y_ids,
            "logprobs": [float(v) for v in keep[i]],
        }
        if role == "shuffled_conditional":
            rec["partner_id"] = partners[i].sample_id
        records.append(rec)
    return records


def write_records(records: list[dict], path: str | Path) -> None:
    """Write records as canonical JSONL (sorted by sample_id)."""
    ordered = sorted(records, key=lambda r: r["sample_id"])
    with open(path, "w", encoding="utf-8") as f:
        for rec in ordered:
            obj = dict(rec)
            obj["logprobs"] = ["-inf" if lp == -math.inf else lp for lp in rec["logprobs"]]
            f.write(json.dumps(obj, separators=(", ", ": ")))
            f.write("\n")
