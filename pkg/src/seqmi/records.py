"""Log-probability record wire format, validation, and shuffle manifests.

The JSONL schema below is the public contract between external model scoring
and the estimators in this package. One object per line, UTF-8:

    {"schema_version": 1, "sample_id": "s000", "role": "conditional",
     "ell": 4, "L": 8, "token_ids": [5, 5, 5, 5],
     "logprobs": [-1.2, -0.3, "-inf", -0.1]}

role is one of conditional (scores y given x), marginal (scores y given the
BOS marker only), shuffled_conditional (scores a partner sample's y given
this sample's x; carries partner_id). token_ids and logprobs both have
length L - ell. Log-probabilities are natural-log, <= 0; exact zeros of
probability are written as the string "-inf". Unknown fields are ignored;
unknown schema_version values are rejected. Canonical files are sorted by
sample_id and use shortest round-trip float formatting, which makes
write(read(file)) byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import (
    FixedPointInShuffle,
    InconsistentSplit,
    RecordSchemaError,
    SampleSetMismatch,
    TooFewSamples,
)

__all__ = [
    "LogProbRecord",
    "ShuffleManifest",
    "ValidationReport",
    "join_for_estimation",
    "make_shuffle_manifest",
    "read_records",
    "validate",
    "write_records",
]

SCHEMA_VERSION = 1
ROLES = ("conditional", "marginal", "shuffled_conditional")


@dataclass
class LogProbRecord:
    """Per-sample, per-position conditional log-probabilities."""

    sample_id: str
    role: str
    ell: int
    L: int
    token_ids: list[int]
    logprobs: list[float]
    partner_id: str | None = None
    schema_version: int = SCHEMA_VERSION

    def check(self) -> list[str]:
        """Return a list of violation messages (empty when well-formed)."""
        problems = []
        if self.schema_version != SCHEMA_VERSION:
            problems.append(f"unknown schema_version {self.schema_version}")
        if self.role not in ROLES:
            problems.append(f"unknown role {self.role!r}")
        if not (0 <= self.ell < self.L):
            problems.append(f"need 0 <= ell < L, got ell={self.ell} L={self.L}")
        expect = self.L - self.ell
        if len(self.token_ids) != expect:
            problems.append(f"token_ids length {len(self.token_ids)} != L-ell {expect}")
        if len(self.logprobs) != expect:
            problems.append(f"logprobs length {len(self.logprobs)} != L-ell {expect}")
        if any((not isinstance(t, int)) or t < 0 for t in self.token_ids):
            problems.append("token_ids must be non-negative integers")
        for lp in self.logprobs:
            if math.isnan(lp):
                problems.append("NaN logprob")
                break
            if lp > 0.0 or lp == math.inf:
                problems.append(f"logprob {lp} > 0")
                break
        if self.role == "shuffled_conditional":
            if not self.partner_id:
                problems.append("shuffled_conditional requires partner_id")
            elif self.partner_id == self.sample_id:
                problems.append("fixed point: partner_id equals sample_id")
        elif self.partner_id is not None:
            problems.append("partner_id is only valid for shuffled_conditional")
        return problems

    def to_json(self) -> str:
        obj = {
            "schema_version": self.schema_version,
            "sample_id": self.sample_id,
            "role": self.role,
            "ell": self.ell,
            "L": self.L,
            "token_ids": self.token_ids,
            "logprobs": ["-inf" if lp == -math.inf else lp for lp in self.logprobs],
        }
        if self.partner_id is not None:
            obj["partner_id"] = self.partner_id
        return json.dumps(obj, separators=(", ", ": "))

    @classmethod
    def from_obj(cls, obj: dict) -> "LogProbRecord":
        def need(name):
            if name not in obj:
                raise RecordSchemaError(f"missing field {name!r}")
            return obj[name]

        logprobs = []
        for lp in need("logprobs"):
            if lp == "-inf":
                logprobs.append(-math.inf)
            elif isinstance(lp, (int, float)) and not isinstance(lp, bool):
                logprobs.append(float(lp))
            else:
                raise RecordSchemaError(f"logprob entry {lp!r} is not a number or '-inf'")
        token_ids = need("token_ids")
        if not isinstance(token_ids, list):
            raise RecordSchemaError("token_ids must be an array")
        try:
            return cls(
                sample_id=str(need("sample_id")),
                role=str(need("role")),
                ell=int(need("ell")),
                L=int(need("L")),
                token_ids=token_ids,
                logprobs=logprobs,
                partner_id=obj.get("partner_id"),
                schema_version=int(need("schema_version")),
            )
        except (TypeError, ValueError) as exc:
            raise RecordSchemaError(f"malformed field: {exc}") from exc


def write_records(records: Iterable[LogProbRecord], path: str | Path) -> None:
    """Write canonical JSONL: records sorted by sample_id."""
    ordered = sorted(records, key=lambda r: r.sample_id)
    with open(path, "w", encoding="utf-8") as f:
        for rec in ordered:
            f.write(rec.to_json())
            f.write("\n")


def _iter_lines(path: str | Path) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if line:
                yield lineno, line


def read_records(path: str | Path, strict: bool = True) -> list[LogProbRecord]:
    """Parse a record file; with strict=True any violation raises."""
    records = []
    for lineno, line in _iter_lines(path):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordSchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        rec = LogProbRecord.from_obj(obj)
        if strict:
            problems = rec.check()
            if problems:
                raise RecordSchemaError(f"{path}:{lineno}: {'; '.join(problems)}")
        records.append(rec)
    return records


@dataclass
class ValidationReport:
    violations: list[tuple[int, str]] = field(default_factory=list)
    role_counts: dict[str, int] = field(default_factory=dict)
    n_records: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [
            f"records: {self.n_records}",
            "roles: " + ", ".join(f"{r}={c}" for r, c in sorted(self.role_counts.items())),
            f"violations: {len(self.violations)}",
        ]
        lines += [f"  line {ln}: {msg}" for ln, msg in self.violations[:50]]
        if len(self.violations) > 50:
            lines.append(f"  ... and {len(self.violations) - 50} more")
        return "\n".join(lines)


def validate(path_or_lines: str | Path | Iterable[str]) -> ValidationReport:
    """Schema-check a record stream; reports violations with line numbers."""
    report = ValidationReport()
    if isinstance(path_or_lines, (str, Path)):
        lines: Iterable[tuple[int, str]] = _iter_lines(path_or_lines)
    else:
        lines = ((i, ln.strip()) for i, ln in enumerate(path_or_lines, start=1) if ln.strip())
    for lineno, line in lines:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            report.violations.append((lineno, f"invalid JSON: {exc}"))
            continue
        try:
            rec = LogProbRecord.from_obj(obj)
        except RecordSchemaError as exc:
            report.violations.append((lineno, str(exc)))
            continue
        report.n_records += 1
        role = rec.role if rec.role in ROLES else "unknown"
        report.role_counts[role] = report.role_counts.get(role, 0) + 1
        for msg in rec.check():
            report.violations.append((lineno, msg))
    return report


@dataclass
class ShuffleManifest:
    """A seeded derangement of sample ids for the contrastive estimator."""

    seed: int
    pairs: list[tuple[str, str]]

    def mapping(self) -> dict[str, str]:
        return dict(self.pairs)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"seed": self.seed, "pairs": [list(p) for p in self.pairs]}, f, indent=1)
            f.write("\n")

    @classmethod
    def read(cls, path: str | Path) -> "ShuffleManifest":
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
        manifest = cls(seed=int(obj["seed"]), pairs=[tuple(p) for p in obj["pairs"]])
        manifest.check()
        return manifest

    def check(self) -> None:
        sources = [a for a, _ in self.pairs]
        partners = [b for _, b in self.pairs]
        if len(set(sources)) != len(sources) or set(sources) != set(partners):
            raise FixedPointInShuffle("manifest is not a permutation of its sample ids")
        fixed = [a for a, b in self.pairs if a == b]
        if fixed:
            raise FixedPointInShuffle(f"fixed points in manifest: {fixed[:5]}")


def make_shuffle_manifest(sample_ids: list[str], seed: int) -> ShuffleManifest:
    """Deterministic fixed-point-free pairing via rejection-sampled permutations."""
    ids = list(sample_ids)
    if len(ids) < 2:
        raise TooFewSamples(f"need >= 2 samples for a derangement, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("sample_ids contain duplicates")
    rng = np.random.default_rng(seed)
    n = len(ids)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            break
    pairs = [(ids[i], ids[int(perm[i])]) for i in range(n)]
    return ShuffleManifest(seed=seed, pairs=pairs)


@dataclass
class AlignedDataset:
    """Estimator-ready view: per-sample arrays grouped and length-checked."""

    sample_ids: list[str]
    ell: int
    L: int
    conditional: np.ndarray  # (n, L-ell)
    marginal: np.ndarray | None = None
    shuffled: np.ndarray | None = None
    shuffle_partners: list[str] | None = None


def _group_one_per_id(records: list[LogProbRecord], role: str) -> dict[str, LogProbRecord]:
    out: dict[str, LogProbRecord] = {}
    for rec in records:
        if rec.role != role:
            raise SampleSetMismatch(
                f"expected role {role!r}, found {rec.role!r} for sample {rec.sample_id}"
            )
        if rec.sample_id in out:
            raise SampleSetMismatch(f"duplicate {role} record for sample {rec.sample_id}")
        out[rec.sample_id] = rec
    return out


def join_for_estimation(
    cond: list[LogProbRecord],
    marg: list[LogProbRecord] | None = None,
    shuffled: list[LogProbRecord] | None = None,
    manifest: ShuffleManifest | None = None,
) -> AlignedDataset:
    """Group records by sample_id and enforce (ell, L) agreement across roles."""
    cond_by_id = _group_one_per_id(cond, "conditional")
    if not cond_by_id:
        raise SampleSetMismatch("no conditional records")
    ids = sorted(cond_by_id)
    first = cond_by_id[ids[0]]
    ell, L = first.ell, first.L
    for rec in cond_by_id.values():
        if (rec.ell, rec.L) != (ell, L):
            raise InconsistentSplit(
                f"sample {rec.sample_id} has (ell={rec.ell}, L={rec.L}),"
                f" expected ({ell}, {L})"
            )

    def stack(by_id: dict[str, LogProbRecord]) -> np.ndarray:
        missing = [i for i in ids if i not in by_id]
        extra = [i for i in by_id if i not in cond_by_id]
        if missing or extra:
            raise SampleSetMismatch(
                f"sample sets differ: missing {missing[:5]}, unexpected {extra[:5]}"
            )
        for rec in by_id.values():
            if (rec.ell, rec.L) != (ell, L):
                raise InconsistentSplit(
                    f"sample {rec.sample_id} has (ell={rec.ell}, L={rec.L}),"
                    f" expected ({ell}, {L})"
                )
        return np.array([by_id[i].logprobs for i in ids], dtype=np.float64)

    dataset = AlignedDataset(
        sample_ids=ids,
        ell=ell,
        L=L,
        conditional=stack(cond_by_id),
    )
    if marg is not None:
        dataset.marginal = stack(_group_one_per_id(marg, "marginal"))
    if shuffled is not None:
        shuf_by_id = _group_one_per_id(shuffled, "shuffled_conditional")
        expected = manifest.mapping() if manifest is not None else None
        for rec in shuf_by_id.values():
            if rec.partner_id == rec.sample_id or not rec.partner_id:
                raise FixedPointInShuffle(f"sample {rec.sample_id} pairs with itself")
            if expected is not None and expected.get(rec.sample_id) != rec.partner_id:
                raise SampleSetMismatch(
                    f"sample {rec.sample_id} pairs with {rec.partner_id},"
                    f" manifest says {expected.get(rec.sample_id)}"
                )
        dataset.shuffled = stack(shuf_by_id)
        dataset.shuffle_partners = [shuf_by_id[i].partner_id for i in ids]
    return dataset
