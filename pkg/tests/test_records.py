"""Record wire format, validation, shuffle manifests, and the join."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqmi.errors import (
    FixedPointInShuffle,
    InconsistentSplit,
    RecordSchemaError,
    SampleSetMismatch,
    TooFewSamples,
)
from seqmi.records import (
    LogProbRecord,
    ShuffleManifest,
    join_for_estimation,
    make_shuffle_manifest,
    read_records,
    validate,
    write_records,
)


def rec(sid="s0", role="conditional", ell=2, L=4, lps=None, partner=None):
    width = L - ell
    return LogProbRecord(
        sample_id=sid,
        role=role,
        ell=ell,
        L=L,
        token_ids=list(range(width)),
        logprobs=list(lps) if lps is not None else [-0.5] * width,
        partner_id=partner,
    )


# ----------------------------------------------------------------- schema


def test_well_formed_record_has_no_violations():
    assert rec().check() == []


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda r: setattr(r, "schema_version", 2), "schema_version"),
        (lambda r: setattr(r, "role", "scores"), "unknown role"),
        (lambda r: setattr(r, "ell", 4), "0 <= ell < L"),
        (lambda r: setattr(r, "token_ids", [1]), "token_ids length"),
        (lambda r: setattr(r, "logprobs", [-1.0]), "logprobs length"),
        (lambda r: setattr(r, "token_ids", [-1, 2]), "non-negative"),
        (lambda r: setattr(r, "logprobs", [0.1, -1.0]), "> 0"),
        (lambda r: setattr(r, "logprobs", [math.nan, -1.0]), "NaN"),
        (lambda r: setattr(r, "partner_id", "x"), "only valid"),
    ],
)
def test_check_catches_violation(mutate, fragment):
    r = rec()
    mutate(r)
    assert any(fragment in p for p in r.check()), r.check()


def test_shuffled_partner_rules():
    assert any("partner_id" in p for p in rec(role="shuffled_conditional").check())
    assert any(
        "fixed point" in p
        for p in rec(sid="a", role="shuffled_conditional", partner="a").check()
    )
    assert rec(sid="a", role="shuffled_conditional", partner="b").check() == []


def test_zero_logprob_is_legal():
    assert rec(lps=[0.0, -1.0]).check() == []


def test_neg_inf_sentinel_roundtrip(tmp_path):
    r = rec(lps=[-math.inf, -0.25])
    p = tmp_path / "r.jsonl"
    write_records([r], p)
    text = p.read_text()
    assert '"-inf"' in text
    assert "Infinity" not in text  # bare JSON Infinity never appears
    back = read_records(p)
    assert back[0].logprobs == [-math.inf, -0.25]


def test_canonical_roundtrip_byte_identical(tmp_path):
    recs = [rec(sid=s, lps=[-0.1 * i, -1e-17]) for i, s in enumerate("cab")]
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_records(recs, p1)
    write_records(read_records(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_write_sorts_by_sample_id(tmp_path):
    p = tmp_path / "r.jsonl"
    write_records([rec(sid="z"), rec(sid="a")], p)
    ids = [json.loads(line)["sample_id"] for line in p.read_text().splitlines()]
    assert ids == ["a", "z"]


def test_unknown_field_ignored():
    obj = json.loads(rec().to_json())
    obj["extra_diagnostic"] = {"nested": True}
    r = LogProbRecord.from_obj(obj)
    assert r.check() == []


def test_unknown_schema_version_rejected_on_strict_read(tmp_path):
    obj = json.loads(rec().to_json())
    obj["schema_version"] = 99
    p = tmp_path / "r.jsonl"
    p.write_text(json.dumps(obj) + "\n")
    with pytest.raises(RecordSchemaError, match="schema_version"):
        read_records(p)
    assert len(read_records(p, strict=False)) == 1


def test_missing_field_rejected():
    obj = json.loads(rec().to_json())
    del obj["ell"]
    with pytest.raises(RecordSchemaError, match="ell"):
        LogProbRecord.from_obj(obj)


def test_non_numeric_logprob_rejected():
    obj = json.loads(rec().to_json())
    obj["logprobs"] = ["+inf", -1.0]
    with pytest.raises(RecordSchemaError):
        LogProbRecord.from_obj(obj)


@given(
    st.lists(
        st.floats(max_value=0.0, allow_nan=False, width=64) | st.just(-math.inf),
        min_size=1,
        max_size=6,
    )
)
@settings(max_examples=60, deadline=None)
def test_logprob_payload_roundtrips_through_json(lps):
    r = rec(ell=0, L=len(lps), lps=lps)
    back = LogProbRecord.from_obj(json.loads(r.to_json()))
    assert back.logprobs == lps


# -------------------------------------------------------------- validation


def test_validate_reports_line_numbers(tmp_path):
    good = rec().to_json()
    bad_json = '{"schema_version": 1, '
    bad_value = json.loads(rec(sid="s1").to_json())
    bad_value["logprobs"] = [1.5, -1.0]
    p = tmp_path / "mixed.jsonl"
    p.write_text("\n".join([good, bad_json, json.dumps(bad_value)]) + "\n")
    report = validate(p)
    assert not report.ok
    assert report.n_records == 2  # the unparseable line never counts
    assert report.role_counts == {"conditional": 2}
    linenos = [ln for ln, _ in report.violations]
    assert linenos == [2, 3]
    assert "line 2" in report.summary()


def test_validate_clean_file(tmp_path):
    p = tmp_path / "ok.jsonl"
    write_records([rec(sid=f"s{i}") for i in range(3)], p)
    report = validate(p)
    assert report.ok
    assert report.n_records == 3


# ---------------------------------------------------------------- manifest


@given(st.integers(2, 40), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_manifest_is_fixed_point_free_permutation(n, seed):
    ids = [f"s{i}" for i in range(n)]
    manifest = make_shuffle_manifest(ids, seed)
    sources = [a for a, _ in manifest.pairs]
    partners = [b for _, b in manifest.pairs]
    assert sources == ids
    assert sorted(partners) == sorted(ids)
    assert all(a != b for a, b in manifest.pairs)


def test_manifest_deterministic():
    ids = [f"s{i}" for i in range(9)]
    assert make_shuffle_manifest(ids, 7).pairs == make_shuffle_manifest(ids, 7).pairs


def test_manifest_needs_two_samples():
    with pytest.raises(TooFewSamples):
        make_shuffle_manifest(["only"], 0)


def test_manifest_roundtrip_and_tamper(tmp_path):
    manifest = make_shuffle_manifest([f"s{i}" for i in range(5)], 3)
    p = tmp_path / "m.json"
    manifest.write(p)
    assert ShuffleManifest.read(p).pairs == manifest.pairs
    obj = json.loads(p.read_text())
    obj["pairs"][0][1] = obj["pairs"][0][0]  # introduce a fixed point
    p.write_text(json.dumps(obj))
    with pytest.raises(FixedPointInShuffle):
        ShuffleManifest.read(p)


# -------------------------------------------------------------------- join


def make_roleset(n=4, ell=2, L=4):
    ids = [f"s{i}" for i in range(n)]
    cond = [rec(sid=s, ell=ell, L=L) for s in ids]
    marg = [rec(sid=s, role="marginal", ell=ell, L=L) for s in ids]
    manifest = make_shuffle_manifest(ids, 1)
    mapping = manifest.mapping()
    shuf = [
        rec(sid=s, role="shuffled_conditional", ell=ell, L=L, partner=mapping[s])
        for s in ids
    ]
    return ids, cond, marg, shuf, manifest


def test_join_happy_path():
    ids, cond, marg, shuf, manifest = make_roleset()
    data = join_for_estimation(cond, marg=marg, shuffled=shuf, manifest=manifest)
    assert data.sample_ids == sorted(ids)
    assert data.conditional.shape == (4, 2)
    assert data.marginal.shape == (4, 2)
    assert data.shuffled.shape == (4, 2)
    assert data.shuffle_partners == [manifest.mapping()[i] for i in data.sample_ids]


def test_join_duplicate_record_rejected():
    _, cond, _, _, _ = make_roleset()
    with pytest.raises(SampleSetMismatch, match="duplicate"):
        join_for_estimation(cond + [cond[0]])


def test_join_inconsistent_split_rejected():
    _, cond, _, _, _ = make_roleset()
    cond[-1] = rec(sid=cond[-1].sample_id, ell=1, L=4)
    with pytest.raises(InconsistentSplit):
        join_for_estimation(cond)


def test_join_sample_set_mismatch():
    _, cond, marg, _, _ = make_roleset()
    with pytest.raises(SampleSetMismatch, match="missing"):
        join_for_estimation(cond, marg=marg[:-1])


def test_join_wrong_role_rejected():
    _, cond, marg, _, _ = make_roleset()
    with pytest.raises(SampleSetMismatch, match="role"):
        join_for_estimation(cond, marg=cond)


def test_join_shuffled_fixed_point_rejected():
    ids, cond, _, shuf, manifest = make_roleset()
    shuf[0].partner_id = shuf[0].sample_id
    with pytest.raises(FixedPointInShuffle):
        join_for_estimation(cond, shuffled=shuf, manifest=manifest)


def test_join_manifest_disagreement_rejected():
    ids, cond, _, shuf, manifest = make_roleset()
    others = [i for i in ids if i not in (shuf[0].sample_id, shuf[0].partner_id)]
    shuf[0].partner_id = others[0]
    with pytest.raises(SampleSetMismatch, match="manifest"):
        join_for_estimation(cond, shuffled=shuf, manifest=manifest)


def test_join_stacks_rows_in_id_order():
    cond = [
        rec(sid="b", lps=[-2.0, -3.0]),
        rec(sid="a", lps=[-5.0, -7.0]),
    ]
    data = join_for_estimation(cond)
    assert np.array_equal(data.conditional, [[-5.0, -7.0], [-2.0, -3.0]])
