"""Command line behavior: exit codes, summaries, determinism."""

import json
import subprocess
import sys

import pytest

from hf_extractor import bundled_corpus_path
from hf_extractor.cli import main


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out


def seg_args(out, n=6, L=16, ell=8, seed=2):
    return (
        "segments",
        "--corpus", str(bundled_corpus_path()),
        "--L", str(L), "--ell", str(ell), "--n", str(n),
        "--seed", str(seed), "--out", str(out),
    )


def test_version_subprocess():
    run = subprocess.run(
        [sys.executable, "-m", "hf_extractor", "--version"], capture_output=True, text=True
    )
    assert run.returncode == 0
    assert run.stdout.strip() == "hf-extract 0.1.0"


def test_segments_then_extract(tmp_path, capsys):
    segs = tmp_path / "segs.jsonl"
    rc, out = run(capsys, *seg_args(segs))
    assert rc == 0
    summary = json.loads(out)
    assert summary == {"command": "segments", "written": 6, "out": str(segs)}

    records = tmp_path / "cond.jsonl"
    rc, out = run(
        capsys,
        "extract", "--role", "conditional", "--segments", str(segs),
        "--model", "builtin:gpt2-random", "--out", str(records),
    )
    assert rc == 0
    assert json.loads(out)["written"] == 6

    check = subprocess.run(
        [sys.executable, "-m", "seqmi", "logprob", "validate", "--records", str(records)],
        capture_output=True,
        text=True,
    )
    assert check.returncode == 0
    assert "violations: 0" in check.stdout


def test_segments_rerun_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run(capsys, *seg_args(a))[0] == 0
    assert run(capsys, *seg_args(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_missing_required_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["segments", "--corpus", "x", "--L", "8", "--ell", "4", "--n", "1", "--out", "y"])
    assert exc.value.code == 2


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_insufficient_corpus_exit_code(tmp_path, capsys, caplog):
    rc, _ = run(capsys, *seg_args(tmp_path / "s.jsonl", n=99_999))
    assert rc == 2
    assert "eligible" in caplog.text


def test_missing_corpus_exit_code(tmp_path, capsys, caplog):
    rc, _ = run(
        capsys,
        "segments", "--corpus", str(tmp_path / "absent.txt"),
        "--L", "8", "--ell", "4", "--n", "1", "--seed", "1",
        "--out", str(tmp_path / "s.jsonl"),
    )
    assert rc == 2
    assert "cannot read" in caplog.text


def test_unknown_model_exit_code(tmp_path, capsys, caplog):
    segs = tmp_path / "segs.jsonl"
    assert run(capsys, *seg_args(segs))[0] == 0
    rc, _ = run(
        capsys,
        "extract", "--role", "conditional", "--segments", str(segs),
        "--model", "builtin:nope", "--out", str(tmp_path / "r.jsonl"),
    )
    assert rc == 2
    assert "builtin:nope" in caplog.text


def test_shuffled_without_manifest_exit_code(tmp_path, capsys, caplog):
    segs = tmp_path / "segs.jsonl"
    assert run(capsys, *seg_args(segs))[0] == 0
    rc, _ = run(
        capsys,
        "extract", "--role", "shuffled_conditional", "--segments", str(segs),
        "--model", "builtin:gpt2-random", "--out", str(tmp_path / "r.jsonl"),
    )
    assert rc == 2
    assert "manifest" in caplog.text


def test_malformed_segments_exit_code(tmp_path, capsys, caplog):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{nope\n", encoding="utf-8")
    rc, _ = run(
        capsys,
        "extract", "--role", "conditional", "--segments", str(bad),
        "--model", "builtin:gpt2-random", "--out", str(tmp_path / "r.jsonl"),
    )
    assert rc == 2
    assert "invalid JSON" in caplog.text
