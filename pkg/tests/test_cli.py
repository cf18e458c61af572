"""End-to-end CLI behavior: values, chaining, metadata, exit codes."""

import csv
import hashlib
import json
import math
import struct
import subprocess
import sys

import numpy as np
import pytest

from seqmi import gaussian, ngrams, records
from seqmi.cli import main
from seqmi.records import LogProbRecord


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def csv_rows(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    return list(csv.reader(lines))[1:]  # drop header


def meta_line(text):
    first = text.splitlines()[0]
    assert first.startswith("# metadata: ")
    return json.loads(first[len("# metadata: ") :])


def rec(sid, role, lps, ell=2, partner=None):
    L = ell + len(lps)
    return LogProbRecord(
        sample_id=sid,
        role=role,
        ell=ell,
        L=L,
        token_ids=[0] * (L - ell),
        logprobs=list(lps),
        partner_id=partner,
    )


# ----------------------------------------------------------------- basics


def test_version_subprocess():
    out = subprocess.run(
        [sys.executable, "-m", "seqmi", "--version"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "seqmi 0.1.0"


def test_unknown_command_exits_two():
    with pytest.raises(SystemExit) as err:
        main(["gaussian", "frobnicate"])
    assert err.value.code == 2


# --------------------------------------------------------------- gaussian


def test_mi_exact_matches_library(capsys):
    rc, out, _ = run(
        capsys, "gaussian", "mi", "--family", "subvolume", "--layers", "2", "--ell", "8"
    )
    assert rc == 0
    payload = json.loads(out)
    model = gaussian.build_covariance("subvolume", 2)
    assert payload["value"] == pytest.approx(
        gaussian.bipartite_mi_exact(model, 8), abs=1e-15
    )
    assert payload["metadata"]["command"] == "gaussian mi"
    assert payload["metadata"]["config"]["layers"] == 2


def test_mi_requires_ell_without_sweep(capsys, caplog):
    rc, _, _ = run(capsys, "gaussian", "mi", "--family", "subvolume", "--layers", "1")
    assert rc == 2
    assert "--ell" in caplog.text


def test_mi_mc_requires_seed(capsys, caplog):
    rc, _, _ = run(
        capsys,
        *"gaussian mi --family subvolume --layers 1 --ell 2 --mc 100".split(),
    )
    assert rc == 2
    assert "--seed" in caplog.text


def test_mi_mc_with_seed_is_close(capsys):
    rc, out, _ = run(
        capsys,
        *"gaussian mi --family subvolume --layers 1 --ell 2 --mc 20000 --seed 3".split(),
    )
    assert rc == 0
    payload = json.loads(out)
    truth = 0.5 * math.log(1.8)
    assert abs(payload["value"] - truth) < 4 * payload["stderr"]


def test_build_then_load_model(tmp_path, capsys):
    model_path = tmp_path / "sub2.gcov"
    rc, _, _ = run(
        capsys,
        *f"gaussian build --family subvolume --layers 2 --out {model_path}".split(),
    )
    assert rc == 0
    assert model_path.read_bytes()[:4] == b"GCOV"
    rc, out, _ = run(
        capsys, "gaussian", "mi", "--model", str(model_path), "--ell", "8"
    )
    assert rc == 0
    loaded = json.loads(out)["value"]
    inline = gaussian.bipartite_mi_exact(gaussian.build_covariance("subvolume", 2), 8)
    assert loaded == pytest.approx(inline, abs=1e-15)


def test_layer_cap_exit_code(tmp_path, capsys, caplog):
    rc, _, _ = run(
        capsys,
        *f"gaussian build --family subvolume --layers 8 --out {tmp_path/'x.gcov'}".split(),
    )
    assert rc == 2
    assert "cap" in caplog.text.lower()


def test_non_positive_definite_model_exit_code(tmp_path, capsys, caplog):
    # handcrafted GCOV: unit diagonal but an impossible correlation pattern
    path = tmp_path / "bad.gcov"
    tri = [1.0, 0.9, 1.0, 0.9, -0.9, 1.0, 0.0, 0.0, 0.0, 1.0]
    with open(path, "wb") as f:
        f.write(b"GCOV")
        f.write(struct.pack("<HBB", 1, 0, 1))
        f.write(struct.pack("<dd", gaussian.DEFAULT_GAMMA, gaussian.DEFAULT_RHO))
        f.write(np.array(tri, dtype="<f8").tobytes())
    rc, _, _ = run(capsys, "gaussian", "mi", "--model", str(path), "--ell", "2")
    assert rc == 1
    assert "positive definite" in caplog.text.lower()


def test_truncated_model_file_is_input_error(tmp_path, capsys, caplog):
    path = tmp_path / "trunc.gcov"
    model = gaussian.build_covariance("subvolume", 1)
    gaussian.write_model(model, path)
    path.write_bytes(path.read_bytes()[:-8])
    rc, _, _ = run(capsys, "gaussian", "mi", "--model", str(path), "--ell", "2")
    assert rc == 2
    assert "truncated" in caplog.text


def test_twopoint_command(capsys):
    rc, out, _ = run(
        capsys,
        *"gaussian twopoint --family subvolume --layers 1 --i 1 --j 2".split(),
    )
    assert rc == 0
    assert json.loads(out)["value"] == pytest.approx(0.0322692605687856, abs=1e-12)


def test_sample_csv_deterministic(tmp_path, capsys):
    args = "gaussian sample --family subvolume --layers 1 --n 5 --seed 9 --format csv"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, *args.split(), "--out", str(a))[0] == 0
    assert run(capsys, *args.split(), "--out", str(b))[0] == 0
    # identical draws; metadata differs only in the out path
    assert csv_rows(a.read_text()) == csv_rows(b.read_text())
    rows = csv_rows(a.read_text())
    assert len(rows) == 5 and len(rows[0]) == 4
    float(rows[0][0])  # parses


def test_sample_ngf_needs_out(capsys, caplog):
    rc, _, _ = run(
        capsys, *"gaussian sample --family subvolume --layers 1 --n 5 --seed 9".split()
    )
    assert rc == 2
    assert "--out" in caplog.text


# ------------------------------------------------------- sweep / fit chain


def test_sweep_fit_extrapolate_chain(tmp_path, capsys):
    sweep = tmp_path / "sweep.csv"
    rc, _, _ = run(
        capsys,
        *(
            "gaussian mi --family subvolume --sweep --min-layers 2 --max-layers 4"
            f" --out {sweep}"
        ).split(),
    )
    assert rc == 0
    rows = csv_rows(sweep.read_text())
    assert [int(float(r[0])) for r in rows] == [16, 64, 256]
    assert meta_line(sweep.read_text())["command"] == "gaussian mi"

    fit_path = tmp_path / "fit.json"
    rc, _, _ = run(
        capsys, *f"fit powerlaw --series {sweep} --out {fit_path}".split()
    )
    assert rc == 0
    fit = json.loads(fit_path.read_text())
    assert fit["model"] == "powerlaw"
    assert 0.69 <= fit["exponent"] <= 0.89
    # input hash in the metadata must be the real digest of the series file
    want = hashlib.sha256(sweep.read_bytes()).hexdigest()
    assert fit["metadata"]["inputs"][str(sweep)] == want

    rc, out, _ = run(capsys, *f"fit extrapolate --fit {fit_path} --x 1024".split())
    assert rc == 0
    payload = json.loads(out)
    assert payload["value"] == pytest.approx(
        fit["A"] * 1024 ** fit["exponent"] + fit["C"], rel=1e-12
    )

    rc, out, _ = run(
        capsys,
        *f"fit l2m --fit {fit_path} --length 1024 --capacity 2.0 --log-vocab 1.0".split(),
    )
    assert rc == 0
    l2m = json.loads(out)
    assert l2m["required_dim"] == pytest.approx(
        (payload["value"] - 1.0) / 2.0, rel=1e-12
    )


def test_fit_compare_on_log_series(tmp_path, capsys):
    series = tmp_path / "log.csv"
    xs = [4.0, 16.0, 64.0, 256.0, 1024.0]
    with open(series, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y"])
        w.writerows((x, 0.3 * math.log(x) + 0.29) for x in xs)
    rc, out, _ = run(capsys, *f"fit compare --series {series}".split())
    assert rc == 0
    payload = json.loads(out)
    assert payload["selection"] == "logarithmic"
    assert payload["log_residual"] < payload["powerlaw_residual"]


def test_fit_rejects_non_powerlaw_json(tmp_path, capsys, caplog):
    bad = tmp_path / "fit.json"
    bad.write_text(json.dumps({"model": "logarithmic", "a": 1.0, "b": 0.0}))
    rc, _, _ = run(capsys, *f"fit extrapolate --fit {bad} --x 4".split())
    assert rc == 2
    assert "powerlaw" in caplog.text


# ------------------------------------------------------------------ ngram


@pytest.fixture
def corpus_jsonl(tmp_path):
    docs = [np.array([0, 1, 2, 3, 0, 1, 2, 3]), np.array([3, 2, 1, 0, 3, 2, 1, 0])]
    corpus = ngrams.TokenCorpus(documents=docs)
    path = tmp_path / "corpus.jsonl"
    ngrams.write_corpus_jsonl(corpus, path)
    return path


def test_ngram_convert_roundtrip(tmp_path, corpus_jsonl, capsys):
    ngc = tmp_path / "corpus.ngc"
    back = tmp_path / "back.jsonl"
    assert run(capsys, *f"ngram convert --infile {corpus_jsonl} --out {ngc}".split())[0] == 0
    assert run(capsys, *f"ngram convert --infile {ngc} --out {back} --to jsonl".split())[0] == 0
    a = ngrams.read_corpus(corpus_jsonl)
    b = ngrams.read_corpus(back)
    assert a.doc_ids == b.doc_ids
    assert all(np.array_equal(x, y) for x, y in zip(a.documents, b.documents))


def test_ngram_counting_commands(tmp_path, corpus_jsonl, capsys):
    uni = tmp_path / "uni.ctb"
    pairs = tmp_path / "pairs.ctb"
    lead = tmp_path / "lead.ctb"
    assert run(capsys, *f"ngram count-unigrams --corpus {corpus_jsonl} --out {uni}".split())[0] == 0
    assert run(
        capsys,
        *f"ngram count-pairs --corpus {corpus_jsonl} --distance 4 --out {pairs}".split(),
    )[0] == 0
    assert run(
        capsys, *f"ngram count-leading --corpus {corpus_jsonl} --ell 4 --out {lead}".split()
    )[0] == 0
    from seqmi.entropy import CountTable

    assert CountTable.read(uni).total == 16
    assert CountTable.read(pairs).total == 8  # distance 4 in length-8 docs
    assert CountTable.read(lead).total == 2  # one leading pair per document


def test_estimate_twopoint_single_and_series(tmp_path, corpus_jsonl, capsys):
    rc, out, _ = run(
        capsys,
        *f"estimate twopoint --corpus {corpus_jsonl} --distance 4".split(),
    )
    assert rc == 0
    payload = json.loads(out)
    corpus = ngrams.read_corpus(corpus_jsonl)
    from seqmi.estimators import twopoint_mi_hat

    want = twopoint_mi_hat(
        ngrams.count_unigrams(corpus), ngrams.count_pairs_at_distance(corpus, 4)
    )
    assert payload["value"] == pytest.approx(want, abs=1e-15)

    series = tmp_path / "tp.csv"
    rc, _, _ = run(
        capsys,
        *f"estimate twopoint --corpus {corpus_jsonl} --distances 1,2,4 --out {series}".split(),
    )
    assert rc == 0
    assert [float(r[0]) for r in csv_rows(series.read_text())] == [1.0, 2.0, 4.0]


def test_estimate_twopoint_distance_flags_conflict(corpus_jsonl):
    with pytest.raises(SystemExit) as err:
        main(
            f"estimate twopoint --corpus {corpus_jsonl} --distance 1 --distances 1,2".split()
        )
    assert err.value.code == 2


# -------------------------------------------------------- records/estimate


@pytest.fixture
def record_files(tmp_path):
    cond = [rec(f"s{i}", "conditional", [-0.5 - 0.1 * i, -0.5]) for i in range(4)]
    marg = [rec(f"s{i}", "marginal", [-1.0, -1.2 + 0.05 * i]) for i in range(4)]
    partners = {"s0": "s1", "s1": "s2", "s2": "s3", "s3": "s0"}
    shuf = [
        rec(f"s{i}", "shuffled_conditional", [-2.0 - 0.2 * i, -2.0], partner=partners[f"s{i}"])
        for i in range(4)
    ]
    paths = {}
    for name, recs in (("cond", cond), ("marg", marg), ("shuf", shuf)):
        paths[name] = tmp_path / f"{name}.jsonl"
        records.write_records(recs, paths[name])
    return paths


def test_estimate_direct_cli(record_files, capsys):
    rc, out, _ = run(
        capsys,
        *(
            f"estimate bipartite-direct --conditional {record_files['cond']}"
            f" --marginal {record_files['marg']}"
        ).split(),
    )
    assert rc == 0
    payload = json.loads(out)
    from seqmi.estimators import direct_bipartite

    want = direct_bipartite(
        records.read_records(record_files["cond"]),
        records.read_records(record_files["marg"]),
    )
    assert payload["value"] == pytest.approx(want.value, abs=1e-15)
    assert payload["stderr"] == pytest.approx(want.stderr, abs=1e-15)
    assert payload["terms"]["correction_applied"] == 0.0


def test_estimate_vclub_cli_with_manifest(record_files, tmp_path, capsys):
    manifest = tmp_path / "manifest.json"
    rc, _, _ = run(
        capsys,
        *(
            f"logprob shuffle-manifest --records {record_files['cond']}"
            f" --seed 5 --out {manifest}"
        ).split(),
    )
    assert rc == 0
    pairs = dict(map(tuple, json.loads(manifest.read_text())["pairs"]))
    assert all(a != b for a, b in pairs.items())  # derangement

    # regenerate the shuffled records to match this manifest's pairing
    shuf = [
        rec(sid, "shuffled_conditional", [-2.0, -2.0], partner=partner)
        for sid, partner in pairs.items()
    ]
    shuf_path = tmp_path / "shuf2.jsonl"
    records.write_records(shuf, shuf_path)
    rc, out, _ = run(
        capsys,
        *(
            f"estimate bipartite-vclub --conditional {record_files['cond']}"
            f" --shuffled {shuf_path} --manifest {manifest}"
        ).split(),
    )
    assert rc == 0
    payload = json.loads(out)
    assert payload["terms"]["shuffled_logprob_mean"] == pytest.approx(-4.0, abs=1e-15)


def test_logprob_manifest_requires_seed(record_files, capsys, caplog):
    rc, _, _ = run(
        capsys, *f"logprob shuffle-manifest --records {record_files['cond']}".split()
    )
    assert rc == 2
    assert "--seed" in caplog.text


def test_logprob_validate_clean_and_corrupt(record_files, tmp_path, capsys):
    rc, out, _ = run(
        capsys, *f"logprob validate --records {record_files['cond']}".split()
    )
    assert rc == 0
    assert "violations: 0" in out

    corrupt = tmp_path / "corrupt.jsonl"
    good = record_files["cond"].read_text().splitlines()[0]
    bad = json.loads(good)
    bad["role"] = "sideways"
    corrupt.write_text(good + "\n" + json.dumps(bad) + "\n")
    rc, out, _ = run(capsys, *f"logprob validate --records {corrupt}".split())
    assert rc == 2
    assert "line 2" in out


# ---------------------------------------------------------------- metrics


def test_kl_curve_feeds_metrics_avg(tmp_path, capsys):
    curve = tmp_path / "kl.csv"
    rc, _, _ = run(
        capsys,
        *f"gaussian kl --family subvolume --layers 1 --out {curve}".split(),
    )
    assert rc == 0
    rows = csv_rows(curve.read_text())
    assert [int(r[0]) for r in rows] == [1, 2, 3, 4]
    rc, out, _ = run(capsys, *f"metrics avg --curve {curve}".split())
    assert rc == 0
    # doubled conditional stds at every position: ln 2 + 1/8 - 1/2
    assert json.loads(out)["value"] == pytest.approx(0.3181471805599453, abs=1e-12)


def test_metrics_nll_and_smooth(record_files, tmp_path, capsys):
    nll = tmp_path / "nll.csv"
    rc, _, _ = run(
        capsys,
        *f"metrics nll --records {record_files['cond']} --out {nll}".split(),
    )
    assert rc == 0
    rows = csv_rows(nll.read_text())
    assert [int(r[0]) for r in rows] == [3, 4]
    assert float(rows[1][1]) == pytest.approx(0.5, abs=1e-15)

    smoothed = tmp_path / "smooth.csv"
    rc, _, _ = run(
        capsys, *f"metrics smooth --curve {nll} --window 1 --out {smoothed}".split()
    )
    assert rc == 0
    for row in csv_rows(smoothed.read_text()):
        assert float(row[1]) == pytest.approx(float(row[2]), abs=1e-15)


def test_metrics_kl_difference(tmp_path, capsys):
    p, q = tmp_path / "p.csv", tmp_path / "q.csv"
    for path, vals in ((p, [1.0, 2.0]), (q, [1.5, 2.75])):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["position", "value"])
            w.writerows(zip([3, 4], vals))
    rc, out, _ = run(capsys, *f"metrics kl --p {p} --q {q}".split())
    assert rc == 0
    rows = csv_rows(out)
    assert [float(r[1]) for r in rows] == [0.5, 0.75]
