"""Subcommand front end wiring the library into reproducible pipelines.

Exit codes: 0 success, 1 computation error, 2 input/validation error.
Randomized commands require an explicit --seed; there is no wall-clock
seeding anywhere. stdout carries the payload, stderr the logs, and every
machine-readable output embeds a metadata object (version, resolved
config, input digests) so runs can be traced back to their inputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, entropy, estimators, fits, gaussian, ngrams, records
from .errors import ComputationError, InputError

log = logging.getLogger("seqmi")


# ------------------------------------------------------------ IO plumbing ---


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _metadata(args: argparse.Namespace, inputs) -> dict:
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "command_name", "verbose") and v is not None
    }
    return {
        "version": __version__,
        "command": args.command_name,
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
    }


@contextmanager
def _open_out(path: Path | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            yield f


def _emit_json(payload: dict, args: argparse.Namespace, inputs=()) -> None:
    payload = dict(payload)
    payload["metadata"] = _metadata(args, inputs)
    with _open_out(getattr(args, "out", None)) as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _emit_rows(header, rows, args: argparse.Namespace, inputs=()) -> None:
    meta = json.dumps(_metadata(args, inputs), separators=(",", ":"))
    with _open_out(getattr(args, "out", None)) as f:
        f.write(f"# metadata: {meta}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _read_curve(path: Path) -> estimators.MetricCurve:
    rows = []
    with open(path, encoding="utf-8") as f:
        for row in csv.reader(line for line in f if not line.startswith("#")):
            if not row or row[0] == "position":
                continue
            rows.append(row)
    if not rows:
        raise InputError(f"{path}: no curve rows")
    positions = np.array([int(float(r[0])) for r in rows])
    values = np.array([float(r[1]) for r in rows])
    return estimators.MetricCurve(positions=positions, values=values)


def _load_model(args: argparse.Namespace):
    """Model from --model file, or built inline from --family/--layers."""
    if getattr(args, "model", None):
        return gaussian.read_model(args.model), [args.model]
    if args.family is None or args.layers is None:
        raise InputError("provide --model, or both --family and --layers")
    model = gaussian.build_covariance(
        args.family, args.layers, gamma=args.gamma, rho=args.rho, cap=args.cap
    )
    return model, []


def _require_seed(args: argparse.Namespace, why: str) -> None:
    if args.seed is None:
        raise InputError(f"--seed is required: {why}")


def _load_fit(path: Path) -> fits.PowerLawFit:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    if obj.get("model") != "powerlaw":
        raise InputError(f"{path}: expected a powerlaw fit, got {obj.get('model')!r}")
    return fits.PowerLawFit(
        amplitude=float(obj["A"]),
        exponent=float(obj["exponent"]),
        offset=float(obj.get("C", 0.0)),
        objective=float(obj.get("objective", float("nan"))),
        r2=float(obj.get("r2", float("nan"))),
    )


# ---------------------------------------------------------------- gaussian ---


def cmd_gaussian_build(args):
    if args.family is None or args.layers is None:
        raise InputError("build needs --family and --layers")
    model = gaussian.build_covariance(
        args.family, args.layers, gamma=args.gamma, rho=args.rho, cap=args.cap
    )
    gaussian.write_model(model, args.out)
    log.info("wrote %s (family=%s, L=%d)", args.out, model.family, model.length)


def cmd_gaussian_mi(args):
    if args.sweep:
        if args.family is None:
            raise InputError("--sweep builds models inline and needs --family")
        points = gaussian.sweep_bipartite(
            args.family,
            args.max_layers,
            ratio=args.ratio,
            gamma=args.gamma,
            rho=args.rho,
            cap=args.cap,
            min_layers=args.min_layers,
        )
        _emit_rows(("x", "y"), points, args)
        return
    model, inputs = _load_model(args)
    if args.ell is None:
        raise InputError("--ell is required without --sweep")
    if args.mc:
        _require_seed(args, "--mc draws Monte-Carlo samples")
        value, stderr = gaussian.mc_bipartite_mi(model, args.ell, args.mc, args.seed)
        _emit_json(
            {"value": value, "stderr": stderr, "n_samples": args.mc}, args, inputs
        )
    else:
        _emit_json({"value": gaussian.bipartite_mi_exact(model, args.ell)}, args, inputs)


def cmd_gaussian_twopoint(args):
    model, inputs = _load_model(args)
    value = gaussian.twopoint_mi_exact(model, args.i, args.j)
    _emit_json({"i": args.i, "j": args.j, "value": value}, args, inputs)


def cmd_gaussian_sample(args):
    model, inputs = _load_model(args)
    _require_seed(args, "sampling is randomized")
    draws = gaussian.sample(model, args.n, args.seed)
    if args.format == "csv":
        _emit_rows(
            tuple(f"w{i}" for i in range(1, model.length + 1)),
            draws.tolist(),
            args,
            inputs,
        )
    else:
        if args.out is None:
            raise InputError("binary sample output needs --out")
        ngrams.write_real_corpus(draws, args.out)
        log.info("metadata: %s", json.dumps(_metadata(args, inputs)))


def cmd_gaussian_kl(args):
    """Per-position KL curve against a same-mean chain with rescaled stds."""
    model, inputs = _load_model(args)
    L = model.length
    stds = gaussian.conditional_stds(model)
    q_stds = args.q_std_scale * stds
    q_means = np.full(L, args.q_mean_shift)
    if args.n:
        _require_seed(args, "--n draws prefix samples")
        prefixes = gaussian.sample(model, args.n, args.seed)
    else:
        # the zero prefix makes every conditional mean zero, so the curve is
        # exact rather than sample-averaged
        prefixes = np.zeros((1, L))
    values = [
        gaussian.conditional_kl(model, q_means, q_stds, prefixes, i)
        for i in range(1, L + 1)
    ]
    _emit_rows(("position", "value"), zip(range(1, L + 1), values), args, inputs)


# ------------------------------------------------------------------ ngram ---


def cmd_ngram_count_unigrams(args):
    corpus = ngrams.read_corpus(args.corpus)
    table = ngrams.count_unigrams(corpus)
    table.write(args.out)
    log.info("wrote %s (%d keys, total %d)", args.out, len(table.entries), table.total)


def cmd_ngram_count_pairs(args):
    corpus = ngrams.read_corpus(args.corpus)
    table = ngrams.count_pairs_at_distance(corpus, args.distance)
    table.write(args.out)
    log.info("wrote %s (%d keys, total %d)", args.out, len(table.entries), table.total)


def cmd_ngram_count_leading(args):
    corpus = ngrams.read_corpus(args.corpus)
    segments = (doc[args.ell :] for doc in corpus.documents)
    table = ngrams.count_segment_leading_pairs(segments)
    table.write(args.out)
    log.info("wrote %s (%d keys, total %d)", args.out, len(table.entries), table.total)


def cmd_ngram_convert(args):
    corpus = ngrams.read_corpus(args.infile)
    suffix = args.to or Path(args.out).suffix.lstrip(".")
    if suffix == "jsonl":
        ngrams.write_corpus_jsonl(corpus, args.out)
    elif suffix in ("ngc", "ngc1"):
        ngrams.write_corpus_ngc1(corpus, args.out)
    else:
        raise InputError(f"unknown target format {suffix!r} (use jsonl or ngc)")
    log.info("wrote %s (%d documents)", args.out, len(corpus.documents))


# --------------------------------------------------------------- estimate ---


def cmd_estimate_twopoint(args):
    corpus = ngrams.read_corpus(args.corpus)
    unigrams = ngrams.count_unigrams(corpus)
    if args.distances:
        ds = [int(tok) for tok in args.distances.split(",") if tok.strip()]
    else:
        ds = [args.distance]
    values = []
    for d in ds:
        pairs = ngrams.count_pairs_at_distance(corpus, d)
        values.append(
            estimators.twopoint_mi_hat(unigrams, pairs, marginal_mode=args.marginal_mode)
        )
    if len(ds) == 1:
        _emit_json({"distance": ds[0], "value": values[0]}, args, [args.corpus])
    else:
        _emit_rows(("x", "y"), zip(ds, values), args, [args.corpus])


def _estimate_payload(est: estimators.BipartiteEstimate) -> dict:
    return {
        "value": est.value,
        "stderr": est.stderr,
        "n_samples": est.n_samples,
        "terms": est.terms,
    }


def cmd_estimate_direct(args):
    cond = records.read_records(args.conditional)
    marg = records.read_records(args.marginal)
    inputs = [args.conditional, args.marginal]
    leading = None
    if args.leading_pairs:
        leading = entropy.CountTable.read(args.leading_pairs)
        inputs.append(args.leading_pairs)
    correction = False if args.no_correction else None
    est = estimators.direct_bipartite(
        cond, marg, leading_pairs=leading, correction=correction
    )
    _emit_json(_estimate_payload(est), args, inputs)


def cmd_estimate_vclub(args):
    cond = records.read_records(args.conditional)
    shuffled = records.read_records(args.shuffled)
    inputs = [args.conditional, args.shuffled]
    manifest = None
    if args.manifest:
        manifest = records.ShuffleManifest.read(args.manifest)
        inputs.append(args.manifest)
    est = estimators.vclub_bipartite(cond, shuffled=shuffled, manifest=manifest)
    _emit_json(_estimate_payload(est), args, inputs)


# -------------------------------------------------------------------- fit ---


def cmd_fit_powerlaw(args):
    series = fits.read_series(args.series)
    fit = fits.fit_powerlaw_loglog(series, weighted=args.weighted)
    _emit_json(fits.fit_to_dict(fit), args, [args.series])


def cmd_fit_powerlaw_offset(args):
    series = fits.read_series(args.series)
    fit = fits.fit_powerlaw_offset(series, weighted=args.weighted)
    _emit_json(fits.fit_to_dict(fit), args, [args.series])


def cmd_fit_log(args):
    series = fits.read_series(args.series)
    fit = fits.fit_log(series, weighted=args.weighted)
    _emit_json(fits.fit_to_dict(fit), args, [args.series])


def cmd_fit_compare(args):
    series = fits.read_series(args.series)
    cmp = fits.model_compare(series)
    _emit_json(
        {
            "selection": cmp.selection,
            "powerlaw_residual": cmp.powerlaw_residual,
            "log_residual": cmp.log_residual,
            "tie": cmp.tie,
            "powerlaw": fits.fit_to_dict(cmp.powerlaw_fit),
            "logarithmic": fits.fit_to_dict(cmp.log_fit),
        },
        args,
        [args.series],
    )


def cmd_fit_extrapolate(args):
    fit = _load_fit(args.fit)
    _emit_json({"x": args.x, "value": fits.extrapolate(fit, args.x)}, args, [args.fit])


def cmd_fit_l2m(args):
    fit = _load_fit(args.fit)
    dim = fits.l2m_required_dim(
        fit, args.length, args.capacity, log_vocab=args.log_vocab
    )
    _emit_json({"length": args.length, "required_dim": dim}, args, [args.fit])


# ---------------------------------------------------------------- metrics ---


def cmd_metrics_nll(args):
    recs = [r for r in records.read_records(args.records) if r.role == args.role]
    if not recs:
        raise InputError(f"{args.records}: no records with role {args.role!r}")
    curve = estimators.positionwise_nll(recs)
    _emit_rows(
        ("position", "value"),
        zip(curve.positions.tolist(), curve.values.tolist()),
        args,
        [args.records],
    )


def cmd_metrics_kl(args):
    p_curve = _read_curve(args.p)
    q_curve = _read_curve(args.q)
    curve = estimators.positionwise_kl(p_curve, q_curve)
    _emit_rows(
        ("position", "value"),
        zip(curve.positions.tolist(), curve.values.tolist()),
        args,
        [args.p, args.q],
    )


def cmd_metrics_smooth(args):
    curve = estimators.smooth_curve(_read_curve(args.curve), args.window)
    _emit_rows(
        ("position", "value", "smoothed"),
        zip(
            curve.positions.tolist(),
            curve.values.tolist(),
            curve.smoothed.tolist(),
        ),
        args,
        [args.curve],
    )


def cmd_metrics_avg(args):
    curve = _read_curve(args.curve)
    _emit_json({"value": estimators.avg_of(curve)}, args, [args.curve])


# ---------------------------------------------------------------- logprob ---


def cmd_logprob_validate(args):
    report = records.validate(args.records)
    print(report.summary())
    return 0 if report.ok else 2


def cmd_logprob_manifest(args):
    _require_seed(args, "the derangement is randomized")
    recs = records.read_records(args.records)
    ids = sorted({r.sample_id for r in recs if r.role == "conditional"})
    if not ids:
        raise InputError(f"{args.records}: no conditional records")
    manifest = records.make_shuffle_manifest(ids, args.seed)
    payload = {"seed": manifest.seed, "pairs": [list(p) for p in manifest.pairs]}
    _emit_json(payload, args, [args.records])


# ----------------------------------------------------------------- parser ---


def _model_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--model", type=Path, help="covariance model file")
    p.add_argument("--family", choices=("subvolume", "logfamily"))
    p.add_argument("--layers", type=int)
    p.add_argument("--gamma", type=float, default=gaussian.DEFAULT_GAMMA)
    p.add_argument("--rho", type=float, default=gaussian.DEFAULT_RHO)
    p.add_argument("--cap", type=int, default=gaussian.DEFAULT_LAYER_CAP)
    return p


def _out_flag() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out", type=Path, help="output path (default: stdout)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqmi",
        description="Mutual-information scaling toolkit for token sequences.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    groups = parser.add_subparsers(dest="group", required=True)
    model, out = _model_flags(), _out_flag()

    g = groups.add_parser("gaussian", help="hierarchical Gaussian chains").add_subparsers(
        dest="sub", required=True
    )
    p = g.add_parser("build", parents=[model, out], help="build and serialize a model")
    p.set_defaults(func=cmd_gaussian_build, command_name="gaussian build")
    p = g.add_parser("mi", parents=[model, out], help="exact or Monte-Carlo bipartite MI")
    p.add_argument("--ell", type=int, help="split position (X = 1..ell)")
    p.add_argument("--mc", type=int, metavar="N", help="Monte-Carlo with N samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--sweep", action="store_true", help="CSV series over layer counts")
    p.add_argument("--min-layers", type=int, default=1)
    p.add_argument("--max-layers", type=int, default=6)
    p.add_argument("--ratio", type=float, default=0.5, help="split fraction ell/L")
    p.set_defaults(func=cmd_gaussian_mi, command_name="gaussian mi")
    p = g.add_parser("twopoint", parents=[model, out], help="exact two-point MI")
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.set_defaults(func=cmd_gaussian_twopoint, command_name="gaussian twopoint")
    p = g.add_parser("sample", parents=[model, out], help="draw rows from the model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("ngf", "csv"), default="ngf")
    p.set_defaults(func=cmd_gaussian_sample, command_name="gaussian sample")
    p = g.add_parser("kl", parents=[model, out], help="per-position KL vs rescaled chain")
    p.add_argument("--q-std-scale", type=float, default=2.0)
    p.add_argument("--q-mean-shift", type=float, default=0.0)
    p.add_argument("--n", type=int, help="average over N sampled prefixes")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gaussian_kl, command_name="gaussian kl")

    g = groups.add_parser("ngram", help="token counting and corpus formats").add_subparsers(
        dest="sub", required=True
    )
    p = g.add_parser("count-unigrams", help="unigram counts to a table file")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_ngram_count_unigrams, command_name="ngram count-unigrams")
    p = g.add_parser("count-pairs", help="pair counts at one distance")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--distance", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_ngram_count_pairs, command_name="ngram count-pairs")
    p = g.add_parser("count-leading", help="first-two-token pairs after a split")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_ngram_count_leading, command_name="ngram count-leading")
    p = g.add_parser("convert", help="convert between corpus formats")
    p.add_argument("--infile", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--to", choices=("jsonl", "ngc"))
    p.set_defaults(func=cmd_ngram_convert, command_name="ngram convert")

    g = groups.add_parser("estimate", help="MI estimators over counts/records").add_subparsers(
        dest="sub", required=True
    )
    p = g.add_parser("twopoint", parents=[out], help="plug-in two-point MI from a corpus")
    p.add_argument("--corpus", type=Path, required=True)
    dist = p.add_mutually_exclusive_group(required=True)
    dist.add_argument("--distance", type=int)
    dist.add_argument("--distances", help="comma-separated list; emits a CSV series")
    p.add_argument("--marginal-mode", choices=("pooled", "coordinate"), default="pooled")
    p.set_defaults(func=cmd_estimate_twopoint, command_name="estimate twopoint")
    p = g.add_parser("bipartite-direct", parents=[out], help="difference of cross-entropies")
    p.add_argument("--conditional", type=Path, required=True)
    p.add_argument("--marginal", type=Path, required=True)
    p.add_argument("--leading-pairs", type=Path, help="table enabling the head correction")
    p.add_argument("--no-correction", action="store_true")
    p.set_defaults(func=cmd_estimate_direct, command_name="estimate bipartite-direct")
    p = g.add_parser("bipartite-vclub", parents=[out], help="contrastive upper-bound estimator")
    p.add_argument("--conditional", type=Path, required=True)
    p.add_argument("--shuffled", type=Path, required=True)
    p.add_argument("--manifest", type=Path)
    p.set_defaults(func=cmd_estimate_vclub, command_name="estimate bipartite-vclub")

    g = groups.add_parser("fit", help="scaling-law fits over (x, y) series").add_subparsers(
        dest="sub", required=True
    )
    for name, func in (
        ("powerlaw", cmd_fit_powerlaw),
        ("powerlaw-offset", cmd_fit_powerlaw_offset),
        ("log", cmd_fit_log),
        ("compare", cmd_fit_compare),
    ):
        p = g.add_parser(name, parents=[out])
        p.add_argument("--series", type=Path, required=True, help="CSV with x,y[,stderr]")
        p.add_argument("--weighted", action="store_true", help="weight by 1/stderr^2")
        p.set_defaults(func=func, command_name=f"fit {name}")
    p = g.add_parser("extrapolate", parents=[out], help="evaluate a stored fit")
    p.add_argument("--fit", type=Path, required=True, help="JSON from fit powerlaw*")
    p.add_argument("--x", type=float, required=True)
    p.set_defaults(func=cmd_fit_extrapolate, command_name="fit extrapolate")
    p = g.add_parser("l2m", parents=[out], help="required history dimension at length L")
    p.add_argument("--fit", type=Path, required=True)
    p.add_argument("--length", type=float, required=True)
    p.add_argument("--capacity", type=float, required=True, help="nats per dimension")
    p.add_argument("--log-vocab", type=float)
    p.set_defaults(func=cmd_fit_l2m, command_name="fit l2m")

    g = groups.add_parser("metrics", help="position-wise curves").add_subparsers(
        dest="sub", required=True
    )
    p = g.add_parser("nll", parents=[out], help="per-position NLL from records")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--role", choices=records.ROLES, default="conditional")
    p.set_defaults(func=cmd_metrics_nll, command_name="metrics nll")
    p = g.add_parser("kl", parents=[out], help="q-curve minus p-curve")
    p.add_argument("--p", type=Path, required=True, help="reference NLL curve CSV")
    p.add_argument("--q", type=Path, required=True, help="model NLL curve CSV")
    p.set_defaults(func=cmd_metrics_kl, command_name="metrics kl")
    p = g.add_parser("smooth", parents=[out], help="centered moving average")
    p.add_argument("--curve", type=Path, required=True)
    p.add_argument("--window", type=int, required=True)
    p.set_defaults(func=cmd_metrics_smooth, command_name="metrics smooth")
    p = g.add_parser("avg", parents=[out], help="mean of a curve")
    p.add_argument("--curve", type=Path, required=True)
    p.set_defaults(func=cmd_metrics_avg, command_name="metrics avg")

    g = groups.add_parser("logprob", help="log-prob record files").add_subparsers(
        dest="sub", required=True
    )
    p = g.add_parser("validate", help="schema-check a record file")
    p.add_argument("--records", type=Path, required=True)
    p.set_defaults(func=cmd_logprob_validate, command_name="logprob validate")
    p = g.add_parser("shuffle-manifest", parents=[out], help="seeded derangement of ids")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_logprob_manifest, command_name="logprob shuffle-manifest")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        code = args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return 2
    except ComputationError as exc:
        log.error("%s", exc)
        return 1
    except (OSError, ValueError) as exc:
        # malformed binary inputs and unreadable paths are input errors too
        log.error("%s", exc)
        return 2
    return 0 if code is None else int(code)


if __name__ == "__main__":
    sys.exit(main())
