"""Command-line front end: evaluate, fit, apply, synth, plot.

Exit codes: 0 on success, 2 on input or validation errors, 3 on numerical
failures.  Every subcommand is deterministic given identical inputs and
flags; reports echo the full flag set so a run can be reproduced.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .core import (
    NumericalError,
    ValidationError,
    _read_matrix_csv,
    inverse_sigmoid,
    load_dataset,
)
from .metrics import BinStats, ReliabilityCurve
from .protocol import FIRST_MINUTES, HELD_OUT, SplitSpec, run_benchmark
from .report import (
    Report,
    emit_report,
    load_report,
    render_reliability_svg,
)
from .scaling import FitConfig, apply_scaling, load_params, save_params
from .synth import LatentSpec, SynthConfig, write_fixture

POOLED_ALIAS = ("pooled", "all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlcalib",
        description=(
            "Evaluate multi-label classifier calibration from saved predictions "
            "and improve it with post hoc temperature or Platt scaling."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    dataset_in = argparse.ArgumentParser(add_help=False)
    dataset_in.add_argument("--predictions", required=True, help="predictions CSV")
    dataset_in.add_argument("--labels", required=True, help="binary labels CSV")
    dataset_in.add_argument("--manifest", required=True, help="manifest JSON")
    dataset_in.add_argument(
        "--probabilities",
        action="store_true",
        help="prediction cells are probabilities in [0,1] instead of logits",
    )
    dataset_in.add_argument(
        "--eps", type=float, default=1e-7, help="probability clamp for logit recovery"
    )

    reporting = argparse.ArgumentParser(add_help=False)
    reporting.add_argument("--bins", type=int, default=15, help="reliability bins M")
    reporting.add_argument(
        "--target-fraction",
        type=float,
        default=0.5,
        help="positive mass captured by the frequent class subset",
    )
    reporting.add_argument(
        "--per-class", action="store_true", help="include the per-class table"
    )
    reporting.add_argument("--out", default=".", help="output directory")
    reporting.add_argument("--format", choices=("json", "csv"), default="json")
    reporting.add_argument(
        "--svg", action="store_true", help="also write reliability diagrams"
    )
    reporting.add_argument(
        "--tag", default=None, help="model tag for report rows (default: predictions stem)"
    )

    sub.add_parser(
        "evaluate",
        parents=[dataset_in, reporting],
        help="compute discrimination and calibration metrics",
    )

    fit_p = sub.add_parser(
        "fit",
        parents=[dataset_in, reporting],
        help="fit scaling parameters on a calibration split and compare",
    )
    fit_p.add_argument("--method", choices=("ts", "ps"), required=True)
    fit_p.add_argument("--scope", choices=("global", "per-class"), default="global")
    split_group = fit_p.add_mutually_exclusive_group(required=True)
    split_group.add_argument(
        "--first-minutes",
        type=float,
        help="per dataset, the leading clips covering this many minutes calibrate",
    )
    split_group.add_argument(
        "--calib-dataset", help="dataset_id used as the held-out calibration set"
    )
    fit_p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    fit_p.add_argument("--steps", type=int, default=1000, help="Adam step count")

    apply_p = sub.add_parser(
        "apply", help="apply saved scaling parameters to a predictions file"
    )
    apply_p.add_argument("--predictions", required=True)
    apply_p.add_argument("--probabilities", action="store_true")
    apply_p.add_argument("--eps", type=float, default=1e-7)
    apply_p.add_argument("--params", required=True, help="params JSON from fit")
    apply_p.add_argument("--out", default=".")

    synth_p = sub.add_parser("synth", help="write a synthetic fixture file triple")
    synth_p.add_argument("--n", type=int, required=True, help="sample count")
    synth_p.add_argument("--classes", type=int, required=True, help="class count")
    synth_p.add_argument(
        "--true-t", default="1.0", help="generator temperature (scalar or comma list)"
    )
    synth_p.add_argument(
        "--true-b", default="0.0", help="generator bias (scalar or comma list)"
    )
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--dataset-id", default="synth")
    synth_p.add_argument("--clip-duration", type=float, default=5.0)
    synth_p.add_argument("--stddev", type=float, default=2.0, help="latent stddev")
    synth_p.add_argument(
        "--latent-means", default=None, help="comma-separated per-class latent means"
    )
    synth_p.add_argument("--out", default=".")

    plot_p = sub.add_parser("plot", help="render reliability diagrams from a report")
    plot_p.add_argument("--report", required=True, help="report JSON path")
    plot_p.add_argument(
        "--scope",
        default="pooled",
        help="scope to draw ('pooled' picks the All scope or the only one)",
    )
    plot_p.add_argument("--out", default=".")

    return parser


def _echo(args: argparse.Namespace) -> dict:
    pairs = sorted(vars(args).items())
    return {key: value for key, value in pairs}


def _slug(text: str) -> str:
    return "".join(ch if (ch.isalnum() or ch in "-_") else "-" for ch in text)


def _model_tag(args) -> str:
    if getattr(args, "tag", None):
        return args.tag
    stem = os.path.basename(args.predictions)
    return stem.rsplit(".", 1)[0] if "." in stem else stem


def _write_svgs(result_rows, result_curves, out_dir: str) -> list:
    """One diagram per scope, overlaying Base and calibrated curves; legend
    MCS values come from the matching report rows."""
    scopes = list(dict.fromkeys(c.scope for c in result_curves))
    written = []
    for scope in scopes:
        entries = [c for c in result_curves if c.scope == scope]
        mcs = []
        for entry in entries:
            row = next(
                r for r in result_rows if r.scope == scope and r.method == entry.method
            )
            mcs.append(row.scores.mcs)
        svg = render_reliability_svg(
            [e.curve for e in entries],
            labels=[e.method for e in entries],
            mcs_values=mcs,
            title=scope,
        )
        path = os.path.join(out_dir, f"reliability_{_slug(scope)}.svg")
        with open(path, "w", newline="") as fh:
            fh.write(svg)
        written.append(path)
    return written


def _params_doc(params, trace) -> dict:
    doc = params.to_json_dict()
    doc["trace"] = trace.to_json_dict()
    return doc


def cmd_evaluate(args) -> int:
    dataset = load_dataset(
        args.predictions, args.labels, args.manifest, args.probabilities, args.eps
    )
    result = run_benchmark(
        dataset,
        m_bins=args.bins,
        target_fraction=args.target_fraction,
        include_per_class=args.per_class,
        model_tag=_model_tag(args),
    )
    os.makedirs(args.out, exist_ok=True)
    report = Report(
        config=_echo(args),
        rows=result.rows,
        curves=result.curves,
        params={},
        split_summary=None,
    )
    emit_report(report, args.format, os.path.join(args.out, f"report.{args.format}"))
    if args.svg:
        _write_svgs(result.rows, result.curves, args.out)
    return 0


def cmd_fit(args) -> int:
    dataset = load_dataset(
        args.predictions, args.labels, args.manifest, args.probabilities, args.eps
    )
    if args.first_minutes is not None:
        split = SplitSpec(kind=FIRST_MINUTES, minutes=args.first_minutes)
    else:
        split = SplitSpec(kind=HELD_OUT, calib_dataset=args.calib_dataset)
    cfg = FitConfig(lr=args.lr, steps=args.steps)
    result = run_benchmark(
        dataset,
        m_bins=args.bins,
        split=split,
        methods=[(args.method, args.scope)],
        fit_cfg=cfg,
        target_fraction=args.target_fraction,
        include_per_class=args.per_class,
        model_tag=_model_tag(args),
    )
    os.makedirs(args.out, exist_ok=True)
    label = f"{args.method}/{args.scope}"
    params, trace = result.params[label]
    save_params(params, trace, os.path.join(args.out, "params.json"))
    report = Report(
        config=_echo(args),
        rows=result.rows,
        curves=result.curves,
        params={label: _params_doc(params, trace)},
        split_summary=result.split_summary,
    )
    emit_report(report, args.format, os.path.join(args.out, f"report.{args.format}"))
    if args.svg:
        _write_svgs(result.rows, result.curves, args.out)
    return 0


def cmd_apply(args) -> int:
    classes, ids, values = _read_matrix_csv(args.predictions, "predictions")
    params = load_params(args.params)
    if params.scope == "per-class":
        if params.classes is not None and tuple(params.classes) != classes:
            raise ValidationError(
                "params classes do not match predictions classes "
                f"({len(params.classes)} vs {len(classes)})"
            )
    if args.probabilities:
        if np.any(values < 0.0) or np.any(values > 1.0) or not np.all(np.isfinite(values)):
            raise ValidationError(
                f"probability outside [0, 1] in {args.predictions}"
            )
        logits = inverse_sigmoid(values, args.eps)
    else:
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"non-finite value in {args.predictions}")
        logits = values
    conf = apply_scaling(logits, params)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "calibrated.csv")
    with open(path, "w", newline="") as fh:
        fh.write("sample_id," + ",".join(classes) + "\n")
        for i, sample_id in enumerate(ids):
            cells = ",".join(repr(float(v)) for v in conf[i])
            fh.write(f"{sample_id},{cells}\n")
    return 0


def _scalar_or_list(text: str, name: str):
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ValidationError(f"{name} must be a number or comma-separated numbers")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"{name} must be numeric, got {text!r}") from None
    return values[0] if len(values) == 1 else tuple(values)


def cmd_synth(args) -> int:
    means = None
    if args.latent_means is not None:
        parsed = _scalar_or_list(args.latent_means, "--latent-means")
        means = (parsed,) if isinstance(parsed, float) else parsed
    cfg = SynthConfig(
        n=args.n,
        c=args.classes,
        true_t=_scalar_or_list(args.true_t, "--true-t"),
        true_b=_scalar_or_list(args.true_b, "--true-b"),
        seed=args.seed,
        dataset_id=args.dataset_id,
        clip_duration_s=args.clip_duration,
        latent=LatentSpec(means=means, stddev=args.stddev),
    )
    paths = write_fixture(cfg, args.out)
    print("\n".join(f"wrote {paths[key]}" for key in ("predictions", "labels", "manifest", "truth")))
    return 0


def cmd_plot(args) -> int:
    doc = load_report(args.report)
    curves_doc = doc.get("curves") or []
    if not curves_doc:
        raise ValidationError(f"report {args.report} carries no curves")
    scopes = list(dict.fromkeys(c["scope"] for c in curves_doc))
    wanted = args.scope
    if wanted.lower() in POOLED_ALIAS:
        wanted = "All" if "All" in scopes else scopes[0]
    if wanted not in scopes:
        raise ValidationError(
            f"scope {wanted!r} not in report (available: {', '.join(scopes)})"
        )
    entries = [c for c in curves_doc if c["scope"] == wanted]
    curves = []
    labels = []
    mcs_values = []
    for entry in entries:
        bins = tuple(
            BinStats(
                index=b["index"],
                lower=b["lower"],
                upper=b["upper"],
                count=b["count"],
                conf=b["conf"],
                acc=b["acc"],
            )
            for b in entry["bins"]
        )
        curves.append(ReliabilityCurve(bins=bins, n=entry["n"], scope=entry["scope"]))
        labels.append(entry["method"])
        row = next(
            (
                r
                for r in doc["rows"]
                if r["scope"] == wanted and r["method"] == entry["method"]
            ),
            None,
        )
        if row is None:
            raise ValidationError(
                f"report row missing for scope {wanted!r} method {entry['method']!r}"
            )
        mcs_values.append(row["mcs"])
    svg = render_reliability_svg(curves, labels=labels, mcs_values=mcs_values, title=wanted)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"reliability_{_slug(wanted)}.svg")
    with open(path, "w", newline="") as fh:
        fh.write(svg)
    print(f"wrote {path}")
    return 0


_DISPATCH = {
    "evaluate": cmd_evaluate,
    "fit": cmd_fit,
    "apply": cmd_apply,
    "synth": cmd_synth,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
