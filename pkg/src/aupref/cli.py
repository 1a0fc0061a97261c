"""Command-line interface.

Exit codes: 0 success, 2 invalid configuration, 3 bad input data, 4 internal error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__, pipeline
from .config import RunConfig, load_config
from .dataset import build_dataset
from .data_model import save_cohort
from .errors import AuprefError, ConfigError, DataError
from .loss_kit import selfcheck
from .synth import SynthSpec, generate_synthetic_cohort

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


def _emit(data: bytes | str, target: str | None) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    if target in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(target).parent.mkdir(parents=True, exist_ok=True)
        Path(target).write_bytes(data)


def _input_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("inputs")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--input-dir", help="directory holding traces.csv, annotations.json and scores.csv")
    g.add_argument("--traces", help="AU trace CSV")
    g.add_argument("--annotations", help="annotation JSON")
    g.add_argument("--scores", help="model score CSV")


def _setting_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("settings (override the config file)")
    g.add_argument("--fdcs-min", type=float)
    g.add_argument("--yir-range", type=float, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--pir-range", type=float, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--clip-exclusion-fraction", "--clip-excl", type=float, dest="clip_exclusion_fraction")
    g.add_argument("--pair-policy", choices=("either", "reaction"))
    for name in ("k", "d", "a"):
        g.add_argument(f"--{name}-range", type=float, nargs=2, metavar=("LO", "HI"))
        g.add_argument(f"--{name}-step", type=float)
    g.add_argument("--w-step", type=float)
    g.add_argument("--penalty", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--protocol", action="append", dest="protocols",
                   help="valence_only, ensemble, baseline:<model> or integrated:<model>; repeatable")
    g.add_argument("--standardize-valence", action="store_true", default=None)
    g.add_argument("--family-alpha", type=float)


_OVERRIDE_KEYS = ("fdcs_min", "yir_range", "pir_range", "clip_exclusion_fraction", "pair_policy",
                  "k_range", "k_step", "d_range", "d_step", "a_range", "a_step", "w_step",
                  "penalty", "seed", "protocols", "standardize_valence", "family_alpha",
                  "input_dir", "traces", "annotations", "scores", "output")


def _config(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    if overrides.get("output") == "-":
        overrides.pop("output")
    return load_config(getattr(args, "config", None), overrides)


def _dataset(cfg: RunConfig):
    cohort, _ = pipeline.load_inputs(cfg)
    return cohort, build_dataset(cohort, cfg.thresholds)


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    cfg = _config(args)
    cohort, digests = pipeline.load_inputs(cfg)
    if args.output not in (None, "-"):
        save_cohort(cohort, args.output)
    summary = {"participants": len(cohort.participants), "sessions": len(cohort.sessions),
               "images": len(cohort.image_ids), "clips": len(cohort.traces),
               "score_models": list(cohort.scores.models), "inputs": digests}
    sys.stdout.buffer.write(pipeline.render_json(summary))
    return EXIT_OK


def cmd_filter(args) -> int:
    cfg = _config(args)
    _, ds = _dataset(cfg)
    rows = [r[:6] for r in pipeline.clip_rows(ds)]
    _emit(pipeline.render_csv(pipeline.CLIP_HEADER[:6], rows), args.output)
    return EXIT_OK


def cmd_activate(args) -> int:
    cfg = _config(args)
    _, ds = _dataset(cfg)
    _emit(pipeline.render_csv(pipeline.CLIP_HEADER, pipeline.clip_rows(ds)), args.output)
    if args.participants:
        _emit(pipeline.render_csv(pipeline.PARTICIPANT_HEADER, pipeline.participant_rows(ds)), args.participants)
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = _config(args)
    _, ds = _dataset(cfg)
    k = args.k if args.k is not None else pipeline.fit_full(ds, "valence_only", cfg)["k"]
    header, rows = pipeline.image_score_rows(ds, k)
    _emit(pipeline.render_csv(header, rows), args.output)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    _, ds = _dataset(cfg)
    fits = {}
    for p in cfg.protocols:
        out = pipeline.lopo_result(ds, p, cfg).to_dict()
        out["full_data"] = pipeline.fit_full(ds, p, cfg)
        fits[p] = out
    _emit(pipeline.render_json(fits[cfg.protocols[0]] if len(fits) == 1 else fits), args.output)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    _, ds = _dataset(cfg)
    results = pipeline.evaluate_protocols(ds, cfg)
    files = {}
    for p, r in results.items():
        slug = pipeline.protocol_slug(p)
        files[f"fits/{slug}.json"] = pipeline.render_json(r.to_dict())
        files[f"decisions/{slug}.csv"] = pipeline.render_csv(pipeline.DECISION_HEADER, r.decisions)
    summary = pipeline.evaluation_summary(results)
    files["evaluation.json"] = pipeline.render_json(summary)
    if args.output in (None, "-"):
        sys.stdout.buffer.write(files["evaluation.json"])
    else:
        pipeline.write_bundle({**files, "manifest.json": pipeline.render_json({"config": cfg.to_dict(False)})},
                              args.output)
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _config(args)
    _, ds = _dataset(cfg)
    report, regression, threshold = pipeline.stats_tables(ds, cfg)
    csv_bytes = pipeline.render_csv(pipeline.REPORT_HEADER, report)
    if args.output in (None, "-"):
        sys.stdout.buffer.write(csv_bytes)
        return EXIT_OK
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "correlations.csv").write_bytes(csv_bytes)
    (out / "correlations.json").write_bytes(
        pipeline.render_json({"bonferroni_threshold": threshold, "rows": report}))
    (out / "regression.csv").write_bytes(pipeline.render_csv(pipeline.REGRESSION_HEADER, regression))
    return EXIT_OK


_SYNTH_FLAGS = {f.name: f.name.replace("_", "-") for f in fields(SynthSpec)}


def cmd_synth(args) -> int:
    values = {k: getattr(args, k) for k in _SYNTH_FLAGS if getattr(args, k) is not None}
    try:
        spec = SynthSpec(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cohort = generate_synthetic_cohort(spec, args.seed)
    out = Path(args.output)
    if out.exists() and any(out.iterdir()) and not (out / "traces.csv").exists():
        raise ConfigError(f"refusing to write a cohort into non-empty directory {out}")
    save_cohort(cohort, out)
    (out / "synth.json").write_bytes(pipeline.render_json({"seed": args.seed, "spec": spec.to_dict()}))
    print(out)
    return EXIT_OK


def cmd_losscheck(args) -> int:
    rows = selfcheck(n_batches=args.batches, seed=args.seed or 0)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    failed = sum(not ok for _, ok, _ in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_OK if not failed else EXIT_INTERNAL


def cmd_report(args) -> int:
    _emit(pipeline.render_report(args.bundle), args.output)
    return EXIT_OK


def cmd_run(args) -> int:
    if not (args.input_dir or args.traces or args.config) and not sys.stdin.isatty():
        # accept a cohort directory piped from `aupref synth`
        piped = sys.stdin.read().strip().splitlines()
        if piped:
            args.input_dir = piped[-1].strip()
    cfg = _config(args)
    bundle = pipeline.run_pipeline(cfg)
    sys.stdout.write(pipeline.render_report(bundle.output))
    print(f"wrote {bundle.output}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aupref", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aupref {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, inputs=True, output_help="output path ('-' for stdout)"):
        p = sub.add_parser(name, help=help_, description=help_)
        if inputs:
            _input_args(p)
            _setting_args(p)
        p.add_argument("-o", "--output", default=None, help=output_help)
        p.set_defaults(func=func)
        return p

    add("ingest", cmd_ingest, "validate inputs and print a summary", output_help="directory for a normalised copy")
    add("filter", cmd_filter, "per-clip frame filtering verdicts as CSV")
    p = add("activate", cmd_activate, "per-clip AU activation values as CSV")
    p.add_argument("--participants", help="also write participant reliability CSV here")
    p = add("score", cmd_score, "per-image AU4 valence and standardised model scores as CSV")
    p.add_argument("--k", type=float, help="decay coefficient (default: fitted on all included participants)")
    add("fit", cmd_fit, "leave-one-participant-out fits per protocol, as JSON")
    add("evaluate", cmd_evaluate, "leave-one-participant-out evaluation",
        output_help="bundle directory (default: summary JSON on stdout)")
    add("stats", cmd_stats, "AU association tests and score regressions",
        output_help="directory for CSV and JSON reports (default: CSV on stdout)")

    p = sub.add_parser("synth", help="write a synthetic cohort directory and print its path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", "--out", required=True, dest="output")
    for name, flag in _SYNTH_FLAGS.items():
        typ = next(f.type for f in fields(SynthSpec) if f.name == name)
        p.add_argument(f"--{flag}", type=int if typ in (int, "int") else float, dest=name)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("losscheck", help="run the loss-kit weight and gradient checks")
    p.add_argument("--batches", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_losscheck)

    p = sub.add_parser("report", help="summarise an output bundle")
    p.add_argument("bundle")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_report)

    add("run", cmd_run, "run every stage and write one output bundle",
        output_help="bundle directory (default aupref-out)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"aupref: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"aupref: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AuprefError, Exception) as exc:
        print(f"aupref: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
