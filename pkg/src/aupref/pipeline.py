"""End-to-end orchestration and output-bundle rendering.

Every artifact is rendered to bytes in memory first and then written into a
fresh directory that replaces the output path in one rename, so a failed run
never leaves partial output behind.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULT_PROTOCOLS, RunConfig
from .data_model import AU_COLUMNS, Cohort, load_cohort
from .dataset import Dataset, build_dataset
from .errors import AuprefError, ConfigError, DataError
from .fitting import (FitResult, _complete_pairs, decided_pairs, grid_fit_ensemble, grid_fit_integration,
                      grid_fit_valence, lopo_evaluate, parse_protocol, subset_outcome)
from .preference import PredictionOutcome
from .scoring import ENSEMBLE_MODELS, Standardizer, au4_valence, ensemble_score
from .stats import aspects_regression, bonferroni_threshold, correlation_report


class StageError(AuprefError):
    """Unexpected failure inside a pipeline stage."""


STAGES = ("load", "filter", "activate", "participant filter", "score", "fit/evaluate", "stats", "write")


class _stage:
    """Prefix errors raised inside a stage with the stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            return False
        if isinstance(exc, (ConfigError, DataError)):
            raise type(exc)(f"stage {self.name}: {exc}") from exc
        if isinstance(exc, AuprefError):
            raise StageError(f"stage {self.name}: {exc}") from exc
        if isinstance(exc, Exception):
            raise StageError(f"stage {self.name}: {type(exc).__name__}: {exc}") from exc
        return False


# ------------------------------------------------------------------ render


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def render_csv(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        values = [row[h] for h in header] if isinstance(row, dict) else row
        w.writerow([_cell(v) for v in values])
    return buf.getvalue().encode("utf-8")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) or math.isinf(obj) else float(obj)
    if isinstance(obj, frozenset):
        return sorted(obj)
    return obj


def render_json(obj) -> bytes:
    return (json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n").encode("utf-8")


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def protocol_slug(protocol: str) -> str:
    return protocol.replace(":", "__")


# ------------------------------------------------------------------ stages


def load_inputs(cfg: RunConfig) -> tuple[Cohort, dict]:
    paths = cfg.input_paths()
    cohort = load_cohort(paths["traces"], paths["annotations"], paths["scores"], cfg.thresholds)
    digests = {role: ({"file": Path(p).name, "sha256": sha256_file(p)} if p is not None else None)
               for role, p in paths.items()}
    return cohort, digests


CLIP_HEADER = ("participant_id", "session_id", "image_id", "clip_kind", "status",
               "excluded_fraction") + tuple(f"alpha_{c}" for c in AU_COLUMNS)


def clip_rows(ds: Dataset) -> list[tuple]:
    rows = []
    for c in sorted(ds.clips, key=lambda c: (c.participant_id, c.session_id, c.image_id, c.clip_kind)):
        act = c.activation if c.activation is not None else (None,) * len(AU_COLUMNS)
        rows.append((c.participant_id, c.session_id, c.image_id, c.clip_kind, c.status,
                     c.excluded_fraction) + tuple(act))
    return rows


PARTICIPANT_HEADER = ("participant_id", "status", "p80_baseline_alpha4", "n_baseline")


def participant_rows(ds: Dataset) -> list[tuple]:
    return [(p, ds.participant_status[p]["status"], ds.participant_status[p]["p80_baseline_alpha4"],
             ds.participant_status[p]["n_baseline"]) for p in ds.participants]


def fit_full(ds: Dataset, protocol: str, cfg: RunConfig) -> dict:
    """Fit a protocol's parameters on every included participant at once."""
    kind, model = parse_protocol(protocol)
    included = ds.included
    if not included:
        raise DataError("no included participants to fit on")
    pairs = ds.pairs[ds.pairs_for(included)]
    images = ds.images_for(included)
    out: dict = {"protocol": protocol, "n_pairs": int(pairs.shape[0]), "participants": included}
    if kind in ("valence_only", "integrated"):
        v = grid_fit_valence(pairs, ds.alpha4, cfg.grid, cfg.penalty)
        out.update(k=v.k, d=v.d, objective=v.objective, n_correct=v.n_correct, n_incorrect=v.n_incorrect)
    if kind == "valence_only" or (kind == "baseline" and model != "ensemble"):
        return out
    s_m = None
    if kind == "ensemble" or model == "ensemble":
        cols = np.column_stack([Standardizer.fit(ds.scores[m][images])(ds.scores[m]) for m in ENSEMBLE_MODELS])
        ok = _complete_pairs(pairs, *cols.T)
        e = grid_fit_ensemble(pairs[ok], cols, cfg.grid)
        out.update(w_ir=e.weights.w_ir, w_pick=e.weights.w_pick, w_hpsv2=e.weights.w_hpsv2,
                   ensemble_accuracy=e.accuracy)
        s_m = np.full(cols.shape[0], np.nan)
        rows = ~np.isnan(cols).any(axis=1)
        s_m[rows] = ensemble_score(e.weights, cols[rows, 0], cols[rows, 1], cols[rows, 2])
    if kind == "integrated":
        if s_m is None:
            if model not in ds.scores:
                raise DataError(f"no score column {model!r} in the cohort")
            s_m = Standardizer.fit(ds.scores[model][images])(ds.scores[model])
        s_au4 = au4_valence(ds.alpha4, out["k"])
        if cfg.standardize_valence:
            s_au4 = Standardizer.fit(s_au4[images])(s_au4)
        ok = _complete_pairs(pairs, s_m)
        i = grid_fit_integration(pairs[ok], s_m, s_au4, cfg.grid)
        out.update(a=i.a, integrated_accuracy=i.accuracy)
    return out


IMAGE_SCORE_HEADER = ("image_id", "participant_id", "session_id", "alpha4", "s_au4")


def image_score_rows(ds: Dataset, k: float) -> tuple[tuple, list[tuple]]:
    """AU4 valence at ``k`` plus every model score, raw and standardised over the valid images."""
    s_au4 = au4_valence(ds.alpha4, k) if ds.alpha4.size else np.zeros(0)
    models = sorted(ds.scores)
    std = {}
    for m in models:
        try:
            std[m] = Standardizer.fit(ds.scores[m])(ds.scores[m])
        except DataError:
            std[m] = np.full(len(ds.image_ids), np.nan)
    header = IMAGE_SCORE_HEADER + tuple(c for m in models for c in (m, f"z_{m}"))
    rows = []
    for r, iid in enumerate(ds.image_ids):
        rows.append((iid, ds.participants[ds.image_participant[r]], ds.image_session[r],
                     ds.alpha4[r], s_au4[r]) + tuple(v for m in models for v in (ds.scores[m][r], std[m][r])))
    return header, rows


DECISION_HEADER = ("participant_id", "preferred", "other", "score_preferred", "score_other", "decision")


def lopo_result(ds: Dataset, protocol: str, cfg: RunConfig) -> FitResult:
    return lopo_evaluate(ds, protocol, cfg.grid, cfg.penalty, standardize_valence=cfg.standardize_valence)


def evaluate_protocols(ds: Dataset, cfg: RunConfig) -> dict[str, FitResult]:
    return {p: lopo_result(ds, p, cfg) for p in cfg.protocols}


def evaluation_summary(results: dict[str, FitResult]) -> dict:
    """Pooled held-out outcomes; with a valence run, also each protocol on its decided pairs."""
    out = {}
    subset = decided_pairs(results["valence_only"]) if "valence_only" in results else None
    for p, r in results.items():
        row = {"pooled": r.pooled.to_dict()}
        if r.pooled_forced is not None:
            row["pooled_forced"] = r.pooled_forced.to_dict()
        if subset is not None and p != "valence_only":
            row["on_valence_decided_pairs"] = subset_outcome(r, subset).to_dict()
        out[p] = row
    return out


REPORT_HEADER = ("au", "test", "statistic", "p", "n", "passes_bonferroni", "n2", "note")
REGRESSION_HEADER = ("model", "n", "coef_alignment", "p_alignment", "coef_fidelity", "p_fidelity", "note")


def stats_tables(ds: Dataset, cfg: RunConfig) -> tuple[list[dict], list[dict], float]:
    reports = correlation_report(ds.alpha, ds.annotations, cfg.family_alpha)
    rows = [{"au": r.au, "test": r.test, "statistic": r.statistic, "p": r.p_value, "n": r.n,
             "passes_bonferroni": r.passes_bonferroni, "n2": r.n2, "note": r.note} for r in reports]
    alignment = [a.alignment for a in ds.annotations]
    fidelity = [a.fidelity for a in ds.annotations]
    reg = aspects_regression(alignment, fidelity, {m: ds.scores[m] for m in sorted(ds.scores)})
    reg = [{h: r.get(h) for h in REGRESSION_HEADER} for r in reg]
    return rows, reg, bonferroni_threshold(cfg.family_alpha, len(rows))


# ------------------------------------------------------------------ bundle


@dataclass
class ReportBundle:
    output: Path
    files: dict[str, bytes] = field(repr=False)
    summary: dict = field(repr=False)
    manifest: dict = field(repr=False)


def write_bundle(files: dict[str, bytes], output: str | os.PathLike) -> Path:
    """Write ``files`` into a fresh directory and move it over ``output``."""
    output = Path(output)
    if output.exists() and not (output / "manifest.json").exists():
        if output.is_dir() and not any(output.iterdir()):
            output.rmdir()
        else:
            raise ConfigError(f"refusing to replace {output}: it is not an aupref output bundle")
    output.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{output.name}.", dir=output.parent))
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.chmod(tmp, 0o777 & ~umask)
        for rel, data in sorted(files.items()):
            target = tmp / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        if output.exists():
            shutil.rmtree(output)
        os.replace(tmp, output)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return output


def run_pipeline(cfg: RunConfig) -> ReportBundle:
    """Load, filter, activate, fit, evaluate and analyse; write one output bundle."""
    files: dict[str, bytes] = {}
    with _stage("load"):
        cohort, digests = load_inputs(cfg)
        if digests["scores"] is None and cfg.protocols == DEFAULT_PROTOCOLS:
            # without a score table only the AU4 protocol can run
            cfg = replace(cfg, protocols=("valence_only",))
    with _stage("filter"):
        ds = build_dataset(cohort, cfg.thresholds)
    with _stage("activate"):
        files["clips.csv"] = render_csv(CLIP_HEADER, clip_rows(ds))
    with _stage("participant filter"):
        files["participants.csv"] = render_csv(PARTICIPANT_HEADER, participant_rows(ds))
        if len(ds.included) < 2:
            raise DataError(f"only {len(ds.included)} participant(s) pass the reliability filter")
    with _stage("score"):
        full = fit_full(ds, "valence_only", cfg)
        header, rows = image_score_rows(ds, full["k"])
        files["image_scores.csv"] = render_csv(header, rows)
    with _stage("fit/evaluate"):
        results = evaluate_protocols(ds, cfg)
        fits = {}
        for p, r in results.items():
            slug = protocol_slug(p)
            files[f"fits/{slug}.json"] = render_json(r.to_dict())
            files[f"decisions/{slug}.csv"] = render_csv(DECISION_HEADER, r.decisions)
            fits[p] = fit_full(ds, p, cfg)
        files["full_fits.json"] = render_json(fits)
        summary = evaluation_summary(results)
    with _stage("stats"):
        report, regression, threshold = stats_tables(ds, cfg)
        files["stats/correlations.csv"] = render_csv(REPORT_HEADER, report)
        files["stats/correlations.json"] = render_json({"bonferroni_threshold": threshold, "rows": report})
        files["stats/regression.csv"] = render_csv(REGRESSION_HEADER, regression)
    summary = {
        "evaluation": summary,
        "n_images": len(ds.image_ids),
        "n_pairs": int(ds.pairs.shape[0]),
        "participants": {"total": len(ds.participants), "included": len(ds.included)},
        "significant_tests": [f"au{r['au']}:{r['test']}" for r in report if r["passes_bonferroni"]],
    }
    files["summary.json"] = render_json(summary)
    manifest = {
        "package": "aupref",
        "version": __version__,
        "config": cfg.to_dict(locations=False),
        "config_sha256": cfg.digest(),
        "inputs": digests,
        "outputs": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(files.items())},
    }
    files["manifest.json"] = render_json(manifest)
    with _stage("write"):
        out = write_bundle(files, cfg.output)
    return ReportBundle(out, files, summary, manifest)


def render_report(bundle_dir: str | os.PathLike) -> str:
    """Plain-text digest of an output bundle."""
    bundle_dir = Path(bundle_dir)
    try:
        summary = json.loads((bundle_dir / "summary.json").read_text(encoding="utf-8"))
        manifest = json.loads((bundle_dir / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{bundle_dir} is not an output bundle: {exc.filename} missing") from exc
    lines = [f"aupref {manifest['version']}  config {manifest['config_sha256'][:12]}",
             f"images {summary['n_images']}  pairs {summary['n_pairs']}  participants "
             f"{summary['participants']['included']}/{summary['participants']['total']} included",
             "",
             f"{'protocol':32s} {'accuracy':>9s} {'selected':>9s} {'decided':>8s} {'subset acc':>10s}"]
    for p, row in summary["evaluation"].items():
        pooled = row["pooled"]
        sub = row.get("on_valence_decided_pairs")
        sub_txt = f"{sub['accuracy']:10.4f}" if sub else f"{'':10s}"
        lines.append(f"{p:32s} {pooled['accuracy']:9.4f} {pooled['selection_rate']:9.3f} "
                     f"{pooled['n_correct'] + pooled['n_incorrect']:8d} {sub_txt}")
        if "pooled_forced" in row:
            f = row["pooled_forced"]
            lines.append(f"{p + ' (forced)':32s} {f['accuracy']:9.4f} {f['selection_rate']:9.3f} "
                         f"{f['n_correct'] + f['n_incorrect']:8d}")
    lines.append("")
    sig = summary["significant_tests"]
    lines.append(f"tests passing Bonferroni: {len(sig)}" + (f" ({', '.join(sig)})" if sig else ""))
    return "\n".join(lines) + "\n"


def outcome_line(name: str, o: PredictionOutcome) -> str:
    return (f"{name}: accuracy {o.accuracy:.4f} on {o.decided} decided of {o.total} pairs "
            f"(selection {o.selection_rate:.3f}, objective {o.objective})")
