"""Deterministic synthetic cohorts with a planted AU4 signal.

Each image has two latent traits, alignment and fidelity, drawn from a standard
normal. Their normalised sum is the latent quality ``q``; sessions are ranked by
``q`` and the reaction clip carries an AU4 burst whose amplitude falls as ``q``
rises. Other AUs burst at random, independent of quality. Model scores follow
the latents with per-model noise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .data_model import (AU4_COLUMN, AU_IDS, EMOTIONS, SCORE_MODELS, AnnotationRecord, AUTrace,
                         Cohort, ScoreTable, Session)
from .errors import ConfigError
from .frame_filter import FilterThresholds

_DECIMALS = 5


@dataclass(frozen=True)
class SynthSpec:
    n_participants: int = 30
    sessions_per_participant: int = 10
    images_per_session: int = 5
    fps: int = 30
    clip_seconds: float = 5.0
    burst_amplitude: float = 1.5  # AU4 peak for an image of average quality
    noise: float = 1.0  # std of the Gaussian perturbation on each AU4 burst amplitude
    jitter_ratio: float = 0.1  # per-frame jitter std as a fraction of ``noise``
    score_noise: float = 1.0
    dropout_rate: float = 0.0  # chance a frame has no detected face
    bad_clip_rate: float = 0.0  # chance a clip has too many low-confidence frames
    n_unreliable: int = 0  # participants whose baseline clips also show AU4 bursts

    def __post_init__(self):
        if self.n_participants < 1:
            raise ConfigError("synthetic cohort needs at least one participant")
        if self.sessions_per_participant < 1:
            raise ConfigError("synthetic cohort needs at least one session per participant")
        if not 1 <= self.images_per_session <= 5:
            raise ConfigError("images_per_session must lie in 1..5")
        if self.fps < 1 or self.clip_seconds <= 0:
            raise ConfigError("fps and clip length must be positive")
        if self.burst_amplitude < 0 or self.noise < 0 or self.score_noise < 0 or self.jitter_ratio < 0:
            raise ConfigError("amplitudes and noise levels must be non-negative")
        if not (0 <= self.dropout_rate < 1 and 0 <= self.bad_clip_rate <= 1):
            raise ConfigError("rates must lie in [0, 1)")
        if not 0 <= self.n_unreliable <= self.n_participants:
            raise ConfigError("n_unreliable must lie in 0..n_participants")

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.clip_seconds))

    def to_dict(self) -> dict:
        return asdict(self)


def au4_amplitude(q, burst_amplitude: float):
    """Noise-free AU4 peak; strictly decreasing in quality ``q``."""
    q = np.asarray(q, dtype=np.float64)
    return burst_amplitude * np.logaddexp(0.0, -1.5 * q) / math.log(2.0)


def _bump(n: int, centre: int, half_width: int) -> np.ndarray:
    t = np.arange(n, dtype=np.float64)
    x = (t - centre) / half_width
    out = 0.5 * (1.0 + np.cos(np.pi * x))
    out[np.abs(x) >= 1.0] = 0.0
    return out


def _rating(rng, centre, spread=0.5) -> int:
    return int(np.clip(np.rint(4.0 + 1.5 * centre + rng.normal(0.0, spread)), 1, 7))


def _clip(rng, spec: SynthSpec, ids, kind: str, au4_peak: float) -> AUTrace:
    n = spec.n_frames
    fps = spec.fps
    half = max(1, fps // 2)
    lo_c = min(n - 1, fps + half)
    hi_c = max(lo_c + 1, n - half)
    jitter = spec.noise * spec.jitter_ratio

    inten = np.tile(rng.uniform(0.0, 0.2, size=len(AU_IDS)), (n, 1))
    for j in range(len(AU_IDS)):
        if j == AU4_COLUMN:
            continue
        if rng.random() < 0.3:
            inten[:, j] += rng.uniform(0.2, 1.5) * _bump(n, int(rng.integers(lo_c, hi_c)), half)
    if au4_peak > 0:
        inten[:, AU4_COLUMN] += au4_peak * _bump(n, int(rng.integers(lo_c, hi_c)), half)
    if jitter > 0:
        inten += rng.normal(0.0, jitter, size=inten.shape)

    fdcs = rng.uniform(0.93, 0.99, size=n)
    left = 40.0 + rng.normal(0.0, 1.0, size=n)
    right = 40.0 + rng.normal(0.0, 1.0, size=n)
    eyes = 60.0 + rng.normal(0.0, 0.5, size=n)
    nostrils = 0.7 * eyes + rng.normal(0.0, 1.0, size=n)
    if rng.random() < spec.bad_clip_rate:
        bad = rng.choice(n, size=int(math.ceil(0.3 * n)), replace=False)
        fdcs[bad] = rng.uniform(0.5, 0.85, size=bad.size)
    geometry = [np.round(fdcs, 4), np.round(left, 2), np.round(right, 2), np.round(nostrils, 2), np.round(eyes, 2)]
    inten = np.round(inten, _DECIMALS)
    if spec.dropout_rate > 0:
        drop = rng.random(n) < spec.dropout_rate
        inten[drop] = np.nan
        for g in geometry:
            g[drop] = np.nan
    return AUTrace(*ids, kind, fps, inten, *geometry)


def _emotions(rng, q: float) -> frozenset[str]:
    out = set()
    if q + rng.normal(0.0, 0.5) > 0.5:
        out.add("satisfied")
    if q + rng.normal(0.0, 0.5) < -0.5:
        out.add("disappointed")
    if q + rng.normal(0.0, 0.5) < -1.2:
        out.add("disgusted")
    if q + rng.normal(0.0, 0.5) > 1.0:
        out.add("amused")
    if rng.random() < 0.1:
        out.add("surprised")
    if rng.random() < 0.03:
        out.add("scared")
    return frozenset(e for e in EMOTIONS if e in out)


def _scores(rng, align: float, fid: float, sn: float) -> list[float]:
    by_model = {
        "clip_score": 30.0 + 2.0 * (0.5 * align + rng.normal(0.0, 2.0 * sn)),
        "aesthetic_score": 5.0 + 0.5 * (0.3 * fid + rng.normal(0.0, 2.0 * sn)),
        "blip_score": 0.4 + 0.05 * (0.5 * align + rng.normal(0.0, 1.5 * sn)),
        "imagereward_score": 0.2 + 1.0 * (0.9 * align + 0.2 * fid + rng.normal(0.0, sn)),
        "pickscore": 20.0 + 0.5 * (0.8 * align + 0.2 * fid + rng.normal(0.0, sn)),
        "hpsv2_score": 0.27 + 0.01 * (0.8 * align + 0.3 * fid + rng.normal(0.0, sn)),
    }
    return [round(by_model[m], 6) for m in SCORE_MODELS]


def generate_synthetic_cohort(spec: SynthSpec | None = None, seed: int = 0,
                              thresholds: FilterThresholds | None = None) -> Cohort:
    spec = spec or SynthSpec()
    root = np.random.SeedSequence(int(seed))
    traces = {}
    sessions = []
    score_ids, score_rows = [], []
    for p_idx, child in enumerate(root.spawn(spec.n_participants)):
        rng = np.random.default_rng(child)
        pid = f"P{p_idx + 1:02d}"
        unreliable = p_idx >= spec.n_participants - spec.n_unreliable
        expressivity = rng.uniform(0.7, 1.3)
        for s_idx in range(spec.sessions_per_participant):
            sid = f"{pid}-S{s_idx + 1:02d}"
            k = spec.images_per_session
            align = rng.normal(size=k)
            fid = rng.normal(size=k)
            q = (align + fid) / math.sqrt(2.0)
            order = np.argsort(-q, kind="stable")
            rank = np.empty(k, dtype=np.int64)
            rank[order] = np.arange(1, k + 1)
            peaks = au4_amplitude(q, spec.burst_amplitude) * expressivity
            if spec.noise > 0:
                peaks = np.maximum(peaks + rng.normal(0.0, spec.noise, size=k), 0.0)
            records = []
            for i in range(k):
                iid = f"{sid}-I{i + 1}"
                ids = (pid, sid, iid)
                base_peak = rng.uniform(1.0, 2.0) if unreliable and rng.random() < 0.9 else 0.0
                traces[ids + ("baseline",)] = _clip(rng, spec, ids, "baseline", base_peak)
                traces[ids + ("reaction",)] = _clip(rng, spec, ids, "reaction", float(peaks[i]))
                records.append(AnnotationRecord(
                    image_id=iid,
                    overall=_rating(rng, q[i]),
                    alignment=_rating(rng, align[i]),
                    fidelity=_rating(rng, fid[i]),
                    emotions=_emotions(rng, q[i]),
                    rank=int(rank[i]),
                ))
                score_ids.append(iid)
                score_rows.append(_scores(rng, align[i], fid[i], spec.score_noise))
            sessions.append(Session(pid, sid, f"synthetic prompt {sid}", tuple(records)))
    scores = ScoreTable(tuple(score_ids), SCORE_MODELS, np.array(score_rows, dtype=np.float64))
    return Cohort(traces, tuple(sessions), scores, thresholds or FilterThresholds())
