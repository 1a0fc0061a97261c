"""Domain types and file I/O for AU traces, annotations and baseline scores."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError
from .frame_filter import FilterThresholds


class AU(IntEnum):
    AU1 = 1    # inner brow raiser
    AU2 = 2    # outer brow raiser
    AU4 = 4    # brow lowerer
    AU5 = 5    # upper lid raiser
    AU6 = 6    # cheek raiser
    AU9 = 9    # nose wrinkler
    AU12 = 12  # lip corner puller
    AU15 = 15  # lip corner depressor
    AU17 = 17  # chin raiser
    AU20 = 20  # lip stretcher
    AU25 = 25  # lips part
    AU26 = 26  # jaw drop


AU_IDS: tuple[int, ...] = tuple(int(a) for a in AU)
AU4_COLUMN = AU_IDS.index(4)

EMOTIONS = ("disappointed", "satisfied", "surprised", "disgusted", "amused", "scared")
SCORE_MODELS = ("clip_score", "aesthetic_score", "blip_score",
                "imagereward_score", "pickscore", "hpsv2_score")
CLIP_KINDS = ("baseline", "reaction")
DEFAULT_FPS = 30

TRACE_ID_COLUMNS = ("participant_id", "session_id", "image_id", "clip_kind", "fps", "frame_index")
AU_COLUMNS = tuple(f"au{i}" for i in AU_IDS)
GEOMETRY_COLUMNS = ("fdcs", "d_eye_edge_left", "d_eye_edge_right", "d_nostrils_eyes", "d_eyes")
TRACE_COLUMNS = TRACE_ID_COLUMNS + AU_COLUMNS + GEOMETRY_COLUMNS


def au_index(au: int) -> int:
    """Column position of an AU number inside intensity arrays."""
    try:
        return AU_IDS.index(int(AU(au)))
    except ValueError:
        raise KeyError(f"AU{au} is not one of the 12 modelled action units") from None


@dataclass(frozen=True)
class FrameRecord:
    """One frame as seen by the filter rules. ``None`` marks a missing value."""

    frame_index: int
    au_intensities: dict[int, float | None]
    fdcs: float | None
    d_eye_edge_left: float | None
    d_eye_edge_right: float | None
    d_nostrils_eyes: float | None
    d_eyes: float | None


def _opt(x: float) -> float | None:
    return None if math.isnan(x) else float(x)


@dataclass(eq=False)
class AUTrace:
    """Per-frame AU estimates and pose signals for one clip.

    Arrays use NaN for missing values; frames without a detected face stay in
    the arrays so the clip-exclusion fraction counts them.
    """

    participant_id: str
    session_id: str
    image_id: str
    clip_kind: str
    fps: int
    intensities: np.ndarray = field(repr=False)
    fdcs: np.ndarray = field(repr=False)
    d_eye_edge_left: np.ndarray = field(repr=False)
    d_eye_edge_right: np.ndarray = field(repr=False)
    d_nostrils_eyes: np.ndarray = field(repr=False)
    d_eyes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.clip_kind not in CLIP_KINDS:
            raise DataError(f"clip_kind must be one of {CLIP_KINDS}, got {self.clip_kind!r}")
        if int(self.fps) <= 0:
            raise DataError(f"fps must be positive, got {self.fps}")
        self.fps = int(self.fps)
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        n = self.intensities.shape[0]
        if self.intensities.shape != (n, len(AU_IDS)):
            raise DataError(f"intensities must be (n_frames, {len(AU_IDS)}), got {self.intensities.shape}")
        for name in GEOMETRY_COLUMNS:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise DataError(f"{name} must have {n} entries, got shape {arr.shape}")
            setattr(self, name, arr)
        with np.errstate(invalid="ignore"):
            if np.any((self.fdcs < 0) | (self.fdcs > 1)):
                raise DataError(f"fdcs outside [0, 1] in {self.key}")
            for name in GEOMETRY_COLUMNS[1:]:
                if np.any(getattr(self, name) < 0):
                    raise DataError(f"negative {name} in {self.key}")

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.participant_id, self.session_id, self.image_id, self.clip_kind)

    @property
    def n_frames(self) -> int:
        return self.intensities.shape[0]

    def frame(self, i: int) -> FrameRecord:
        return FrameRecord(
            frame_index=i,
            au_intensities={au: _opt(v) for au, v in zip(AU_IDS, self.intensities[i])},
            fdcs=_opt(self.fdcs[i]),
            d_eye_edge_left=_opt(self.d_eye_edge_left[i]),
            d_eye_edge_right=_opt(self.d_eye_edge_right[i]),
            d_nostrils_eyes=_opt(self.d_nostrils_eyes[i]),
            d_eyes=_opt(self.d_eyes[i]),
        )

    def frames(self) -> Iterator[FrameRecord]:
        for i in range(self.n_frames):
            yield self.frame(i)

    def au(self, au: int) -> np.ndarray:
        return self.intensities[:, au_index(au)]

    def __eq__(self, other):
        if not isinstance(other, AUTrace):
            return NotImplemented
        if self.key != other.key or self.fps != other.fps:
            return False
        return all(np.array_equal(getattr(self, n), getattr(other, n), equal_nan=True)
                   for n in ("intensities",) + GEOMETRY_COLUMNS)


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    overall: int
    alignment: int
    fidelity: int
    emotions: frozenset[str]
    rank: int

    def __post_init__(self):
        for name in ("overall", "alignment", "fidelity"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 7:
                raise DataError(f"{name} rating for {self.image_id} must be an integer in 1..7, got {v!r}")
        if isinstance(self.rank, bool) or not isinstance(self.rank, int) or not 1 <= self.rank <= 5:
            raise DataError(f"rank for {self.image_id} must be an integer in 1..5, got {self.rank!r}")
        unknown = set(self.emotions) - set(EMOTIONS)
        if unknown:
            raise DataError(f"unknown emotion(s) {sorted(unknown)} for {self.image_id}")
        object.__setattr__(self, "emotions", frozenset(self.emotions))


@dataclass(frozen=True)
class Session:
    participant_id: str
    session_id: str
    prompt: str
    images: tuple[AnnotationRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        ranks = [a.rank for a in self.images]
        if len(set(ranks)) != len(ranks):
            raise DataError(f"duplicate rank in session {self.session_id}: {sorted(ranks)}")


@dataclass(eq=False)
class ScoreTable:
    """External model scores, one row per image; NaN marks a missing score."""

    image_ids: tuple[str, ...]
    models: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.image_ids = tuple(self.image_ids)
        self.models = tuple(self.models)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.image_ids), len(self.models))
        if len(set(self.image_ids)) != len(self.image_ids):
            raise DataError("duplicate key: image_id repeated in score table")
        self._row = {img: i for i, img in enumerate(self.image_ids)}

    @classmethod
    def empty(cls, models: Iterable[str] = SCORE_MODELS) -> "ScoreTable":
        models = tuple(models)
        return cls((), models, np.zeros((0, len(models))))

    def column(self, model: str, image_ids: Iterable[str]) -> np.ndarray:
        """Scores of ``model`` for the given images, NaN where unknown."""
        if model not in self.models:
            raise KeyError(f"no score column {model!r}")
        j = self.models.index(model)
        return np.array([self.values[self._row[i], j] if i in self._row else np.nan
                         for i in image_ids], dtype=np.float64)

    def get(self, image_id: str, model: str) -> float:
        return float(self.column(model, [image_id])[0])

    def __eq__(self, other):
        if not isinstance(other, ScoreTable):
            return NotImplemented
        return (self.image_ids == other.image_ids and self.models == other.models
                and np.array_equal(self.values, other.values, equal_nan=True))


@dataclass(eq=False)
class Cohort:
    traces: dict[tuple[str, str, str, str], AUTrace]
    sessions: tuple[Session, ...]
    scores: ScoreTable
    thresholds: FilterThresholds = field(default_factory=FilterThresholds)

    def __post_init__(self):
        self.sessions = tuple(self.sessions)
        self._annotation: dict[str, tuple[Session, AnnotationRecord]] = {}
        seen_sessions = set()
        for s in self.sessions:
            skey = (s.participant_id, s.session_id)
            if skey in seen_sessions:
                raise DataError(f"duplicate key: session {skey}")
            seen_sessions.add(skey)
            for a in s.images:
                if a.image_id in self._annotation:
                    raise DataError(f"duplicate key: image {a.image_id!r}")
                self._annotation[a.image_id] = (s, a)
        for key, tr in self.traces.items():
            if key != tr.key:
                raise DataError(f"trace stored under {key} but carries key {tr.key}")
            hit = self._annotation.get(tr.image_id)
            if hit is None or (hit[0].participant_id, hit[0].session_id) != key[:2]:
                raise DataError(f"unresolved reference: trace {key} has no matching annotation")
        for image_id, (s, _) in self._annotation.items():
            for kind in CLIP_KINDS:
                if (s.participant_id, s.session_id, image_id, kind) not in self.traces:
                    raise DataError(f"unresolved reference: image {image_id!r} has no {kind} clip")
        for image_id in self.scores.image_ids:
            if image_id not in self._annotation:
                raise DataError(f"unresolved reference: score row for unknown image {image_id!r}")

    @property
    def participants(self) -> list[str]:
        return sorted({s.participant_id for s in self.sessions})

    @property
    def image_ids(self) -> list[str]:
        return [a.image_id for s in self.sessions for a in s.images]

    def sessions_of(self, participant_id: str) -> list[Session]:
        return [s for s in self.sessions if s.participant_id == participant_id]

    def annotation(self, image_id: str) -> AnnotationRecord:
        return self._annotation[image_id][1]

    def session_of(self, image_id: str) -> Session:
        return self._annotation[image_id][0]

    def trace(self, image_id: str, clip_kind: str) -> AUTrace:
        s = self.session_of(image_id)
        return self.traces[(s.participant_id, s.session_id, image_id, clip_kind)]

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (list(self.traces) == list(other.traces)
                and all(self.traces[k] == other.traces[k] for k in self.traces)
                and self.sessions == other.sessions
                and self.scores == other.scores
                and self.thresholds == other.thresholds)


# ------------------------------------------------------------------ loading


def _parse_float(text: str, where: str, column: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: malformed row: column {column} is not a number ({text!r})") from None
    if math.isinf(value):
        raise DataError(f"{where}: malformed row: column {column} is infinite")
    return value


def _parse_int(text: str, where: str, column: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise DataError(f"{where}: malformed row: column {column} is not an integer ({text!r})") from None


def read_traces_csv(path: str | os.PathLike) -> dict[tuple[str, str, str, str], AUTrace]:
    path = Path(path)
    traces: dict[tuple[str, str, str, str], AUTrace] = {}
    buffers: dict[tuple[str, str, str, str], dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row is mandatory") from None
        missing = [c for c in TRACE_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}:1: malformed row: header lacks columns {missing}")
        col = {c: header.index(c) for c in TRACE_COLUMNS}
        au_cols = [col[c] for c in AU_COLUMNS]
        geo_cols = [col[c] for c in GEOMETRY_COLUMNS]
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{where}: malformed row: expected {len(header)} fields, got {len(row)}")
            key = tuple(row[col[c]].strip() for c in TRACE_ID_COLUMNS[:4])
            if any(k == "" for k in key):
                raise DataError(f"{where}: malformed row: empty identifier")
            if key[3] not in CLIP_KINDS:
                raise DataError(f"{where}: malformed row: clip_kind {key[3]!r} not in {CLIP_KINDS}")
            fps = _parse_int(row[col["fps"]], where, "fps")
            if fps <= 0:
                raise DataError(f"{where}: fps must be positive, got {fps}")
            frame_index = _parse_int(row[col["frame_index"]], where, "frame_index")
            buf = buffers.get(key)
            if buf is None:
                if frame_index != 0:
                    raise DataError(f"{where}: clip {key} must start at frame_index 0, got {frame_index}")
                buf = buffers[key] = {"fps": fps, "au": [], "geo": []}
            elif frame_index == 0:
                raise DataError(f"{where}: duplicate key {key}")
            elif frame_index != len(buf["au"]):
                raise DataError(f"{where}: clip {key} frames not contiguous "
                                f"(expected {len(buf['au'])}, got {frame_index})")
            elif fps != buf["fps"]:
                raise DataError(f"{where}: fps changes within clip {key}")
            buf["au"].append([_parse_float(row[c], where, header[c]) for c in au_cols])
            buf["geo"].append([_parse_float(row[c], where, header[c]) for c in geo_cols])
    for key, buf in buffers.items():
        geo = np.array(buf["geo"], dtype=np.float64).reshape(-1, len(GEOMETRY_COLUMNS))
        try:
            traces[key] = AUTrace(*key, fps=buf["fps"],
                                  intensities=np.array(buf["au"], dtype=np.float64),
                                  **{n: geo[:, i] for i, n in enumerate(GEOMETRY_COLUMNS)})
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None
    return traces


def read_annotations_json(path: str | os.PathLike) -> tuple[Session, ...]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: malformed JSON: {exc.msg}") from None
    if not isinstance(raw, list):
        raise DataError(f"{path}: top level must be an array of sessions")
    sessions = []
    for si, s in enumerate(raw):
        where = f"{path}: sessions[{si}]"
        try:
            images = tuple(
                AnnotationRecord(
                    image_id=str(img["image_id"]),
                    overall=img["overall"],
                    alignment=img["alignment"],
                    fidelity=img["fidelity"],
                    emotions=frozenset(img.get("emotions", [])),
                    rank=img["rank"],
                )
                for img in s["images"]
            )
            sessions.append(Session(str(s["participant_id"]), str(s["session_id"]),
                                    str(s.get("prompt", "")), images))
        except KeyError as exc:
            raise DataError(f"{where}: malformed record: missing field {exc}") from None
        except (TypeError, AttributeError):
            raise DataError(f"{where}: malformed record") from None
        except DataError as exc:
            raise DataError(f"{where}: {exc}") from None
    return tuple(sessions)


def read_scores_csv(path: str | os.PathLike) -> ScoreTable:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row is mandatory") from None
        if not header or header[0] != "image_id":
            raise DataError(f"{path}:1: malformed row: first column must be image_id")
        models = tuple(header[1:])
        ids, rows, seen = [], [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise DataError(f"{where}: malformed row: expected {len(header)} fields, got {len(row)}")
            image_id = row[0].strip()
            if image_id in seen:
                raise DataError(f"{where}: duplicate key: image_id {image_id!r}")
            seen.add(image_id)
            ids.append(image_id)
            rows.append([_parse_float(v, where, m) for v, m in zip(row[1:], models)])
    return ScoreTable(tuple(ids), models, np.array(rows, dtype=np.float64).reshape(len(ids), len(models)))


def load_cohort(traces: str | os.PathLike, annotations: str | os.PathLike,
                scores: str | os.PathLike | None = None,
                thresholds: FilterThresholds | None = None) -> Cohort:
    """Read and cross-validate a cohort from its three input files."""
    table = read_scores_csv(scores) if scores is not None else ScoreTable.empty()
    return Cohort(read_traces_csv(traces), read_annotations_json(annotations), table,
                  thresholds or FilterThresholds())


def load_cohort_dir(directory: str | os.PathLike, thresholds: FilterThresholds | None = None) -> Cohort:
    d = Path(directory)
    scores = d / "scores.csv"
    return load_cohort(d / "traces.csv", d / "annotations.json",
                       scores if scores.exists() else None, thresholds)


# ------------------------------------------------------------------ writing


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_traces_csv(traces: Iterable[AUTrace], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for tr in traces:
            geo = np.column_stack([getattr(tr, n) for n in GEOMETRY_COLUMNS])
            ident = [tr.participant_id, tr.session_id, tr.image_id, tr.clip_kind, str(tr.fps)]
            for i in range(tr.n_frames):
                w.writerow(ident + [str(i)]
                           + [_fmt(v) for v in tr.intensities[i].tolist()]
                           + [_fmt(v) for v in geo[i].tolist()])


def sessions_to_json(sessions: Iterable[Session]) -> list[dict]:
    return [
        {
            "participant_id": s.participant_id,
            "session_id": s.session_id,
            "prompt": s.prompt,
            "images": [
                {
                    "image_id": a.image_id,
                    "overall": a.overall,
                    "alignment": a.alignment,
                    "fidelity": a.fidelity,
                    "emotions": [e for e in EMOTIONS if e in a.emotions],
                    "rank": a.rank,
                }
                for a in s.images
            ],
        }
        for s in sessions
    ]


def write_annotations_json(sessions: Iterable[Session], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sessions_to_json(sessions), fh, indent=1)
        fh.write("\n")


def write_scores_csv(table: ScoreTable, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("image_id",) + table.models)
        for img, row in zip(table.image_ids, table.values.tolist()):
            w.writerow([img] + [_fmt(v) for v in row])


def save_cohort(cohort: Cohort, directory: str | os.PathLike) -> dict[str, Path]:
    """Write ``traces.csv``, ``annotations.json`` and ``scores.csv`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"traces": d / "traces.csv", "annotations": d / "annotations.json", "scores": d / "scores.csv"}
    write_traces_csv(cohort.traces.values(), paths["traces"])
    write_annotations_json(cohort.sessions, paths["annotations"])
    write_scores_csv(cohort.scores, paths["scores"])
    return paths
