"""Cohort -> filtered, activated, pair-indexed arrays used by fitting and stats."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activation import activation_value, participant_reliability
from .data_model import AU4_COLUMN, AU_IDS, AnnotationRecord, Cohort
from .errors import FeatureUndefinedError
from .frame_filter import EXCLUDED, FilterThresholds, filter_clip
from .preference import PreferencePair, pairs_from_ranking

UNDEFINED = "undefined"


@dataclass(frozen=True)
class ClipRow:
    participant_id: str
    session_id: str
    image_id: str
    clip_kind: str
    status: str
    excluded_fraction: float
    activation: tuple[float, ...] | None


@dataclass(eq=False)
class Dataset:
    """Valid images (both clips usable) and the preference pairs between them.

    ``pairs`` is an (n_pairs, 2) array of row indices into the image arrays,
    preferred image first. ``pair_participant`` gives each pair's participant
    index into ``participants``.
    """

    clips: list[ClipRow]
    image_ids: list[str]
    image_participant: np.ndarray
    image_session: list[str]
    alpha: np.ndarray = field(repr=False)
    annotations: list[AnnotationRecord] = field(repr=False)
    participants: list[str] = field(default_factory=list)
    participant_status: dict[str, dict] = field(default_factory=dict)
    pairs: np.ndarray = field(default=None, repr=False)
    pair_participant: np.ndarray = field(default=None, repr=False)
    pair_session: list[str] = field(default_factory=list)
    scores: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def alpha4(self) -> np.ndarray:
        return self.alpha[:, AU4_COLUMN]

    @property
    def included(self) -> list[str]:
        return [p for p in self.participants if self.participant_status[p]["status"] == "included"]

    def index_of(self, image_id: str) -> int:
        return self._index[image_id]

    def preference_pairs(self) -> list[PreferencePair]:
        return [PreferencePair(s, self.image_ids[a], self.image_ids[b])
                for s, (a, b) in zip(self.pair_session, self.pairs.tolist())]

    def pairs_for(self, participants) -> np.ndarray:
        """Boolean mask over pairs belonging to the given participant ids."""
        wanted = np.array([self.participants.index(p) for p in participants], dtype=np.int64)
        return np.isin(self.pair_participant, wanted)

    def images_for(self, participants) -> np.ndarray:
        wanted = np.array([self.participants.index(p) for p in participants], dtype=np.int64)
        return np.isin(self.image_participant, wanted)


def build_dataset(cohort: Cohort, thresholds: FilterThresholds | None = None) -> Dataset:
    t = thresholds or cohort.thresholds
    clips: list[ClipRow] = []
    features = {}
    for key, trace in cohort.traces.items():
        fc = filter_clip(trace, t)
        act = None
        status = fc.status
        if fc.retained:
            try:
                feat = activation_value(fc)
                features[key] = feat
                act = tuple(float(v) for v in feat.activation)
            except FeatureUndefinedError:
                status = UNDEFINED
        clips.append(ClipRow(*key, status=status, excluded_fraction=fc.excluded_fraction, activation=act))

    participants = cohort.participants
    p_index = {p: i for i, p in enumerate(participants)}

    status = {}
    for p in participants:
        base = [features[k].alpha4 for k in features if k[0] == p and k[3] == "baseline"]
        if not base:
            status[p] = {"status": "excluded", "p80_baseline_alpha4": None, "n_baseline": 0}
            continue
        status[p] = {
            "status": participant_reliability(base),
            "p80_baseline_alpha4": float(np.percentile(base, 80.0, method="linear")),
            "n_baseline": len(base),
        }

    image_ids, image_part, image_sess, alphas, annots = [], [], [], [], []
    pairs, pair_part, pair_sess = [], [], []
    row: dict[str, int] = {}
    for s in cohort.sessions:
        ranked = []
        for a in s.images:
            rkey = (s.participant_id, s.session_id, a.image_id, "reaction")
            bkey = (s.participant_id, s.session_id, a.image_id, "baseline")
            if rkey not in features:
                continue
            if t.pair_policy == "either" and bkey not in features:
                continue
            ranked.append((a.image_id, a.rank))
            row[a.image_id] = len(image_ids)
            image_ids.append(a.image_id)
            image_part.append(p_index[s.participant_id])
            image_sess.append(s.session_id)
            alphas.append(features[rkey].activation)
            annots.append(a)
        for pair in pairs_from_ranking(s.session_id, ranked):
            pairs.append((row[pair.preferred], row[pair.other]))
            pair_part.append(p_index[s.participant_id])
            pair_sess.append(s.session_id)

    ds = Dataset(
        clips=clips,
        image_ids=image_ids,
        image_participant=np.array(image_part, dtype=np.int64),
        image_session=image_sess,
        alpha=np.array(alphas, dtype=np.float64).reshape(len(image_ids), len(AU_IDS)),
        annotations=annots,
        participants=participants,
        participant_status=status,
        pairs=np.array(pairs, dtype=np.int64).reshape(len(pairs), 2),
        pair_participant=np.array(pair_part, dtype=np.int64),
        pair_session=pair_sess,
        scores={m: cohort.scores.column(m, image_ids) for m in cohort.scores.models},
    )
    ds._index = row
    return ds


def excluded_images(ds: Dataset) -> set[str]:
    """Images dropped because one of their clips failed filtering or had no defined window."""
    bad = {c.image_id for c in ds.clips if c.status in (EXCLUDED, UNDEFINED)}
    return bad - set(ds.image_ids)
