import numpy as np

from aupref.data_model import AU4_COLUMN, AU_IDS, AnnotationRecord, AUTrace, Cohort, ScoreTable, Session
from aupref.frame_filter import FilterThresholds

GOOD_GEOMETRY = dict(fdcs=0.95, d_eye_edge_left=50.0, d_eye_edge_right=50.0, d_nostrils_eyes=70.0, d_eyes=100.0)


def make_trace(au4=None, n=150, fps=30, ids=("P1", "S1", "I1"), kind="reaction", intensities=None, **geometry):
    """A trace with frontal geometry; ``au4`` fills the AU4 column, other AUs stay 0."""
    if intensities is None:
        if au4 is not None:
            n = len(au4)
        intensities = np.zeros((n, len(AU_IDS)))
        if au4 is not None:
            intensities[:, AU4_COLUMN] = au4
    intensities = np.asarray(intensities, dtype=np.float64)
    n = intensities.shape[0]
    geo = {k: np.full(n, v, dtype=np.float64) for k, v in GOOD_GEOMETRY.items()}
    for k, v in geometry.items():
        geo[k] = np.asarray(v, dtype=np.float64) if np.ndim(v) else np.full(n, v, dtype=np.float64)
    return AUTrace(*ids, kind, fps, intensities, **geo)


def tiny_cohort(alpha4_by_image, scores=None, baseline_peak=0.0, ranks=None):
    """One session per participant; ``alpha4_by_image`` maps participant -> list of reaction AU4 peaks.

    Images are ranked in the listed order unless ``ranks`` gives them.
    """
    traces, sessions, ids = {}, [], []
    for p, peaks in alpha4_by_image.items():
        sid = f"{p}-S1"
        records = []
        for i, peak in enumerate(peaks):
            iid = f"{sid}-I{i + 1}"
            au4 = np.zeros(30)
            au4[10:13] = peak
            base = np.zeros(30)
            base[10:13] = baseline_peak
            traces[(p, sid, iid, "reaction")] = make_trace(au4, ids=(p, sid, iid), kind="reaction")
            traces[(p, sid, iid, "baseline")] = make_trace(base, ids=(p, sid, iid), kind="baseline")
            rank = ranks[p][i] if ranks else i + 1
            records.append(AnnotationRecord(iid, 4, 4, 4, frozenset(), rank))
            ids.append(iid)
        sessions.append(Session(p, sid, "prompt", tuple(records)))
    if scores is None:
        table = ScoreTable.empty()
    else:
        models = tuple(scores)
        table = ScoreTable(tuple(ids), models, np.column_stack([scores[m] for m in models]))
    return Cohort(traces, tuple(sessions), table, FilterThresholds())
