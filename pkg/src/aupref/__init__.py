"""Preference annotation of generated images from facial action unit reactions."""

__version__ = "0.1.0"

from .activation import activation_value, moving_window_mean, participant_reliability, window_length
from .data_model import (AU, AU_IDS, AnnotationRecord, AUTrace, Cohort, FrameRecord, ScoreTable, Session,
                         load_cohort, load_cohort_dir, save_cohort)
from .dataset import Dataset, build_dataset
from .errors import AuprefError, ConfigError, DataError, FeatureUndefinedError, GeometryError
from .fitting import GridSpec, grid_fit_ensemble, grid_fit_integration, grid_fit_valence, lopo_evaluate
from .frame_filter import FilterThresholds, filter_clip, frame_valid
from .kernels import BACKEND
from .preference import PredictionOutcome, evaluate, predict_pair
from .scoring import EnsembleWeights, Standardizer, au4_valence, ensemble_score, integrated_score
from .synth import SynthSpec, generate_synthetic_cohort

__all__ = [
    "AU", "AU_IDS", "AUTrace", "AnnotationRecord", "AuprefError", "BACKEND", "Cohort", "ConfigError",
    "DataError", "Dataset", "EnsembleWeights", "FeatureUndefinedError", "FilterThresholds", "FrameRecord",
    "GeometryError", "GridSpec", "PredictionOutcome", "ScoreTable", "Session", "Standardizer", "SynthSpec",
    "activation_value", "au4_valence", "build_dataset", "ensemble_score", "evaluate", "filter_clip",
    "frame_valid", "generate_synthetic_cohort", "grid_fit_ensemble", "grid_fit_integration",
    "grid_fit_valence", "integrated_score", "load_cohort", "load_cohort_dir", "lopo_evaluate",
    "moving_window_mean", "participant_reliability", "predict_pair", "save_cohort", "window_length",
]
