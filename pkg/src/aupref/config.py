"""Run configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data_model import SCORE_MODELS
from .errors import ConfigError
from .fitting import GridSpec, parse_protocol
from .frame_filter import FilterThresholds
from .preference import DEFAULT_PENALTY

DEFAULT_PROTOCOLS = (
    ("valence_only", "ensemble")
    + tuple(f"baseline:{m}" for m in SCORE_MODELS)
    + tuple(f"integrated:{m}" for m in SCORE_MODELS)
    + ("integrated:ensemble",)
)

THRESHOLD_KEYS = tuple(f.name for f in fields(FilterThresholds))
GRID_KEYS = tuple(f.name for f in fields(GridSpec))
# keys that locate inputs and outputs; they never affect output bytes
LOCATION_KEYS = ("input_dir", "traces", "annotations", "scores", "output")


@dataclass(frozen=True)
class RunConfig:
    input_dir: str | None = None
    traces: str | None = None
    annotations: str | None = None
    scores: str | None = None
    output: str = "aupref-out"
    thresholds: FilterThresholds = field(default_factory=FilterThresholds)
    grid: GridSpec = field(default_factory=GridSpec)
    penalty: int = DEFAULT_PENALTY
    seed: int = 0
    protocols: tuple[str, ...] = DEFAULT_PROTOCOLS
    standardize_valence: bool = False
    family_alpha: float = 0.05

    def __post_init__(self):
        if isinstance(self.penalty, bool) or int(self.penalty) != self.penalty or self.penalty < 0:
            raise ConfigError(f"penalty must be a non-negative integer, got {self.penalty!r}")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        object.__setattr__(self, "protocols", tuple(self.protocols))
        if not self.protocols:
            raise ConfigError("at least one protocol is required")
        for p in self.protocols:
            parse_protocol(p)
        if not 0 < self.family_alpha < 1:
            raise ConfigError(f"family_alpha must lie in (0, 1), got {self.family_alpha}")

    def input_paths(self) -> dict[str, Path | None]:
        """Resolved trace, annotation and score paths (scores may be absent)."""
        if self.input_dir:
            base = Path(self.input_dir)
            paths = {"traces": base / "traces.csv", "annotations": base / "annotations.json",
                     "scores": base / "scores.csv"}
            if not paths["scores"].exists():
                paths["scores"] = None
        else:
            paths = {"traces": self.traces, "annotations": self.annotations, "scores": self.scores}
            paths = {k: (Path(v) if v else None) for k, v in paths.items()}
        for key in ("traces", "annotations"):
            if paths[key] is None:
                raise ConfigError(f"no {key} input given (use --input-dir or --{key})")
        if self.input_dir is None and self.scores is None:
            paths["scores"] = None
        return paths

    def to_dict(self, locations: bool = True) -> dict:
        out = {
            "thresholds": self.thresholds.to_dict(),
            "grid": self.grid.to_dict(),
            "penalty": int(self.penalty),
            "seed": int(self.seed),
            "protocols": list(self.protocols),
            "standardize_valence": self.standardize_valence,
            "family_alpha": self.family_alpha,
        }
        if locations:
            out.update({k: getattr(self, k) for k in LOCATION_KEYS})
        return out

    def digest(self) -> str:
        """SHA-256 of the canonical JSON of every field that can change results."""
        blob = json.dumps(self.to_dict(locations=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _tuple_pairs(d: dict, keys) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items() if k in keys}


def config_from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a config from nested (``thresholds``/``grid``) or flat keys."""
    base = base or RunConfig()
    data = dict(data)
    th = dict(data.pop("thresholds", {}) or {})
    gr = dict(data.pop("grid", {}) or {})
    top = {}
    for key, value in data.items():
        if key in THRESHOLD_KEYS:
            th[key] = value
        elif key in GRID_KEYS:
            gr[key] = value
        elif key in {f.name for f in fields(RunConfig)} - {"thresholds", "grid"}:
            top[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for key in th:
        if key not in THRESHOLD_KEYS:
            raise ConfigError(f"unknown threshold key {key!r}")
    for key in gr:
        if key not in GRID_KEYS:
            raise ConfigError(f"unknown grid key {key!r}")
    try:
        thresholds = replace(base.thresholds, **_tuple_pairs(th, THRESHOLD_KEYS))
        grid = replace(base.grid, **_tuple_pairs(gr, GRID_KEYS))
        if "protocols" in top:
            top["protocols"] = tuple(top["protocols"])
        return replace(base, thresholds=thresholds, grid=grid, **top)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: str | os.PathLike | None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        cfg = config_from_dict(data, cfg)
    if overrides:
        cfg = config_from_dict({k: v for k, v in overrides.items() if v is not None}, cfg)
    return cfg
