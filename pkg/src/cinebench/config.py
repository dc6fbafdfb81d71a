"""Threshold, gate, and matching configuration with pipeline defaults."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class MetricConfig:
    """All thresholds, temperatures, bin counts, and gates in one place.

    The filter thresholds (clip/dino/siglip/videoclip/describability) are the
    published curation values; the motion interval, softmax temperature, and
    copy-paste entropy threshold are engine defaults and config-exposed.
    """

    clip_sim_min: float = 0.80
    dino_sim_min: float = 0.80
    siglip_min: float = 4.00
    videoclip_min: float = 0.20
    describability_min: float = 0.02
    motion_lo: float = 0.5
    motion_hi: float = 400.0
    softmax_temperature: float = 0.10
    cp_entropy_threshold: float = 0.10
    coherence_bins: int = 20
    recall_conf_min: float = 0.30
    max_window_frames: int = 161
    face_weight: float = 0.5
    vis_min: float = 0.3

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
        if not self.motion_lo < self.motion_hi:
            raise ValueError("motion_lo must be < motion_hi")
        if self.softmax_temperature <= 0:
            raise ValueError("softmax_temperature must be > 0")
        if not 0 < self.cp_entropy_threshold < 1:
            raise ValueError("cp_entropy_threshold must be in (0, 1)")
        if self.coherence_bins < 2:
            raise ValueError("coherence_bins must be >= 2")

    def replace(self, **overrides: Any) -> "MetricConfig":
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(overrides)
        return MetricConfig(**current)


@dataclass(frozen=True)
class MatchConstraints:
    """Separation and identity constraints for cross-shot reference matching."""

    min_intervening_shots: int = 1
    min_frame_separation: int = 32
    min_identity_sim: float = 0.6

    def __post_init__(self) -> None:
        if self.min_intervening_shots < 0 or self.min_frame_separation < 0:
            raise ValueError("separation constants must be >= 0")


@dataclass
class RunConfig:
    """Paths and knobs for a CLI run; loaded from a JSON config file plus flags."""

    manifest: Path | None = None
    bundle_dir: Path | None = None
    gallery_bundle: Path | None = None
    ref_coherence_bundle: Path | None = None
    pairs: Path | None = None
    tracks: Path | None = None
    mdvl_scores: Path | None = None
    output_dir: Path = Path("out")
    track: int | None = None
    parallelism: int = 1
    method: str = "method"
    recall_target_class: int = 0
    metrics: MetricConfig = field(default_factory=MetricConfig)

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    _PATH_FIELDS = frozenset({
        "manifest", "bundle_dir", "gallery_bundle", "ref_coherence_bundle",
        "pairs", "tracks", "mdvl_scores", "output_dir",
    })

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        import json

        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        overrides = raw.pop("metrics", {})
        kwargs: dict[str, Any] = {}
        for f in fields(cls):
            if f.name == "metrics" or f.name not in raw:
                continue
            value = raw[f.name]
            if f.name in cls._PATH_FIELDS and value is not None:
                value = Path(value)
            kwargs[f.name] = value
        kwargs["metrics"] = MetricConfig().replace(**overrides)
        return cls(**kwargs)
