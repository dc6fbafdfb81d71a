"""Extractor configuration: feature families, endpoint, and provenance."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

# Each feature family fills exactly one reserved bundle tensor.
FAMILY_TENSORS = {
    "pose": "keypoints",
    "subject": "subject_emb",
    "face": "face_emb",
    "background": "background_emb",
    "text": "text_sim",
    "flow": "flow_mag",
    "detect": "detections",
    "boundaries": "boundaries",
    "coherence": "coherence",
}

SHOT_FAMILIES = ("pose", "subject", "face", "background", "text", "flow", "detect")
SEQUENCE_FAMILIES = ("boundaries", "coherence")

# Implementation names recorded in each bundle's provenance header.  These
# classical implementations are offline stand-ins with the same tensor
# contracts as the neural extractors they substitute for; swap them per
# family when model weights are available.
DEFAULT_IMPLEMENTATIONS = {
    "pose": "contour-pose@1",
    "subject": "patch-embedding@1",
    "face": "none@1",
    "background": "border-histogram@1",
    "text": "hash-stub@1",
    "flow": "farneback@1",
    "detect": "motion-blob@1",
    "boundaries": "hist-delta@1",
    "coherence": "patch-cosine@1",
}

CHAT_ENDPOINT_ENV = "CINEXTRACT_CHAT_ENDPOINT"
CHAT_API_KEY_ENV = "CINEXTRACT_CHAT_API_KEY"


@dataclass
class ExtractorConfig:
    families: tuple[str, ...] = SHOT_FAMILIES
    device: str = "cpu"
    batch_size: int = 8
    clips_dir: Path | None = None
    max_retries: int = 3
    request_timeout: float = 30.0

    def __post_init__(self) -> None:
        unknown = set(self.families) - set(FAMILY_TENSORS)
        if unknown:
            raise ValueError(f"unknown feature families: {sorted(unknown)}")

    @property
    def endpoint(self) -> str | None:
        return os.environ.get(CHAT_ENDPOINT_ENV)

    @property
    def api_key(self) -> str | None:
        return os.environ.get(CHAT_API_KEY_ENV)

    def provenance(self) -> dict[str, str]:
        return {family: DEFAULT_IMPLEMENTATIONS[family]
                for family in self.families}
