"""Dataset-construction decision logic.

Three stages: cascaded quality filtering of individual shots, sliding-window
aggregation of accepted runs into multi-shot training sequences, and
cross-shot reference matching that forbids drawing the reference from the
target context (the anti-copy-paste rule).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .config import MatchConstraints, MetricConfig
from .errors import DegenerateError, IntegrityError, MetricError
from .manifest import S2VPair, StorylineSequence
from .pose import KeypointSet, sim_pose
from .similarity import cosine

# Bundle tensor carrying per-shot quality scores, in this fixed field order.
QUALITY_TENSOR = "quality"
QUALITY_FIELDS = ("clip_sim", "dino_sim", "siglip_score", "videoclip_score",
                  "describability", "motion_score")


@dataclass(frozen=True)
class ShotQualityRecord:
    """Upstream-produced per-shot quality scores."""

    clip_sim: float
    dino_sim: float
    siglip_score: float
    videoclip_score: float
    describability: float
    motion_score: float

    def __post_init__(self) -> None:
        for name in QUALITY_FIELDS:
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def from_tensor(cls, values: np.ndarray) -> "ShotQualityRecord":
        arr = np.asarray(values, dtype=np.float64).ravel()
        if arr.size != len(QUALITY_FIELDS):
            raise ValueError(f"quality tensor must have {len(QUALITY_FIELDS)} values")
        return cls(*(float(v) for v in arr))


class FilterStage(str, Enum):
    SEMANTIC = "SEMANTIC"
    AESTHETIC = "AESTHETIC"
    TEXT_ALIGNMENT = "TEXT_ALIGNMENT"
    DESCRIBABILITY = "DESCRIBABILITY"
    MOTION = "MOTION"


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    stage: FilterStage | None = None  # first failing stage when rejected

    def __bool__(self) -> bool:
        return self.accepted


def cascade_filter(q: ShotQualityRecord, cfg: MetricConfig) -> FilterDecision:
    """Evaluate the quality cascade in fixed stage order; inclusive thresholds.

    Accept iff all six predicates hold; rejection names the first failing
    stage.  The accept/reject partition is order-independent (pure
    conjunction); only the stage label depends on the order.
    """
    stages: tuple[tuple[FilterStage, bool], ...] = (
        (FilterStage.SEMANTIC,
         q.clip_sim >= cfg.clip_sim_min and q.dino_sim >= cfg.dino_sim_min),
        (FilterStage.AESTHETIC, q.siglip_score >= cfg.siglip_min),
        (FilterStage.TEXT_ALIGNMENT, q.videoclip_score >= cfg.videoclip_min),
        (FilterStage.DESCRIBABILITY, q.describability >= cfg.describability_min),
        (FilterStage.MOTION, cfg.motion_lo <= q.motion_score <= cfg.motion_hi),
    )
    for stage, passed in stages:
        if not passed:
            return FilterDecision(False, stage)
    return FilterDecision(True)


def sliding_windows(storyline: StorylineSequence, cfg: MetricConfig,
                    accepted: set[str] | None = None) -> list[StorylineSequence]:
    """Emit maximal multi-shot windows over runs of consecutive accepted shots.

    Within each run the window start advances one shot at a time and each
    window extends as far as the frame budget allows; windows wholly
    contained in the previous one are dropped, so every output is maximal.
    Windows need >= 2 shots and at most ``cfg.max_window_frames`` frames.
    """
    windows: list[StorylineSequence] = []
    runs: list[list[int]] = []
    current: list[int] = []
    for i, shot in enumerate(storyline.shots):
        if accepted is None or shot.clip_id in accepted:
            current.append(i)
        elif current:
            runs.append(current)
            current = []
    if current:
        runs.append(current)

    for run in runs:
        last_end = -1
        for pos, start in enumerate(run):
            total = 0
            end = pos  # exclusive index into run
            while end < len(run):
                n = storyline.shots[run[end]].n_frames
                if total + n > cfg.max_window_frames:
                    break
                total += n
                end += 1
            if end - pos < 2 or run[end - 1] <= last_end:
                continue
            last_end = run[end - 1]
            indices = run[pos:end]
            windows.append(_window_sequence(storyline, indices))
    return windows


def _window_sequence(storyline: StorylineSequence, indices: list[int]) -> StorylineSequence:
    shots = tuple(storyline.shots[i] for i in indices)
    prompts = (tuple(storyline.shot_prompts[i] for i in indices)
               if storyline.shot_prompts is not None else None)
    first, last = indices[0] + 1, indices[-1] + 1  # 1-based, matches shot numbering
    return StorylineSequence(
        sequence_id=f"{storyline.sequence_id}:w{first:03d}-{last:03d}",
        shots=shots,
        global_narrative=None,
        shot_prompts=prompts,
    )


@dataclass(frozen=True)
class Appearance:
    clip_id: str
    frame: int
    box: tuple[float, float, float, float]
    identity_emb: tuple[float, ...]


@dataclass(frozen=True)
class SubjectTrack:
    """One identity tracked across clips."""

    identity_id: str
    appearances: tuple[Appearance, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "appearances", tuple(self.appearances))
        if not self.appearances:
            raise IntegrityError(f"{self.identity_id}: track has no appearances")
        for app in self.appearances:
            if not any(v != 0.0 for v in app.identity_emb):
                raise IntegrityError(f"{self.identity_id}: zero identity embedding")


@dataclass(frozen=True)
class MatchCandidate:
    """A ranked cross-shot reference candidate for one target clip."""

    identity_id: str
    clip_id: str
    frame: int
    box: tuple[float, float, float, float]
    identity_sim: float
    intervening_shots: int
    frame_separation: int
    diversity: float


def _separation(storyline: StorylineSequence, ref_idx: int, target_idx: int) -> tuple[int, int]:
    """(intervening shot count, frame gap) between two shots of a storyline.

    The frame gap is only meaningful when the shots come from the same
    source timeline; otherwise it is 0 and the intervening rule must carry.
    """
    lo, hi = sorted((ref_idx, target_idx))
    intervening = hi - lo - 1
    a, b = storyline.shots[lo], storyline.shots[hi]
    gap = max(0, b.start_frame - a.end_frame) if a.source_id == b.source_id else 0
    return intervening, gap


def cross_shot_match(tracks: Sequence[SubjectTrack],
                     storyline: StorylineSequence,
                     target_clip_id: str,
                     constraints: MatchConstraints = MatchConstraints(),
                     keypoints: Mapping[tuple[str, int], KeypointSet] | None = None,
                     ) -> list[MatchCandidate]:
    """Rank reference candidates for the subject appearing in a target clip.

    Candidates are the target subject's appearances in *other* shots of the
    storyline that satisfy the separation disjunction (>= 1 intervening shot
    OR >= 32 frames apart) and whose identity cosine to the target-clip
    appearance clears the threshold.  Ranking prefers view diversity: pose
    dissimilarity when keypoints are available for both ends, identity
    dissimilarity otherwise; ties break on (clip_id, frame).
    """
    clip_index = {s.clip_id: i for i, s in enumerate(storyline.shots)}
    if target_clip_id not in clip_index:
        raise ValueError(f"{target_clip_id!r} is not a clip of {storyline.sequence_id!r}")
    target_idx = clip_index[target_clip_id]

    matching_tracks = [
        t for t in tracks if any(a.clip_id == target_clip_id for a in t.appearances)
    ]
    if not matching_tracks:
        raise MetricError("NO_TRACK", f"no track appears in {target_clip_id!r}")

    candidates: list[MatchCandidate] = []
    for track in matching_tracks:
        anchor = min((a for a in track.appearances if a.clip_id == target_clip_id),
                     key=lambda a: a.frame)
        anchor_kps = keypoints.get((anchor.clip_id, anchor.frame)) if keypoints else None
        for app in track.appearances:
            if app.clip_id == target_clip_id or app.clip_id not in clip_index:
                continue
            intervening, gap = _separation(storyline, clip_index[app.clip_id], target_idx)
            if (intervening < constraints.min_intervening_shots
                    and gap < constraints.min_frame_separation):
                continue
            identity_sim = cosine(np.asarray(app.identity_emb),
                                  np.asarray(anchor.identity_emb))
            if identity_sim < constraints.min_identity_sim:
                continue
            diversity = 1.0 - identity_sim
            if keypoints is not None and anchor_kps is not None:
                cand_kps = keypoints.get((app.clip_id, app.frame))
                if cand_kps is not None:
                    try:
                        diversity = 1.0 - sim_pose(anchor_kps, cand_kps)
                    except DegenerateError:
                        pass
            candidates.append(MatchCandidate(
                identity_id=track.identity_id,
                clip_id=app.clip_id,
                frame=app.frame,
                box=app.box,
                identity_sim=identity_sim,
                intervening_shots=intervening,
                frame_separation=gap,
                diversity=diversity,
            ))
    if not candidates:
        raise MetricError("EMPTY", f"no reference candidate for {target_clip_id!r}")
    candidates.sort(key=lambda c: (-c.diversity, c.clip_id, c.frame))
    return candidates


def build_s2v_pair(candidate: MatchCandidate, target: StorylineSequence,
                   constraints: MatchConstraints = MatchConstraints()) -> S2VPair:
    """Construct the pair record, enforcing every pair invariant.

    ``target`` is the sequence the pair trains/evaluates against; it must
    not contain the reference clip.
    """
    target_clips = {s.clip_id for s in target.shots}
    if candidate.clip_id in target_clips:
        raise IntegrityError(
            f"reference {candidate.clip_id!r} is inside target sequence "
            f"{target.sequence_id!r}")
    if candidate.identity_sim < constraints.min_identity_sim:
        raise IntegrityError(
            f"identity similarity {candidate.identity_sim:.4f} below "
            f"{constraints.min_identity_sim}")
    return S2VPair(
        pair_id=f"{target.sequence_id}::{candidate.clip_id}@{candidate.frame}",
        reference_clip_id=candidate.clip_id,
        reference_frame=candidate.frame,
        reference_box=candidate.box,
        target_sequence_id=target.sequence_id,
        intervening_shots=candidate.intervening_shots,
        frame_separation=candidate.frame_separation,
        identity_similarity=candidate.identity_sim,
    )


# ---------------------------------------------------------------------------
# Track interchange (JSONL, same conventions as the manifest format).


def parse_tracks(data: str | bytes) -> list[SubjectTrack]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    tracks = []
    for line in text.splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        tracks.append(SubjectTrack(
            identity_id=str(raw["identity_id"]),
            appearances=tuple(
                Appearance(
                    clip_id=str(a["clip_id"]),
                    frame=int(a["frame"]),
                    box=tuple(float(x) for x in a["box"]),
                    identity_emb=tuple(float(x) for x in a["identity_emb"]),
                ) for a in raw["appearances"]),
        ))
    return tracks


def serialize_tracks(tracks: Iterable[SubjectTrack]) -> str:
    lines = []
    for t in tracks:
        obj: dict[str, Any] = {
            "schema_version": 1,
            "identity_id": t.identity_id,
            "appearances": [
                {"clip_id": a.clip_id, "frame": a.frame, "box": list(a.box),
                 "identity_emb": list(a.identity_emb)}
                for a in t.appearances],
        }
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


@dataclass
class RejectionLog:
    """One line per dropped clip or pair, with stage/reason."""

    entries: list[dict[str, Any]] = field(default_factory=list)

    def add(self, kind: str, ident: str, reason: str) -> None:
        self.entries.append({"kind": kind, "id": ident, "reason": reason})

    def render(self) -> str:
        return "".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n"
            for e in self.entries)
