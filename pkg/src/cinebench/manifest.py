"""Domain records and the line-delimited manifest format.

A manifest is UTF-8 text with one JSON record per line.  Every record carries
an explicit ``schema_version``; unknown fields are preserved verbatim through
a parse/serialize round trip.  Serialization is canonical (sorted keys,
compact separators), so ``serialize(parse(line)) == line`` whenever ``line``
is itself canonical, and ``parse(serialize(x)) == x`` always.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .errors import IntegrityError

SCHEMA_VERSION = 1

# Keys owned by each record type; everything else round-trips via `extras`.
_SHOT_KEYS = ("clip_id", "source_id", "start_frame", "end_frame", "fps",
              "caption", "caption_rewritten")
_SEQUENCE_KEYS = ("schema_version", "sequence_id", "shots", "global_narrative",
                  "shot_prompts")
_PAIR_KEYS = ("schema_version", "pair_id", "reference_clip_id", "reference_frame",
              "reference_box", "target_sequence_id", "intervening_shots",
              "frame_separation", "identity_similarity")


@dataclass(frozen=True)
class ShotRecord:
    """One continuous camera shot, identified by ``clip_id`` and a frame span
    ``[start_frame, end_frame)`` inside the source video ``source_id``."""

    clip_id: str
    source_id: str
    start_frame: int
    end_frame: int
    fps: float
    caption: str = ""
    caption_rewritten: str | None = None
    extras: dict[str, Any] = field(default_factory=dict, compare=True)

    def __post_init__(self) -> None:
        if self.start_frame < 0:
            raise IntegrityError(f"{self.clip_id}: start_frame must be >= 0")
        if self.end_frame <= self.start_frame:
            raise IntegrityError(
                f"{self.clip_id}: end_frame ({self.end_frame}) must be > "
                f"start_frame ({self.start_frame})")
        if not self.fps > 0:
            raise IntegrityError(f"{self.clip_id}: fps must be positive")

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame


@dataclass(frozen=True)
class StorylineSequence:
    """An ordered multi-shot storyline.

    Prompt-count and frame-monotonicity problems are *reported* by
    :func:`cinebench.validation.validate_sequence` rather than rejected here,
    so invalid sequences can be carried through large corpora and counted.
    """

    sequence_id: str
    shots: tuple[ShotRecord, ...]
    global_narrative: str | None = None
    shot_prompts: tuple[str, ...] | None = None
    extras: dict[str, Any] = field(default_factory=dict, compare=True)

    def __post_init__(self) -> None:
        object.__setattr__(self, "shots", tuple(self.shots))
        if self.shot_prompts is not None:
            object.__setattr__(self, "shot_prompts", tuple(self.shot_prompts))
        if not self.shots:
            raise IntegrityError(f"{self.sequence_id}: shots must be non-empty")

    @property
    def total_frames(self) -> int:
        return sum(s.n_frames for s in self.shots)


@dataclass(frozen=True)
class S2VPair:
    """A reference appearance paired with a target sequence.

    The separation disjunction (>=1 intervening shot OR >=32 frames apart) is
    enforced at construction; the no-self-reference rule needs the target
    sequence and is checked by the curation builder and by validation.
    """

    pair_id: str
    reference_clip_id: str
    reference_frame: int
    reference_box: tuple[float, float, float, float]
    target_sequence_id: str
    intervening_shots: int
    frame_separation: int
    identity_similarity: float
    extras: dict[str, Any] = field(default_factory=dict, compare=True)

    MIN_FRAME_SEPARATION = 32

    def __post_init__(self) -> None:
        object.__setattr__(self, "reference_box", tuple(self.reference_box))
        if self.reference_frame < 0:
            raise IntegrityError(f"{self.pair_id}: reference_frame must be >= 0")
        if self.intervening_shots < 0 or self.frame_separation < 0:
            raise IntegrityError(f"{self.pair_id}: separations must be >= 0")
        if len(self.reference_box) != 4:
            raise IntegrityError(f"{self.pair_id}: reference_box must have 4 floats")
        if not -1.0 <= self.identity_similarity <= 1.0:
            raise IntegrityError(f"{self.pair_id}: identity_similarity out of [-1,1]")
        if self.intervening_shots < 1 and self.frame_separation < self.MIN_FRAME_SEPARATION:
            raise IntegrityError(
                f"{self.pair_id}: reference too close to target "
                f"({self.intervening_shots} intervening shots, "
                f"{self.frame_separation} frames apart)")


@dataclass(frozen=True)
class RecordIssue:
    """A per-line problem found while parsing a manifest."""

    line: int
    code: str  # PARSE_ERROR | INTEGRITY_ERROR
    message: str


# ---------------------------------------------------------------------------
# parse / serialize


def _canonical(obj: dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _shot_to_dict(shot: ShotRecord) -> dict[str, Any]:
    d: dict[str, Any] = {
        "clip_id": shot.clip_id,
        "source_id": shot.source_id,
        "start_frame": shot.start_frame,
        "end_frame": shot.end_frame,
        "fps": shot.fps,
        "caption": shot.caption,
    }
    if shot.caption_rewritten is not None:
        d["caption_rewritten"] = shot.caption_rewritten
    d.update(shot.extras)
    return d


def _shot_from_dict(d: dict[str, Any]) -> ShotRecord:
    extras = {k: v for k, v in d.items() if k not in _SHOT_KEYS}
    return ShotRecord(
        clip_id=str(d["clip_id"]),
        source_id=str(d["source_id"]),
        start_frame=int(d["start_frame"]),
        end_frame=int(d["end_frame"]),
        fps=float(d["fps"]),
        caption=str(d.get("caption", "")),
        caption_rewritten=d.get("caption_rewritten"),
        extras=extras,
    )


def sequence_to_dict(seq: StorylineSequence) -> dict[str, Any]:
    d: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "sequence_id": seq.sequence_id,
        "shots": [_shot_to_dict(s) for s in seq.shots],
    }
    if seq.global_narrative is not None:
        d["global_narrative"] = seq.global_narrative
    if seq.shot_prompts is not None:
        d["shot_prompts"] = list(seq.shot_prompts)
    d.update(seq.extras)
    return d


def sequence_from_dict(d: dict[str, Any]) -> StorylineSequence:
    if "schema_version" not in d:
        raise IntegrityError("record missing schema_version")
    extras = {k: v for k, v in d.items() if k not in _SEQUENCE_KEYS}
    prompts = d.get("shot_prompts")
    return StorylineSequence(
        sequence_id=str(d["sequence_id"]),
        shots=tuple(_shot_from_dict(s) for s in d["shots"]),
        global_narrative=d.get("global_narrative"),
        shot_prompts=tuple(str(p) for p in prompts) if prompts is not None else None,
        extras=extras,
    )


def pair_to_dict(pair: S2VPair) -> dict[str, Any]:
    d: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "pair_id": pair.pair_id,
        "reference_clip_id": pair.reference_clip_id,
        "reference_frame": pair.reference_frame,
        "reference_box": list(pair.reference_box),
        "target_sequence_id": pair.target_sequence_id,
        "intervening_shots": pair.intervening_shots,
        "frame_separation": pair.frame_separation,
        "identity_similarity": pair.identity_similarity,
    }
    d.update(pair.extras)
    return d


def pair_from_dict(d: dict[str, Any]) -> S2VPair:
    if "schema_version" not in d:
        raise IntegrityError("record missing schema_version")
    extras = {k: v for k, v in d.items() if k not in _PAIR_KEYS}
    return S2VPair(
        pair_id=str(d["pair_id"]),
        reference_clip_id=str(d["reference_clip_id"]),
        reference_frame=int(d["reference_frame"]),
        reference_box=tuple(float(x) for x in d["reference_box"]),
        target_sequence_id=str(d["target_sequence_id"]),
        intervening_shots=int(d["intervening_shots"]),
        frame_separation=int(d["frame_separation"]),
        identity_similarity=float(d["identity_similarity"]),
        extras=extras,
    )


def _iter_lines(data: str | bytes) -> Iterator[tuple[int, str]]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            yield i, line


def parse_manifest(data: str | bytes,
                   require_unique_clips: bool = True,
                   ) -> tuple[list[StorylineSequence], list[RecordIssue]]:
    """Parse a sequence manifest; never raises on bad records.

    Returns the parsed sequences in input order plus one issue per rejected
    line.  ``clip_id`` uniqueness is enforced manifest-wide by default; pass
    ``require_unique_clips=False`` for derived artifacts (sliding windows)
    where the same physical clip legitimately appears in several sequences.
    """
    sequences: list[StorylineSequence] = []
    issues: list[RecordIssue] = []
    seen_clips: set[str] = set()
    for lineno, line in _iter_lines(data):
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(RecordIssue(lineno, "PARSE_ERROR", str(exc)))
            continue
        try:
            seq = sequence_from_dict(raw)
            clip_ids = [s.clip_id for s in seq.shots]
            dup = _first_duplicate(clip_ids, seen_clips if require_unique_clips
                                   else set())
            if dup is not None:
                raise IntegrityError(f"duplicate clip_id {dup!r}")
            if seq.shot_prompts is not None and len(seq.shot_prompts) != len(seq.shots):
                raise IntegrityError(
                    f"{seq.sequence_id}: {len(seq.shot_prompts)} shot_prompts "
                    f"for {len(seq.shots)} shots")
        except IntegrityError as exc:
            issues.append(RecordIssue(lineno, "INTEGRITY_ERROR", str(exc)))
            continue
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(RecordIssue(lineno, "PARSE_ERROR", repr(exc)))
            continue
        seen_clips.update(clip_ids)
        sequences.append(seq)
    return sequences, issues


def _first_duplicate(clip_ids: list[str], seen: set[str]) -> str | None:
    local: set[str] = set()
    for cid in clip_ids:
        if cid in seen or cid in local:
            return cid
        local.add(cid)
    return None


def serialize_manifest(sequences: Iterable[StorylineSequence]) -> str:
    return "".join(_canonical(sequence_to_dict(s)) + "\n" for s in sequences)


def parse_pair_manifest(data: str | bytes) -> tuple[list[S2VPair], list[RecordIssue]]:
    pairs: list[S2VPair] = []
    issues: list[RecordIssue] = []
    for lineno, line in _iter_lines(data):
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(RecordIssue(lineno, "PARSE_ERROR", str(exc)))
            continue
        try:
            pairs.append(pair_from_dict(raw))
        except IntegrityError as exc:
            issues.append(RecordIssue(lineno, "INTEGRITY_ERROR", str(exc)))
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(RecordIssue(lineno, "PARSE_ERROR", repr(exc)))
    return pairs, issues


def serialize_pair_manifest(pairs: Iterable[S2VPair]) -> str:
    return "".join(_canonical(pair_to_dict(p)) + "\n" for p in pairs)
