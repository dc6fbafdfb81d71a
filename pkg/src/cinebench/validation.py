"""Structural validation of sequences, bundles, and pairs.

Validation never aborts: it returns a report listing every violated
invariant with a machine-readable code, and scoring later skips (and
counts) sequences whose report is non-empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bundle import RESERVED_TENSORS, BundleIndex, FeatureBundle
from .manifest import S2VPair, StorylineSequence


@dataclass(frozen=True)
class Finding:
    code: str
    clip_id: str | None = None
    detail: str = ""

    def render(self) -> str:
        where = f"({self.clip_id})" if self.clip_id else ""
        return f"{self.code}{where}: {self.detail}" if self.detail else f"{self.code}{where}"


@dataclass
class ValidationReport:
    sequence_id: str
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, code: str, clip_id: str | None = None, detail: str = "") -> None:
        self.findings.append(Finding(code, clip_id, detail))

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]


# Per-shot tensors whose leading dimension must equal the shot's frame count.
_FRAME_TENSORS = ("keypoints", "subject_emb", "face_emb", "flow_mag")


def validate_bundle_tensors(bundle: FeatureBundle, n_frames: int | None,
                            report: ValidationReport) -> None:
    """Check reserved-tensor ranks and frame-count agreement for one bundle."""
    for name, arr in bundle.tensors.items():
        want_rank = RESERVED_TENSORS.get(name)
        if want_rank is not None and arr.ndim != want_rank:
            report.add("TENSOR_SHAPE", bundle.clip_id,
                       f"{name} has rank {arr.ndim}, expected {want_rank}")
            continue
        if name == "keypoints" and arr.ndim == 3 and arr.shape[2] != 3:
            report.add("TENSOR_SHAPE", bundle.clip_id,
                       f"keypoints last dim is {arr.shape[2]}, expected 3")
        if name == "detections" and arr.ndim == 2 and arr.shape[1] != 7:
            report.add("TENSOR_SHAPE", bundle.clip_id,
                       f"detections rows have {arr.shape[1]} columns, expected 7")
        if n_frames is not None and name in _FRAME_TENSORS and arr.shape[0] != n_frames:
            report.add("TENSOR_SHAPE", bundle.clip_id,
                       f"{name} covers {arr.shape[0]} frames, shot has {n_frames}")


def validate_sequence(seq: StorylineSequence, bundle_index: BundleIndex) -> ValidationReport:
    """Pure structural check of one sequence against its per-shot bundles."""
    report = ValidationReport(seq.sequence_id)

    if seq.shot_prompts is not None and len(seq.shot_prompts) != len(seq.shots):
        report.add("PROMPT_COUNT_MISMATCH", detail=(
            f"{len(seq.shot_prompts)} prompts for {len(seq.shots)} shots"))

    for prev, cur in zip(seq.shots, seq.shots[1:]):
        if prev.source_id == cur.source_id and prev.end_frame > cur.start_frame:
            report.add("NON_MONOTONE_FRAMES", cur.clip_id, (
                f"starts at {cur.start_frame} before previous shot ends "
                f"at {prev.end_frame}"))

    for shot in seq.shots:
        bundle = bundle_index.get(shot.clip_id)
        if bundle is None:
            report.add("MISSING_BUNDLE", shot.clip_id)
            continue
        validate_bundle_tensors(bundle, shot.n_frames, report)

    return report


def validate_pair(pair: S2VPair, target: StorylineSequence) -> list[Finding]:
    """Check the pair invariants that need the target sequence in hand."""
    findings: list[Finding] = []
    target_clips = {s.clip_id for s in target.shots}
    if pair.reference_clip_id in target_clips:
        findings.append(Finding("SELF_REFERENCE", pair.reference_clip_id,
                                f"reference drawn from target sequence {target.sequence_id}"))
    if pair.target_sequence_id != target.sequence_id:
        findings.append(Finding("WRONG_TARGET", None,
                                f"pair targets {pair.target_sequence_id}, "
                                f"got sequence {target.sequence_id}"))
    return findings
