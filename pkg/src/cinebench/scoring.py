"""Per-sequence metric dispatch over feature bundles.

Corpus layout: one bundle per shot (keyed by clip_id) carrying frame-level
tensors for that shot plus its single-shot text_sim/background_emb rows, and
one bundle per sequence (keyed by sequence_id) carrying the cross-shot
tensors (detected boundaries, adjacent-shot coherence).  Sequences that fail
validation are skipped and counted, never fatal.
"""

from __future__ import annotations

import json
from typing import Any, Sequence

import numpy as np

from .bundle import BundleIndex, FeatureBundle
from .config import MetricConfig
from .errors import MetricError
from .manifest import S2VPair, StorylineSequence
from .mdvl import MdvlScores
from .pose import KeypointSet, frame_pose_sims
from .report import Track1Result, Track2Result
from .similarity import (CopyPasteStat, copy_paste_stats, inter_subject_consistency,
                         ref_subject_consistency, scene_consistency, subject_recall,
                         text_alignment)
from .temporal import (BoundarySet, action_strength, expected_boundaries,
                       motion_gate, transition_deviation)
from .validation import ValidationReport, validate_sequence


def detected_boundaries(bundle: FeatureBundle | None, clip_len: int) -> BoundarySet:
    """Read the boundaries tensor, dropping out-of-range or duplicate frames."""
    if bundle is None or bundle.get("boundaries") is None:
        return BoundarySet(frames=(), clip_len=clip_len)
    raw = np.rint(np.asarray(bundle.get("boundaries"))).astype(int)
    frames = sorted({int(f) for f in raw if 0 < f < clip_len})
    return BoundarySet(frames=tuple(frames), clip_len=clip_len)


def _concat_tensor(shot_bundles: Sequence[FeatureBundle], name: str) -> np.ndarray | None:
    parts = [b.get(name) for b in shot_bundles]
    if any(p is None for p in parts):
        return None
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=0)


def score_track1(seq: StorylineSequence, bundle_index: BundleIndex,
                 cfg: MetricConfig,
                 mdvl: MdvlScores | None = None) -> tuple[Track1Result | None, ValidationReport]:
    """Narrative-effectiveness metrics for one sequence; None when skipped."""
    report = validate_sequence(seq, bundle_index)
    if not report.ok:
        return None, report
    shot_bundles = [bundle_index[s.clip_id] for s in seq.shots]

    text_sims = []
    for bundle in shot_bundles:
        t = bundle.get("text_sim")
        if t is None or t.size == 0:
            report.add("MISSING_TENSOR", bundle.clip_id, "text_sim")
            return None, report
        text_sims.append(float(np.mean(t)))
    txt_align = text_alignment(text_sims)

    durations = [s.n_frames for s in seq.shots]
    if len(durations) >= 2:
        expected = expected_boundaries(durations)
        seq_bundle = bundle_index.get(seq.sequence_id)
        detected = detected_boundaries(seq_bundle, expected.clip_len)
        dev = transition_deviation(expected, detected)
        trans_dev, misses, extras = dev.mean_abs_dev, dev.misses, dev.extras
    else:
        trans_dev, misses, extras = None, 0, 0
        seq_bundle = bundle_index.get(seq.sequence_id)

    backgrounds = _concat_tensor(shot_bundles, "background_emb")
    try:
        scene_con = scene_consistency(backgrounds) if backgrounds is not None else None
    except MetricError:
        scene_con = None

    flow = _concat_tensor(shot_bundles, "flow_mag")
    if flow is None or flow.size == 0:
        report.add("MISSING_TENSOR", seq.sequence_id, "flow_mag")
        return None, report
    motion = action_strength(flow)
    gate = motion_gate(motion, cfg.motion_lo, cfg.motion_hi)

    coherence: tuple[float, ...] = ()
    if seq_bundle is not None and seq_bundle.get("coherence") is not None:
        coherence = tuple(float(v) for v in np.asarray(seq_bundle.get("coherence")))

    return Track1Result(
        sequence_id=seq.sequence_id,
        txt_align=txt_align,
        trans_dev=trans_dev,
        misses=misses,
        extras=extras,
        scene_con=scene_con,
        motion_score=motion,
        motion_passed=gate.passed,
        coherence=coherence,
        mdvl=mdvl,
    ), report


def _first_usable_row(mat: np.ndarray | None) -> np.ndarray | None:
    if mat is None:
        return None
    mat = np.asarray(mat, dtype=np.float64)
    for row in mat:
        if np.any(row != 0.0):
            return row
    return None


def _keypoint_frames(shot_bundles: Sequence[FeatureBundle]) -> list[KeypointSet] | None:
    kps = _concat_tensor(shot_bundles, "keypoints")
    if kps is None:
        return None
    return [KeypointSet.from_tensor_frame(frame) for frame in kps]


def score_track2(seq: StorylineSequence, bundle_index: BundleIndex,
                 cfg: MetricConfig,
                 pair: S2VPair | None = None,
                 gallery: np.ndarray | None = None,
                 target_class: int = 0) -> tuple[Track2Result | None, ValidationReport]:
    """Subject-consistency metrics for one sequence; None when skipped.

    With an external reference (an S2V pair pointing at a reference bundle)
    the anti-copy-paste metrics are computed; without one, identity metrics
    fall back to a pseudo-reference taken from the first generated shot and
    the anti-copy-paste metrics are inapplicable.
    """
    report = validate_sequence(seq, bundle_index)
    if not report.ok:
        return None, report
    shot_bundles = [bundle_index[s.clip_id] for s in seq.shots]

    per_shot_subjects = [b.get("subject_emb") for b in shot_bundles]
    if any(s is None for s in per_shot_subjects):
        report.add("MISSING_TENSOR", seq.sequence_id, "subject_emb")
        return None, report
    frames = np.concatenate([np.asarray(s, dtype=np.float64) for s in per_shot_subjects])
    per_shot_faces = [b.get("face_emb") for b in shot_bundles]
    have_faces = all(f is not None for f in per_shot_faces)
    faces = (np.concatenate([np.asarray(f, dtype=np.float64) for f in per_shot_faces])
             if have_faces else None)

    ref_bundle = None
    if pair is not None:
        ref_bundle = bundle_index.get(pair.reference_clip_id)
        if ref_bundle is None:
            report.add("MISSING_BUNDLE", pair.reference_clip_id, "reference bundle")
            return None, report

    if ref_bundle is not None:
        ref_subject = _first_usable_row(ref_bundle.get("subject_emb"))
        ref_face = _first_usable_row(ref_bundle.get("face_emb"))
        if ref_subject is None:
            report.add("MISSING_TENSOR", pair.reference_clip_id, "subject_emb")
            return None, report
        external = True
    else:
        ref_subject = _first_usable_row(per_shot_subjects[0])
        ref_face = _first_usable_row(per_shot_faces[0]) if have_faces else None
        external = False
        if ref_subject is None:
            report.add("NO_USABLE_FRAMES", seq.shots[0].clip_id,
                       "no pseudo-reference in first shot")
            return None, report

    try:
        ref_con = ref_subject_consistency(ref_subject, ref_face, frames,
                                          faces, cfg.face_weight)
    except MetricError as exc:
        report.add(exc.code, seq.sequence_id, "ref_sub_con")
        return None, report

    try:
        inter_con = inter_subject_consistency(per_shot_subjects,
                                              per_shot_faces if have_faces else None,
                                              cfg.face_weight)
    except MetricError:
        inter_con = None

    recall_scores = []
    for shot, bundle in zip(seq.shots, shot_bundles):
        det = bundle.get("detections")
        designated = range(shot.n_frames)
        recall_scores.append(subject_recall(
            det if det is not None else np.zeros((0, 7)),
            designated, target_class, cfg.recall_conf_min))
    frame_weights = [s.n_frames for s in seq.shots]
    recall = float(np.average(recall_scores, weights=frame_weights))

    flow = _concat_tensor(shot_bundles, "flow_mag")
    act_str = action_strength(flow) if flow is not None and flow.size else 0.0

    acp: float | None = None
    copy_fraction: float | None = None
    if external:
        ref_kps_tensor = ref_bundle.get("keypoints")
        frame_kps = _keypoint_frames(shot_bundles)
        if ref_kps_tensor is not None and ref_kps_tensor.shape[0] >= 1 and frame_kps:
            ref_kps = KeypointSet.from_tensor_frame(
                np.asarray(ref_kps_tensor)[min(pair.reference_frame,
                                               ref_kps_tensor.shape[0] - 1)])
            sims = [s for s in frame_pose_sims(ref_kps, frame_kps, cfg.vis_min)
                    if s is not None]
            acp = 1.0 - float(np.mean(sims)) if sims else None
        if gallery is not None and gallery.size:
            full_gallery = np.vstack([np.asarray(ref_subject)[None, :],
                                      np.asarray(gallery, dtype=np.float64)])
            stats: list[CopyPasteStat] = []
            for row in frames:
                if not np.any(row != 0.0):
                    continue
                stats.append(copy_paste_stats(row, full_gallery,
                                              cfg.softmax_temperature))
            if stats:
                flagged = sum(1 for s in stats
                              if s.entropy < cfg.cp_entropy_threshold and s.argmax == 0)
                copy_fraction = flagged / len(stats)

    return Track2Result(
        sequence_id=seq.sequence_id,
        ref_sub_con=ref_con,
        inter_sub_con=inter_con,
        subj_recall=recall,
        act_str=act_str,
        acp_var=acp,
        copy_fraction=copy_fraction,
        has_external_reference=external,
    ), report


# ---------------------------------------------------------------------------
# Result record files (JSONL)


def track1_to_dict(r: Track1Result) -> dict[str, Any]:
    d: dict[str, Any] = {
        "schema_version": 1,
        "track": 1,
        "sequence_id": r.sequence_id,
        "txt_align": r.txt_align,
        "trans_dev": r.trans_dev,
        "misses": r.misses,
        "extras": r.extras,
        "scene_con": r.scene_con,
        "motion_score": r.motion_score,
        "motion_passed": r.motion_passed,
        "coherence": list(r.coherence),
    }
    if r.mdvl is not None:
        d["mdvl"] = {"scene_logic": r.mdvl.scene_logic,
                     "casting_logic": r.mdvl.casting_logic,
                     "act_logic": r.mdvl.act_logic,
                     "spat_logic": r.mdvl.spat_logic,
                     "reasoning": r.mdvl.reasoning}
    return d


def track1_from_dict(d: dict[str, Any]) -> Track1Result:
    mdvl = None
    if "mdvl" in d:
        mdvl = MdvlScores(**d["mdvl"])
    return Track1Result(
        sequence_id=d["sequence_id"],
        txt_align=d["txt_align"],
        trans_dev=d["trans_dev"],
        misses=d["misses"],
        extras=d["extras"],
        scene_con=d.get("scene_con"),
        motion_score=d["motion_score"],
        motion_passed=d["motion_passed"],
        coherence=tuple(d.get("coherence", ())),
        mdvl=mdvl,
    )


def track2_to_dict(r: Track2Result) -> dict[str, Any]:
    return {
        "schema_version": 1,
        "track": 2,
        "sequence_id": r.sequence_id,
        "ref_sub_con": r.ref_sub_con,
        "inter_sub_con": r.inter_sub_con,
        "subj_recall": r.subj_recall,
        "act_str": r.act_str,
        "acp_var": r.acp_var,
        "copy_fraction": r.copy_fraction,
        "has_external_reference": r.has_external_reference,
    }


def track2_from_dict(d: dict[str, Any]) -> Track2Result:
    return Track2Result(
        sequence_id=d["sequence_id"],
        ref_sub_con=d["ref_sub_con"],
        inter_sub_con=d.get("inter_sub_con"),
        subj_recall=d["subj_recall"],
        act_str=d["act_str"],
        acp_var=d.get("acp_var"),
        copy_fraction=d.get("copy_fraction"),
        has_external_reference=d.get("has_external_reference", False),
    )


def write_results(results: Sequence[Track1Result | Track2Result]) -> str:
    lines = []
    for r in sorted(results, key=lambda x: x.sequence_id):
        d = track1_to_dict(r) if isinstance(r, Track1Result) else track2_to_dict(r)
        lines.append(json.dumps(d, sort_keys=True, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def read_results(text: str) -> tuple[list[Track1Result], list[Track2Result]]:
    t1: list[Track1Result] = []
    t2: list[Track2Result] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        if d.get("track") == 1:
            t1.append(track1_from_dict(d))
        else:
            t2.append(track2_from_dict(d))
    return t1, t2
