"""Deterministic synthetic corpus for desk-scale runs and the test suite.

Generates a manifest, per-shot and per-sequence bundles, a reference bundle
and S2V pair for every even-numbered sequence, subject tracks, a distractor
gallery, a reference coherence bundle, and canned judge scores.  Everything
derives from one seed, so repeated builds are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bundle import FeatureBundle, save_bundle
from .manifest import (S2VPair, ShotRecord, StorylineSequence,
                       serialize_manifest, serialize_pair_manifest)
from .curation import Appearance, SubjectTrack, serialize_tracks
from .temporal import expected_boundaries

N_JOINTS = 17
EMB_DIM = 16
FACE_DIM = 8


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _shot_bundle(rng: np.random.Generator, shot: ShotRecord,
                 identity: np.ndarray, face: np.ndarray,
                 base_pose: np.ndarray, flow_level: float,
                 quality: np.ndarray, subject_noise: float = 0.05) -> FeatureBundle:
    n = shot.n_frames
    subject = np.stack([_unit(identity + subject_noise * rng.normal(size=EMB_DIM))
                        for _ in range(n)])
    faces = np.stack([_unit(face + 0.05 * rng.normal(size=FACE_DIM))
                      for _ in range(n)])
    kps = np.zeros((n, N_JOINTS, 3))
    for t in range(n):
        drift = 0.02 * rng.normal(size=(N_JOINTS, 2))
        kps[t, :, :2] = np.clip(base_pose + drift, 0.0, 1.0)
        kps[t, :, 2] = rng.uniform(0.6, 1.0, size=N_JOINTS)
    detections = np.array(
        [[t, 0, float(rng.uniform(0.1, 0.99)), 0.3, 0.2, 0.4, 0.6]
         for t in range(n) if rng.random() < 0.85])
    return FeatureBundle(clip_id=shot.clip_id, tensors={
        "keypoints": kps,
        "subject_emb": subject,
        "face_emb": faces,
        "background_emb": _unit(rng.normal(size=EMB_DIM))[None, :],
        "text_sim": np.array([float(rng.uniform(0.21, 0.30))]),
        "flow_mag": rng.uniform(0.8, 1.2, size=n) * flow_level,
        "detections": detections,
        "quality": quality,
    })


def build_stub_corpus(root: Path, n_sequences: int = 20, seed: int = 7) -> dict:
    """Write the corpus under ``root``; returns the path map."""
    root = Path(root)
    bundles = root / "bundles"
    bundles.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    sequences: list[StorylineSequence] = []
    pairs: list[S2VPair] = []
    tracks: list[SubjectTrack] = []
    mdvl_rows: list[dict] = []

    for i in range(n_sequences):
        seq_id = f"seq{i:03d}"
        n_shots = int(rng.integers(2, 5))
        identity = _unit(rng.normal(size=EMB_DIM))
        face = _unit(rng.normal(size=FACE_DIM))
        base_pose = rng.uniform(0.2, 0.8, size=(N_JOINTS, 2))
        static = i % 10 == 9  # one in ten fails the motion gate
        flow_level = 0.1 if static else float(rng.uniform(3.0, 60.0))

        shots = []
        pos = 0
        gap = 40 if i % 3 == 0 else 0
        for j in range(n_shots):
            n_frames = int(rng.integers(30, 61))
            shots.append(ShotRecord(
                clip_id=f"{seq_id}-s{j + 1}", source_id=f"video{i:03d}",
                start_frame=pos, end_frame=pos + n_frames, fps=16.0,
                caption=f"shot {j + 1} of storyline {i}",
                caption_rewritten=f"rewritten shot {j + 1} of storyline {i}"))
            pos += n_frames + gap

        seq = StorylineSequence(
            sequence_id=seq_id, shots=tuple(shots),
            global_narrative=f"storyline {i} about subject {i % 5}",
            shot_prompts=tuple(f"prompt {j + 1} for storyline {i}"
                               for j in range(n_shots)))
        sequences.append(seq)

        # per-shot bundles; a few shots carry failing quality scores
        appearances = []
        for j, shot in enumerate(shots):
            failing = (i % 7 == 6) and j == 0
            quality = np.array([
                0.72 if failing else float(rng.uniform(0.82, 0.95)),
                float(rng.uniform(0.82, 0.95)),
                float(rng.uniform(4.1, 4.9)),
                float(rng.uniform(0.21, 0.35)),
                float(rng.uniform(0.03, 0.08)),
                flow_level,
            ])
            # sequences divisible by 4 imitate copy-paste generations (frames
            # hug the reference embedding); the rest drift more freely
            subject_noise = 0.05 if i % 4 == 0 else 0.45
            bundle = _shot_bundle(rng, shot, identity, face, base_pose,
                                  flow_level, quality, subject_noise)
            save_bundle(bundle, bundles / f"{shot.clip_id}.cbf")
            appearances.append(Appearance(
                clip_id=shot.clip_id, frame=int(rng.integers(0, shot.n_frames)),
                box=(0.3, 0.2, 0.4, 0.6),
                identity_emb=tuple(_unit(identity + 0.03 * rng.normal(size=EMB_DIM)))))

        tracks.append(SubjectTrack(identity_id=f"person{i:03d}",
                                   appearances=tuple(appearances)))

        # sequence-level bundle: detected boundaries and adjacent-shot coherence
        expected = expected_boundaries([s.n_frames for s in shots])
        offsets = rng.integers(-2, 3, size=len(expected.frames))
        detected = sorted({int(f + o) for f, o in zip(expected.frames, offsets)
                           if 0 < f + o < expected.clip_len})
        save_bundle(FeatureBundle(clip_id=seq_id, tensors={
            "boundaries": np.array(detected, dtype=float),
            "coherence": rng.uniform(0.1, 0.9, size=n_shots - 1),
        }), bundles / f"{seq_id}.cbf")

        # external reference for every even sequence
        if i % 2 == 0:
            ref_id = f"ref{i:03d}"
            ref_pose = np.clip(
                base_pose + 0.15 * rng.normal(size=(N_JOINTS, 2)), 0.0, 1.0)
            ref_kps = np.zeros((1, N_JOINTS, 3))
            ref_kps[0, :, :2] = ref_pose
            ref_kps[0, :, 2] = 1.0
            save_bundle(FeatureBundle(clip_id=ref_id, tensors={
                "keypoints": ref_kps,
                "subject_emb": _unit(identity + 0.05 * rng.normal(size=EMB_DIM))[None, :],
                "face_emb": _unit(face + 0.05 * rng.normal(size=FACE_DIM))[None, :],
            }), bundles / f"{ref_id}.cbf")
            pairs.append(S2VPair(
                pair_id=f"{seq_id}::{ref_id}@0",
                reference_clip_id=ref_id, reference_frame=0,
                reference_box=(0.3, 0.2, 0.4, 0.6),
                target_sequence_id=seq_id,
                intervening_shots=1, frame_separation=0,
                identity_similarity=0.85))

        mdvl_rows.append({
            "schema_version": 1, "sequence_id": seq_id,
            "scene_logic": int(rng.integers(2, 6)),
            "casting_logic": int(rng.integers(2, 6)),
            "act_logic": int(rng.integers(2, 6)),
            "spat_logic": int(rng.integers(2, 6)),
            "reasoning": "synthetic judge output"})

    # distractor gallery and reference coherence distribution
    gallery = np.stack([_unit(rng.normal(size=EMB_DIM)) for _ in range(9)])
    save_bundle(FeatureBundle(clip_id="gallery", tensors={"subject_emb": gallery}),
                root / "gallery.cbf")
    save_bundle(FeatureBundle(clip_id="ref_coherence", tensors={
        "coherence": rng.uniform(0.1, 0.9, size=400)}),
        root / "ref_coherence.cbf")

    (root / "manifest.jsonl").write_text(serialize_manifest(sequences),
                                         encoding="utf-8")
    (root / "pairs.jsonl").write_text(serialize_pair_manifest(pairs),
                                      encoding="utf-8")
    (root / "tracks.jsonl").write_text(serialize_tracks(tracks), encoding="utf-8")
    (root / "mdvl_scores.jsonl").write_text("".join(
        json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
        for r in mdvl_rows), encoding="utf-8")

    return {
        "manifest": root / "manifest.jsonl",
        "bundle_dir": bundles,
        "pairs": root / "pairs.jsonl",
        "tracks": root / "tracks.jsonl",
        "mdvl_scores": root / "mdvl_scores.jsonl",
        "gallery_bundle": root / "gallery.cbf",
        "ref_coherence_bundle": root / "ref_coherence.cbf",
    }
