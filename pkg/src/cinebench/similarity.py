"""Embedding-based identity, scene, grounding, and copy-paste metrics.

All comparisons are cosine after L2 normalization, so every score here is
invariant to positive rescaling of its input vectors.  Zero rows in an
embedding series mean "absent" (no subject / no face in that frame) and are
excluded rather than treated as data.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import MetricError


def _as_matrix(vectors: np.ndarray) -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected [N, D] embeddings, got shape {arr.shape}")
    return arr


def _nonzero_mask(mat: np.ndarray) -> np.ndarray:
    return np.any(mat != 0.0, axis=1)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise MetricError("ZERO_VECTOR", "cannot normalize a zero vector")
    return v / n


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two non-zero vectors."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    return float(np.clip(np.dot(_unit(a), _unit(b)), -1.0, 1.0))


def _blend(subject_sim: float, face_sim: float | None, face_weight: float) -> float:
    if face_sim is None:
        return subject_sim
    return face_weight * face_sim + (1.0 - face_weight) * subject_sim


def ref_subject_consistency(ref_subject: np.ndarray,
                            ref_face: np.ndarray | None,
                            frames: np.ndarray,
                            faces: np.ndarray | None = None,
                            face_weight: float = 0.5) -> float:
    """Fidelity of generated frames to an external reference, on a 0-100 scale.

    Per frame the score blends face and whole-subject cosine when both sides
    have a face embedding, otherwise it falls back to the subject cosine.
    """
    frames = _as_matrix(frames)
    usable = _nonzero_mask(frames)
    if not usable.any():
        raise MetricError("NO_USABLE_FRAMES", "all frame embeddings are zero")
    face_rows = _as_matrix(faces) if faces is not None else None
    have_ref_face = ref_face is not None and np.any(np.asarray(ref_face) != 0.0)

    scores = []
    for i in np.flatnonzero(usable):
        subject_sim = cosine(ref_subject, frames[i])
        face_sim = None
        if have_ref_face and face_rows is not None and np.any(face_rows[i] != 0.0):
            face_sim = cosine(ref_face, face_rows[i])
        scores.append(_blend(subject_sim, face_sim, face_weight))
    return float(np.clip(100.0 * np.mean(scores), 0.0, 100.0))


def _shot_centroid(series: np.ndarray) -> np.ndarray | None:
    """Normalized mean of the L2-normalized non-zero rows, or None if empty."""
    mat = _as_matrix(series)
    mask = _nonzero_mask(mat)
    if not mask.any():
        return None
    rows = mat[mask]
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    centroid = rows.mean(axis=0)
    norm = np.linalg.norm(centroid)
    return centroid / norm if norm > 0 else None


def inter_subject_consistency(per_shot: Sequence[np.ndarray],
                              faces: Sequence[np.ndarray] | None = None,
                              face_weight: float = 0.5) -> float:
    """Internal identity preservation across shots, on a 0-100 scale.

    Each shot is reduced to the normalized centroid of its usable frame
    embeddings; the score is the mean cosine over all unordered cross-shot
    centroid pairs (intra-shot pairs excluded), so it is shot-order invariant.
    """
    centroids = [_shot_centroid(s) for s in per_shot]
    face_centroids = ([_shot_centroid(s) for s in faces] if faces is not None
                      else [None] * len(per_shot))
    kept = [(c, f) for c, f in zip(centroids, face_centroids) if c is not None]
    if len(kept) < 2:
        raise MetricError("FEWER_THAN_TWO_SHOTS",
                          f"only {len(kept)} shots with usable embeddings")
    scores = []
    for (ca, fa), (cb, fb) in combinations(kept, 2):
        subject_sim = float(np.clip(np.dot(ca, cb), -1.0, 1.0))
        face_sim = None
        if fa is not None and fb is not None:
            face_sim = float(np.clip(np.dot(fa, fb), -1.0, 1.0))
        scores.append(_blend(subject_sim, face_sim, face_weight))
    return float(np.clip(100.0 * np.mean(scores), 0.0, 100.0))


def scene_consistency(backgrounds: np.ndarray) -> float:
    """Mean cosine of per-shot background embeddings over cross-shot pairs."""
    mat = _as_matrix(backgrounds)
    mat = mat[_nonzero_mask(mat)]
    if mat.shape[0] < 2:
        raise MetricError("FEWER_THAN_TWO_SHOTS",
                          f"only {mat.shape[0]} usable background rows")
    unit = mat / np.linalg.norm(mat, axis=1, keepdims=True)
    sims = [float(np.dot(unit[i], unit[j]))
            for i, j in combinations(range(unit.shape[0]), 2)]
    return float(np.clip(np.mean(sims), -1.0, 1.0))


def text_alignment(per_shot_scores: Sequence[float]) -> float:
    """Mean of per-shot video-prompt similarity scores."""
    scores = np.asarray(list(per_shot_scores), dtype=np.float64)
    if scores.size == 0:
        raise MetricError("EMPTY", "no per-shot scores")
    return float(scores.mean())


@dataclass(frozen=True)
class CopyPasteStat:
    """Normalized softmax entropy plus the gallery index the frame locks onto."""

    entropy: float
    argmax: int


def copy_paste_stats(frame_emb: np.ndarray, gallery: np.ndarray,
                     temperature: float) -> CopyPasteStat:
    """Softmax entropy of frame-vs-gallery similarities, normalized to [0, 1].

    ``gallery[0]`` is the reference; the remaining rows are distractor
    references.  Entropy near 0 with argmax 0 is the copy-paste signature:
    the frame resembles the reference far more than any distractor.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    gallery = _as_matrix(gallery)
    if gallery.shape[0] < 2:
        raise MetricError("EMPTY", "gallery needs the reference plus >= 1 distractor")
    frame = _unit(np.asarray(frame_emb, dtype=np.float64).ravel())
    if not _nonzero_mask(gallery).all():
        raise MetricError("ZERO_VECTOR", "gallery contains a zero row")
    unit_gallery = gallery / np.linalg.norm(gallery, axis=1, keepdims=True)
    sims = unit_gallery @ frame
    if np.all(sims == sims[0]):
        # Uniform softmax attains the maximum exactly.
        return CopyPasteStat(entropy=1.0, argmax=0)
    logits = sims / temperature
    logits -= logits.max()  # overflow guard; softmax is shift-invariant
    weights = np.exp(logits)
    probs = weights / weights.sum()
    nonzero = probs[probs > 0]
    entropy = float(-(nonzero * np.log(nonzero)).sum() / np.log(len(sims)))
    return CopyPasteStat(entropy=min(entropy, 1.0), argmax=int(np.argmax(sims)))


def copy_paste_entropy(frame_emb: np.ndarray, gallery: np.ndarray,
                       temperature: float) -> float:
    return copy_paste_stats(frame_emb, gallery, temperature).entropy


def cp_rate(sequences: Sequence[Sequence[CopyPasteStat]],
            entropy_threshold: float,
            reference_index: int = 0) -> float:
    """Percentage of frames flagged as reference copies, averaged per sequence.

    A frame is flagged iff its normalized entropy is below the threshold AND
    its softmax argmax is the reference, so frames locking onto a distractor
    are not counted against the method.
    """
    if not sequences:
        raise MetricError("EMPTY", "no sequences")
    fractions = []
    for stats in sequences:
        if not stats:
            raise MetricError("EMPTY", "sequence with no frames")
        flagged = sum(1 for s in stats
                      if s.entropy < entropy_threshold and s.argmax == reference_index)
        fractions.append(flagged / len(stats))
    return 100.0 * float(np.mean(fractions))


def subject_recall(detections: np.ndarray, designated_frames: Sequence[int],
                   target_class: int, conf_min: float) -> float:
    """Fraction of designated frames containing a confident target detection.

    ``detections`` is the [N, 7] bundle tensor (frame, class_id, conf, box).
    """
    designated = set(int(f) for f in designated_frames)
    if not designated:
        raise MetricError("EMPTY_DESIGNATED", "no designated frames")
    det = np.asarray(detections, dtype=np.float64)
    if det.size == 0:
        return 0.0
    det = det.reshape(-1, 7)
    hits = det[(det[:, 1] == target_class) & (det[:, 2] >= conf_min)]
    hit_frames = set(int(f) for f in hits[:, 0])
    return len(designated & hit_frames) / len(designated)
