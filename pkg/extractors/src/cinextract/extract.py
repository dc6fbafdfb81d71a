"""Clip decoding and bundle emission.

Bundles are written atomically (temp file + rename), so a crashed run never
leaves a partial bundle observable.  A family that fails on a clip is
recorded as an absent tensor plus a log line; decode failures abort the
clip with no output file.
"""

from __future__ import annotations

import logging
import os
import tempfile
from pathlib import Path

import cv2
import numpy as np

from cinebench import FeatureBundle, write_feature_bundle

from . import families
from .config import SEQUENCE_FAMILIES, ExtractorConfig

logger = logging.getLogger(__name__)


class DecodeError(RuntimeError):
    pass


def decode_clip(path: Path) -> tuple[list[np.ndarray], float]:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise DecodeError(f"DECODE_FAIL: cannot open {path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    frames = []
    while True:
        ret, frame = cap.read()
        if not ret:
            break
        frames.append(frame)
    cap.release()
    if not frames:
        raise DecodeError(f"DECODE_FAIL: no frames decoded from {path}")
    return frames, float(fps)


def _shot_tensors(frames: list[np.ndarray], clip_id: str, caption: str,
                  config: ExtractorConfig) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    n = len(frames)
    for family in config.families:
        try:
            if family == "pose":
                tensors["keypoints"] = np.stack(
                    [families.pose_keypoints(f) for f in frames])
            elif family == "subject":
                tensors["subject_emb"] = np.stack(
                    [families.subject_embedding(f) for f in frames])
            elif family == "face":
                tensors["face_emb"] = np.stack(
                    [families.face_embedding(f) for f in frames])
            elif family == "background":
                sample = frames[:: max(1, n // 8)]
                tensors["background_emb"] = families.background_embedding(sample)[None, :]
            elif family == "text":
                tensors["text_sim"] = np.array(
                    [families.text_similarity_stub(clip_id, caption)])
            elif family == "flow":
                tensors["flow_mag"] = families.flow_magnitudes(frames)
            elif family == "detect":
                tensors["detections"] = families.motion_blob_detections(frames)
        except Exception as exc:  # family failure leaves the tensor absent
            logger.warning("family %s failed on %s: %s", family, clip_id, exc)
    return tensors


def _sequence_tensors(frames: list[np.ndarray],
                      config: ExtractorConfig) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    boundaries = families.shot_boundaries(frames)
    if "boundaries" in config.families:
        tensors["boundaries"] = boundaries
    if "coherence" in config.families:
        tensors["coherence"] = families.boundary_coherence(frames, boundaries)
    return tensors


def extract_bundle(clip_path: Path, config: ExtractorConfig,
                   out_dir: Path, clip_id: str | None = None,
                   caption: str = "", kind: str = "shot") -> Path:
    """Decode one clip, compute the configured families, write the bundle.

    ``kind`` selects the tensor set: per-shot frame tensors or the
    sequence-level boundary/coherence tensors.  Re-running with identical
    inputs overwrites the bundle with identical bytes.
    """
    clip_path = Path(clip_path)
    clip_id = clip_id or clip_path.stem
    frames, _ = decode_clip(clip_path)
    if kind == "sequence":
        seq_config = ExtractorConfig(families=SEQUENCE_FAMILIES,
                                     clips_dir=config.clips_dir)
        tensors = _sequence_tensors(frames, seq_config)
        provenance = seq_config.provenance()
    else:
        tensors = _shot_tensors(frames, clip_id, caption, config)
        provenance = config.provenance()

    bundle = FeatureBundle(clip_id=clip_id, tensors=tensors,
                           provenance=provenance)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    final = out_dir / f"{clip_id}.cbf"
    data = write_feature_bundle(bundle)
    fd, tmp_name = tempfile.mkstemp(dir=out_dir, prefix=f".{clip_id}.",
                                    suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp_name, final)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return final
