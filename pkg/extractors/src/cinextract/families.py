"""Per-family feature computation on decoded frames.

All implementations are classical and run offline; they honor the reserved
tensor layouts exactly, so bundles they emit pass core validation and feed
every metric.  Scores from the `text` family are deterministic stand-ins
(hash-derived, not semantically meaningful) and are flagged as such in the
bundle provenance.
"""

from __future__ import annotations

import hashlib

import cv2
import numpy as np

N_JOINTS = 17
SUBJECT_DIM = 64
FACE_DIM = 32
BACKGROUND_BINS = 16  # per channel


def to_gray(frame: np.ndarray) -> np.ndarray:
    return cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY)


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 0 else v


def patch_embedding(frame: np.ndarray, size: int = 8) -> np.ndarray:
    """Downsampled, mean-removed grayscale patch; L2-normalized."""
    small = cv2.resize(to_gray(frame), (size, size),
                       interpolation=cv2.INTER_AREA).astype(np.float64)
    flat = small.ravel() - small.mean()
    return _unit(flat)


def pose_keypoints(frame: np.ndarray) -> np.ndarray:
    """Pseudo-pose: the largest edge contour resampled to N_JOINTS points.

    Returns [N_JOINTS, 3] with normalized x, y and confidence 1.0, or zeros
    when the frame has no usable contour (the absent convention).
    """
    h, w = frame.shape[:2]
    edges = cv2.Canny(to_gray(frame), 50, 150)
    contours, _ = cv2.findContours(edges, cv2.RETR_EXTERNAL,
                                   cv2.CHAIN_APPROX_NONE)
    if not contours:
        return np.zeros((N_JOINTS, 3))
    contour = max(contours, key=cv2.contourArea).reshape(-1, 2).astype(np.float64)
    if contour.shape[0] < N_JOINTS:
        return np.zeros((N_JOINTS, 3))
    # uniform arclength resampling
    deltas = np.diff(contour, axis=0)
    arclen = np.concatenate([[0.0], np.cumsum(np.linalg.norm(deltas, axis=1))])
    if arclen[-1] == 0:
        return np.zeros((N_JOINTS, 3))
    targets = np.linspace(0.0, arclen[-1], N_JOINTS)
    xs = np.interp(targets, arclen, contour[:, 0]) / w
    ys = np.interp(targets, arclen, contour[:, 1]) / h
    out = np.stack([xs, ys, np.ones(N_JOINTS)], axis=1)
    return out


def subject_embedding(frame: np.ndarray) -> np.ndarray:
    """Center-crop patch embedding standing in for a subject feature."""
    h, w = frame.shape[:2]
    crop = frame[h // 4: h - h // 4, w // 4: w - w // 4]
    return patch_embedding(crop if crop.size else frame)


def face_embedding(frame: np.ndarray) -> np.ndarray:
    """No offline face model is bundled; a zero row means "no face"."""
    return np.zeros(FACE_DIM)


def background_embedding(frames: list[np.ndarray]) -> np.ndarray:
    """Color histogram of the border band, averaged over sampled frames."""
    hists = []
    for frame in frames:
        h, w = frame.shape[:2]
        mask = np.ones((h, w), np.uint8)
        mask[h // 4: h - h // 4, w // 4: w - w // 4] = 0  # drop subject region
        hist = cv2.calcHist([frame], [0, 1, 2], mask,
                            [BACKGROUND_BINS] * 3,
                            [0, 256, 0, 256, 0, 256]).ravel()
        hists.append(hist)
    mean = np.mean(hists, axis=0)
    # compact the 16^3 histogram to 48 dims (per-channel marginals)
    cube = mean.reshape(BACKGROUND_BINS, BACKGROUND_BINS, BACKGROUND_BINS)
    marginals = np.concatenate([cube.sum(axis=(1, 2)), cube.sum(axis=(0, 2)),
                                cube.sum(axis=(0, 1))])
    return _unit(marginals)


def text_similarity_stub(clip_id: str, caption: str) -> float:
    """Deterministic placeholder score in [0.20, 0.30); not semantic."""
    digest = hashlib.sha256(f"{clip_id}\x00{caption}".encode("utf-8")).digest()
    return 0.20 + (digest[0] / 255.0) * 0.0999


def flow_magnitudes(frames: list[np.ndarray]) -> np.ndarray:
    """Per-frame mean optical-flow magnitude in pixels (first frame 0)."""
    mags = [0.0]
    prev = to_gray(frames[0])
    for frame in frames[1:]:
        cur = to_gray(frame)
        flow = cv2.calcOpticalFlowFarneback(prev, cur, None,
                                            0.5, 3, 15, 3, 5, 1.2, 0)
        mags.append(float(np.linalg.norm(flow, axis=2).mean()))
        prev = cur
    return np.asarray(mags)


def motion_blob_detections(frames: list[np.ndarray],
                           min_area_frac: float = 0.002) -> np.ndarray:
    """Foreground blobs against the median frame, as [N, 7] detection rows.

    class_id is always 0 (primary subject); confidence grows with blob area.
    """
    h, w = frames[0].shape[:2]
    median = np.median(np.stack([to_gray(f) for f in frames]), axis=0).astype(np.uint8)
    rows = []
    for t, frame in enumerate(frames):
        diff = cv2.absdiff(to_gray(frame), median)
        _, mask = cv2.threshold(diff, 25, 255, cv2.THRESH_BINARY)
        mask = cv2.GaussianBlur(mask, (5, 5), 0)
        n, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
        for label in range(1, n):
            x, y, bw, bh, area = stats[label]
            if area < min_area_frac * h * w:
                continue
            conf = min(0.99, 0.3 + 0.69 * area / (h * w))
            rows.append([t, 0, conf, x / w, y / h, bw / w, bh / h])
    if not rows:
        return np.zeros((0, 7))
    return np.asarray(rows, dtype=np.float64)


def _hist_hsv(frame: np.ndarray) -> np.ndarray:
    hsv = cv2.cvtColor(frame, cv2.COLOR_BGR2HSV)
    hist = cv2.calcHist([hsv], [0, 1], None, [16, 16],
                        [0, 180, 0, 256]).ravel()
    return hist / max(hist.sum(), 1.0)


def shot_boundaries(frames: list[np.ndarray], floor: float = 0.15,
                    ratio: float = 6.0) -> np.ndarray:
    """Histogram-delta cut detector; returns transition frame indices.

    Two-pass adaptive threshold: a frame is a cut when its Bhattacharyya
    dissimilarity to the previous frame exceeds both an absolute floor and
    ``ratio`` times the clip's median inter-frame dissimilarity, so steady
    camera motion does not trip the detector.
    """
    if len(frames) < 2:
        return np.zeros(0)
    hists = [_hist_hsv(f) for f in frames]
    distances = np.array([1.0 - float(np.sum(np.sqrt(a * b)))
                          for a, b in zip(hists, hists[1:])])
    threshold = max(floor, ratio * float(np.median(distances)))
    cuts = [t + 1 for t, d in enumerate(distances) if d > threshold]
    # merge adjacent detections from gradual transitions
    merged: list[int] = []
    for c in cuts:
        if not merged or c - merged[-1] > 2:
            merged.append(c)
    return np.asarray(merged, dtype=np.float64)


def boundary_coherence(frames: list[np.ndarray],
                       boundaries: np.ndarray) -> np.ndarray:
    """Adjacent-segment coherence: cosine of patch embeddings across each cut."""
    values = []
    for cut in boundaries.astype(int):
        if not 0 < cut < len(frames):
            continue
        before = patch_embedding(frames[cut - 1])
        after = patch_embedding(frames[cut])
        denom = np.linalg.norm(before) * np.linalg.norm(after)
        values.append(float(np.dot(before, after) / denom) if denom > 0 else 0.0)
    return np.asarray(values, dtype=np.float64)
