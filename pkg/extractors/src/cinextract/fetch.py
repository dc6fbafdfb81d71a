"""Source fetching and span trimming.

A resolver maps each record's ``source_id`` to a playable file: the local
resolver looks the id up in a directory, the http resolver downloads into a
cache.  Hosted-platform downloaders can be plugged in the same way but are
not bundled.  Each shot is trimmed to ``[start_frame, end_frame)``; a +-1
frame tolerance absorbs container seek imprecision and is logged.  Existing
clips whose frame count already verifies are skipped, so re-runs are
idempotent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import cv2

from cinebench.manifest import StorylineSequence

logger = logging.getLogger(__name__)

Resolver = Callable[[str], Path]


class UnavailableSource(RuntimeError):
    pass


def local_resolver(source_dir: Path) -> Resolver:
    def resolve(source_id: str) -> Path:
        for suffix in (".mp4", ".avi", ".mkv", ".webm"):
            candidate = Path(source_dir) / f"{source_id}{suffix}"
            if candidate.exists():
                return candidate
        raise UnavailableSource(f"UNAVAILABLE_SOURCE: {source_id!r} "
                                f"not in {source_dir}")
    return resolve


def http_resolver(base_url: str, cache_dir: Path) -> Resolver:
    import requests

    def resolve(source_id: str) -> Path:
        cache_dir.mkdir(parents=True, exist_ok=True)
        target = Path(cache_dir) / f"{source_id}.mp4"
        if target.exists():
            return target
        url = f"{base_url.rstrip('/')}/{source_id}.mp4"
        try:
            resp = requests.get(url, timeout=60)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise UnavailableSource(f"UNAVAILABLE_SOURCE: {source_id!r} "
                                    f"({exc})") from exc
        tmp = target.with_suffix(".part")
        tmp.write_bytes(resp.content)
        tmp.replace(target)
        return target
    return resolve


def count_frames(path: Path) -> int:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        return -1
    n = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    cap.release()
    return n


def trim_span(source: Path, out_path: Path, start: int, end: int,
              fps: float) -> int:
    """Write frames [start, end) of the source to out_path; returns count."""
    cap = cv2.VideoCapture(str(source))
    if not cap.isOpened():
        raise UnavailableSource(f"UNAVAILABLE_SOURCE: cannot open {source}")
    cap.set(cv2.CAP_PROP_POS_FRAMES, start)
    writer = None
    written = 0
    try:
        for _ in range(end - start):
            ret, frame = cap.read()
            if not ret:
                break
            if writer is None:
                h, w = frame.shape[:2]
                writer = cv2.VideoWriter(
                    str(out_path), cv2.VideoWriter_fourcc(*"mp4v"), fps, (w, h))
                if not writer.isOpened():
                    raise UnavailableSource(f"cannot encode {out_path}")
            writer.write(frame)
            written += 1
    finally:
        cap.release()
        if writer is not None:
            writer.release()
    return written


@dataclass
class FetchOutcome:
    fetched: list[str]
    skipped: list[str]
    unavailable: list[str]


def fetch_and_trim(sequences: list[StorylineSequence], resolver: Resolver,
                   clips_dir: Path, tolerance: int = 1) -> FetchOutcome:
    """Produce one clip file per shot record; partial corpora are allowed."""
    clips_dir = Path(clips_dir)
    clips_dir.mkdir(parents=True, exist_ok=True)
    outcome = FetchOutcome([], [], [])
    for seq in sequences:
        for shot in seq.shots:
            out_path = clips_dir / f"{shot.clip_id}.mp4"
            expected = shot.n_frames
            if out_path.exists():
                have = count_frames(out_path)
                if abs(have - expected) <= tolerance:
                    outcome.skipped.append(shot.clip_id)
                    continue
                logger.info("re-fetching %s: has %d frames, want %d",
                            shot.clip_id, have, expected)
            try:
                source = resolver(shot.source_id)
                written = trim_span(source, out_path, shot.start_frame,
                                    shot.end_frame, shot.fps)
            except UnavailableSource as exc:
                logger.warning("%s", exc)
                outcome.unavailable.append(shot.clip_id)
                continue
            if abs(written - expected) > tolerance:
                logger.warning("%s: wrote %d frames, expected %d +- %d",
                               shot.clip_id, written, expected, tolerance)
                outcome.unavailable.append(shot.clip_id)
                out_path.unlink(missing_ok=True)
                continue
            if written != expected:
                logger.info("%s: %d frames vs %d requested (within tolerance)",
                            shot.clip_id, written, expected)
            outcome.fetched.append(shot.clip_id)
    return outcome
