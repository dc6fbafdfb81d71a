from pathlib import Path

import cv2
import numpy as np
import pytest


def synthesize_clip(path: Path, n_frames: int = 32, fps: float = 16.0,
                    size=(160, 120), seed: int = 0, cut_at: int | None = None):
    """Write a deterministic synthetic clip: textured background plus a
    moving disc; an optional hard cut switches palette and layout."""
    rng = np.random.default_rng(seed)
    w, h = size
    background_a = rng.integers(40, 90, (h, w, 3), dtype=np.uint8)
    background_b = rng.integers(160, 220, (h, w, 3), dtype=np.uint8)
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"mp4v"),
                             fps, (w, h))
    assert writer.isOpened()
    for t in range(n_frames):
        second_half = cut_at is not None and t >= cut_at
        frame = (background_b if second_half else background_a).copy()
        cx = 30 + (t * 3) % (w - 60)
        cy = h // 2 + (10 if second_half else -10)
        color = (40, 200, 240) if second_half else (220, 120, 40)
        cv2.circle(frame, (cx, cy), 18, color, -1)
        cv2.rectangle(frame, (cx - 10, cy + 14), (cx + 10, cy + 44),
                      color, -1)
        writer.write(frame)
    writer.release()
    return path


@pytest.fixture(scope="session")
def sample_clip(tmp_path_factory):
    """The bundled 2-second sample clip (32 frames at 16 fps)."""
    path = tmp_path_factory.mktemp("clips") / "sample.mp4"
    return synthesize_clip(path, n_frames=32, fps=16.0, seed=1)


@pytest.fixture(scope="session")
def multi_shot_clip(tmp_path_factory):
    path = tmp_path_factory.mktemp("clips") / "montage.mp4"
    return synthesize_clip(path, n_frames=48, fps=16.0, seed=2, cut_at=24)
