"""Keyframe-grid rendering for judge requests.

Layout: 2 rows x N columns (columns are shots, rows chronological), each
cell resized to 256 pixels wide, separated by 4-pixel white gutters.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

CELL_WIDTH = 256
GUTTER = 4


class FrameResolveError(RuntimeError):
    pass


def load_frame(clips_dir: Path, clip_id: str, frame_index: int) -> np.ndarray:
    path = None
    for suffix in (".mp4", ".avi", ".mkv"):
        candidate = Path(clips_dir) / f"{clip_id}{suffix}"
        if candidate.exists():
            path = candidate
            break
    if path is None:
        raise FrameResolveError(f"no clip file for {clip_id!r} in {clips_dir}")
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise FrameResolveError(f"cannot open {path}")
    cap.set(cv2.CAP_PROP_POS_FRAMES, frame_index)
    ret, frame = cap.read()
    cap.release()
    if not ret:
        raise FrameResolveError(f"cannot read frame {frame_index} of {clip_id!r}")
    return frame


def render_grid(cells: list[list[np.ndarray]]) -> np.ndarray:
    """Compose rows x columns of frames into one white-guttered image."""
    n_rows = len(cells)
    n_cols = len(cells[0])
    resized: list[list[np.ndarray]] = []
    for row in cells:
        if len(row) != n_cols:
            raise ValueError("ragged grid")
        out_row = []
        for frame in row:
            h, w = frame.shape[:2]
            cell_h = max(1, round(h * CELL_WIDTH / w))
            out_row.append(cv2.resize(frame, (CELL_WIDTH, cell_h)))
        resized.append(out_row)
    row_heights = [max(f.shape[0] for f in row) for row in resized]
    width = n_cols * CELL_WIDTH + (n_cols - 1) * GUTTER
    height = sum(row_heights) + (n_rows - 1) * GUTTER
    canvas = np.full((height, width, 3), 255, np.uint8)
    y = 0
    for row, row_h in zip(resized, row_heights):
        x = 0
        for frame in row:
            canvas[y:y + frame.shape[0], x:x + CELL_WIDTH] = frame
            x += CELL_WIDTH + GUTTER
        y += row_h + GUTTER
    return canvas


def render_mdvl_grid(clips_dir: Path,
                     attachments: list[tuple[str, int]]) -> np.ndarray:
    """Build the 2 x N grid from column-major (clip_id, frame) attachments."""
    if len(attachments) % 2 != 0 or not attachments:
        raise ValueError("grid attachments must come in (top, bottom) pairs")
    top, bottom = [], []
    for i in range(0, len(attachments), 2):
        clip_id, frame_a = attachments[i]
        _, frame_b = attachments[i + 1]
        top.append(load_frame(clips_dir, clip_id, frame_a))
        bottom.append(load_frame(clips_dir, clip_id, frame_b))
    return render_grid([top, bottom])


def encode_png(image: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", image)
    if not ok:
        raise RuntimeError("png encoding failed")
    return buf.tobytes()
