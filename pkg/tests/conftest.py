import numpy as np
import pytest

from cinebench.bundle import FeatureBundle
from cinebench.manifest import ShotRecord, StorylineSequence


def make_shot(clip_id="c1", source_id="src", start=0, end=40, fps=16.0,
              caption="a shot", **kw):
    return ShotRecord(clip_id=clip_id, source_id=source_id, start_frame=start,
                      end_frame=end, fps=fps, caption=caption, **kw)


def make_sequence(sequence_id="seq1", n_shots=3, frames_per_shot=40, source_id="src",
                  prompts=True, gap=0):
    shots = []
    pos = 0
    for i in range(n_shots):
        shots.append(make_shot(
            clip_id=f"{sequence_id}-s{i + 1}", source_id=source_id,
            start=pos, end=pos + frames_per_shot, caption=f"caption {i + 1}"))
        pos += frames_per_shot + gap
    return StorylineSequence(
        sequence_id=sequence_id,
        shots=tuple(shots),
        global_narrative="a short storyline",
        shot_prompts=tuple(f"prompt {i + 1}" for i in range(n_shots)) if prompts else None,
    )


def make_shot_bundle(shot, dim=8, seed=0):
    """Deterministic per-shot bundle with every reserved tensor populated."""
    rng = np.random.default_rng(seed)
    n = shot.n_frames
    emb = rng.normal(size=(1, dim))
    subject = np.tile(emb, (n, 1)) + 0.01 * rng.normal(size=(n, dim))
    kps = np.zeros((n, 5, 3))
    base = rng.random((5, 2))
    for t in range(n):
        kps[t, :, :2] = base + 0.001 * t
        kps[t, :, 2] = 1.0
    detections = np.array([[t, 0, 0.9, 0.4, 0.4, 0.2, 0.2] for t in range(n)])
    return FeatureBundle(clip_id=shot.clip_id, tensors={
        "keypoints": kps,
        "subject_emb": subject,
        "face_emb": np.zeros((n, 4)),
        "background_emb": rng.normal(size=(1, dim)),
        "text_sim": np.array([0.25]),
        "flow_mag": np.full(n, 5.0),
        "detections": detections,
        "quality": np.array([0.9, 0.9, 4.5, 0.3, 0.05, 5.0]),
    })


@pytest.fixture
def simple_sequence():
    return make_sequence()


@pytest.fixture
def bundle_index(simple_sequence):
    index = {}
    for i, shot in enumerate(simple_sequence.shots):
        index[shot.clip_id] = make_shot_bundle(shot, seed=i)
    boundaries = np.cumsum([s.n_frames for s in simple_sequence.shots])[:-1]
    index[simple_sequence.sequence_id] = FeatureBundle(
        clip_id=simple_sequence.sequence_id,
        tensors={
            "boundaries": boundaries.astype(float),
            "coherence": np.array([0.4, 0.5]),
        })
    return index
