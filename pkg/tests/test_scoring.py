import numpy as np
import pytest

from cinebench.bundle import FeatureBundle
from cinebench.config import MetricConfig
from cinebench.manifest import S2VPair
from cinebench.scoring import (read_results, score_track1, score_track2,
                               write_results)

from conftest import make_sequence, make_shot_bundle

CFG = MetricConfig()


def build_index(seq, flow=5.0, seed_base=0):
    index = {}
    for i, shot in enumerate(seq.shots):
        bundle = make_shot_bundle(shot, seed=seed_base + i)
        bundle.tensors["flow_mag"] = np.full(shot.n_frames, flow, dtype="<f4")
        index[shot.clip_id] = bundle
    boundaries = np.cumsum([s.n_frames for s in seq.shots])[:-1]
    index[seq.sequence_id] = FeatureBundle(clip_id=seq.sequence_id, tensors={
        "boundaries": boundaries.astype(float),
        "coherence": np.linspace(0.2, 0.6, len(seq.shots) - 1),
    })
    return index


class TestScoreTrack1:
    def test_clean_sequence(self):
        seq = make_sequence()
        result, report = score_track1(seq, build_index(seq), CFG)
        assert report.ok
        assert result.txt_align == pytest.approx(0.25)
        assert result.trans_dev == pytest.approx(0.0)
        assert result.motion_passed
        assert len(result.coherence) == 2

    def test_static_sequence_gated(self):
        seq = make_sequence()
        result, _ = score_track1(seq, build_index(seq, flow=0.01), CFG)
        assert not result.motion_passed

    def test_missing_bundle_skips(self):
        seq = make_sequence()
        index = build_index(seq)
        del index[seq.shots[0].clip_id]
        result, report = score_track1(seq, index, CFG)
        assert result is None
        assert "MISSING_BUNDLE" in report.codes()

    def test_missing_sequence_bundle_gives_undefined_trans_dev(self):
        seq = make_sequence()
        index = build_index(seq)
        del index[seq.sequence_id]
        result, report = score_track1(seq, index, CFG)
        assert result is not None
        assert result.trans_dev is None
        assert result.misses == len(seq.shots) - 1


class TestScoreTrack2:
    def reference(self, seq, index, seed=42):
        rng = np.random.default_rng(seed)
        first = index[seq.shots[0].clip_id]
        ref_subject = first.tensors["subject_emb"][0]
        kps = np.zeros((1, 5, 3), dtype="<f4")
        kps[0, :, :2] = rng.random((5, 2))
        kps[0, :, 2] = 1.0
        index["ref-clip"] = FeatureBundle(clip_id="ref-clip", tensors={
            "subject_emb": np.asarray(ref_subject)[None, :],
            "keypoints": kps,
        })
        return S2VPair(pair_id="p", reference_clip_id="ref-clip",
                       reference_frame=0, reference_box=(0.1, 0.1, 0.5, 0.5),
                       target_sequence_id=seq.sequence_id,
                       intervening_shots=1, frame_separation=0,
                       identity_similarity=0.9)

    def gallery(self, dim=8, rows=9, seed=1):
        rng = np.random.default_rng(seed)
        g = rng.normal(size=(rows, dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def test_external_reference_full_metrics(self):
        seq = make_sequence()
        index = build_index(seq)
        pair = self.reference(seq, index)
        result, report = score_track2(seq, index, CFG, pair, self.gallery())
        assert report.ok
        assert result.has_external_reference
        assert 0 <= result.ref_sub_con <= 100
        assert result.acp_var is not None and 0 <= result.acp_var <= 2
        assert result.copy_fraction is not None

    def test_pseudo_reference_without_pair(self):
        seq = make_sequence()
        index = build_index(seq)
        result, report = score_track2(seq, index, CFG, None, self.gallery())
        assert report.ok
        assert not result.has_external_reference
        assert result.acp_var is None
        assert result.copy_fraction is None
        assert result.ref_sub_con > 0

    def test_recall_uses_confidence_floor(self):
        seq = make_sequence()
        index = build_index(seq)
        for shot in seq.shots:
            det = index[shot.clip_id].tensors["detections"]
            det = np.array(det, copy=True)
            det[:, 2] = 0.1  # everything below recall_conf_min
            index[shot.clip_id].tensors["detections"] = det
        result, _ = score_track2(seq, index, CFG)
        assert result.subj_recall == pytest.approx(0.0)

    def test_missing_reference_bundle_skips(self):
        seq = make_sequence()
        index = build_index(seq)
        pair = self.reference(seq, index)
        del index["ref-clip"]
        result, report = score_track2(seq, index, CFG, pair, None)
        assert result is None
        assert "MISSING_BUNDLE" in report.codes()


class TestResultRoundTrip:
    def test_both_tracks(self):
        seq = make_sequence()
        index = build_index(seq)
        r1, _ = score_track1(seq, index, CFG)
        r2, _ = score_track2(seq, index, CFG)
        text = write_results([r1, r2])
        t1, t2 = read_results(text)
        assert t1 == [r1]
        assert t2 == [r2]
        assert write_results(t1 + t2) == text
