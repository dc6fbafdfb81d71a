import itertools

import numpy as np
import pytest

from cinebench.config import MatchConstraints, MetricConfig
from cinebench.curation import (Appearance, FilterStage, ShotQualityRecord,
                                SubjectTrack, build_s2v_pair, cascade_filter,
                                cross_shot_match, sliding_windows)
from cinebench.errors import IntegrityError, MetricError
from cinebench.manifest import StorylineSequence

from conftest import make_shot

CFG = MetricConfig()

PASSING = dict(clip_sim=0.85, dino_sim=0.82, siglip_score=4.2,
               videoclip_score=0.25, describability=0.05, motion_score=5.0)


def quality(**overrides):
    values = dict(PASSING)
    values.update(overrides)
    return ShotQualityRecord(**values)


class TestCascadeFilter:
    def test_all_passing_accepted(self):
        assert cascade_filter(quality(), CFG).accepted

    def test_aesthetic_rejection_named(self):
        decision = cascade_filter(quality(siglip_score=3.9), CFG)
        assert not decision.accepted
        assert decision.stage == FilterStage.AESTHETIC

    def test_thresholds_inclusive(self):
        assert cascade_filter(quality(clip_sim=0.80), CFG).accepted
        assert cascade_filter(quality(dino_sim=0.80), CFG).accepted
        assert cascade_filter(quality(siglip_score=4.00), CFG).accepted
        assert cascade_filter(quality(videoclip_score=0.20), CFG).accepted
        assert cascade_filter(quality(describability=0.02), CFG).accepted

    @pytest.mark.parametrize("field,fail,ok", [
        ("clip_sim", 0.79, 0.80),
        ("dino_sim", 0.79, 0.80),
        ("siglip_score", 3.99, 4.00),
        ("videoclip_score", 0.19, 0.20),
        ("describability", 0.019, 0.02),
    ])
    def test_boundary_probes(self, field, fail, ok):
        assert not cascade_filter(quality(**{field: fail}), CFG).accepted
        assert cascade_filter(quality(**{field: ok}), CFG).accepted

    def test_first_failing_stage_named_in_order(self):
        decision = cascade_filter(
            quality(clip_sim=0.1, siglip_score=0.1, motion_score=0.0), CFG)
        assert decision.stage == FilterStage.SEMANTIC

    def test_motion_interval(self):
        assert not cascade_filter(quality(motion_score=0.4), CFG).accepted
        assert not cascade_filter(quality(motion_score=500.0), CFG).accepted
        assert cascade_filter(quality(motion_score=0.5), CFG).accepted
        assert cascade_filter(quality(motion_score=400.0), CFG).accepted

    def test_exhaustive_predicate_table(self):
        # All 64 pass/fail combinations of the six predicates: Accept iff
        # every predicate passes, regardless of which combination fails.
        values = {
            "clip_sim": (0.79, 0.85), "dino_sim": (0.79, 0.85),
            "siglip_score": (3.5, 4.5), "videoclip_score": (0.1, 0.3),
            "describability": (0.0, 0.05), "motion_score": (0.0, 5.0),
        }
        for combo in itertools.product((0, 1), repeat=6):
            record = ShotQualityRecord(**{
                name: values[name][bit]
                for name, bit in zip(values, combo)})
            assert cascade_filter(record, CFG).accepted == all(combo)


def storyline(lengths, sequence_id="sl", gap=0):
    shots = []
    pos = 0
    for i, n in enumerate(lengths):
        shots.append(make_shot(clip_id=f"{sequence_id}-s{i + 1}", start=pos,
                               end=pos + n))
        pos += n + gap
    return StorylineSequence(sequence_id=sequence_id, shots=tuple(shots))


class TestSlidingWindows:
    def test_six_equal_shots_under_cap(self):
        windows = sliding_windows(storyline([40] * 6), CFG)
        spans = [[s.clip_id for s in w.shots] for w in windows]
        assert spans == [
            ["sl-s1", "sl-s2", "sl-s3", "sl-s4"],
            ["sl-s2", "sl-s3", "sl-s4", "sl-s5"],
            ["sl-s3", "sl-s4", "sl-s5", "sl-s6"],
        ]
        assert all(w.total_frames == 160 for w in windows)

    def test_single_shot_no_window(self):
        assert sliding_windows(storyline([40]), CFG) == []

    def test_frame_cap_exact(self):
        assert sliding_windows(storyline([100, 70]), CFG) == []   # 170 > 161
        windows = sliding_windows(storyline([100, 60]), CFG)      # 160 <= 161
        assert len(windows) == 1
        assert windows[0].total_frames == 160

    def test_cap_boundary_161(self):
        windows = sliding_windows(storyline([81, 80]), CFG)
        assert len(windows) == 1
        assert windows[0].total_frames == 161

    def test_rejected_shot_splits_runs(self):
        seq = storyline([40] * 5)
        accepted = {s.clip_id for s in seq.shots} - {"sl-s3"}
        windows = sliding_windows(seq, CFG, accepted)
        spans = [[s.clip_id for s in w.shots] for w in windows]
        assert spans == [["sl-s1", "sl-s2"], ["sl-s4", "sl-s5"]]

    def test_deterministic_ids_and_order(self):
        a = sliding_windows(storyline([40] * 6), CFG)
        b = sliding_windows(storyline([40] * 6), CFG)
        assert [w.sequence_id for w in a] == [w.sequence_id for w in b]
        assert [w.sequence_id for w in a] == sorted(w.sequence_id for w in a)

    def test_windows_respect_invariants_randomized(self):
        rng = np.random.default_rng(0)
        cap = CFG.max_window_frames
        for _ in range(200):
            lengths = rng.integers(10, 120, size=rng.integers(1, 9)).tolist()
            seq = storyline(lengths)
            accepted = {s.clip_id for s in seq.shots
                        if rng.random() > 0.3}
            for window in sliding_windows(seq, CFG, accepted):
                assert len(window.shots) >= 2
                assert window.total_frames <= cap
                assert all(s.clip_id in accepted for s in window.shots)


def embedding(angle):
    return (float(np.cos(angle)), float(np.sin(angle)), 0.0)


def track_over(clip_frames, identity_id="id1", angle_step=0.1):
    apps = tuple(
        Appearance(clip_id=cid, frame=frame, box=(0.2, 0.2, 0.3, 0.5),
                   identity_emb=embedding(i * angle_step))
        for i, (cid, frame) in enumerate(clip_frames))
    return SubjectTrack(identity_id=identity_id, appearances=apps)


class TestCrossShotMatch:
    def test_intervening_shot_candidate(self):
        seq = storyline([40, 40, 40])
        track = track_over([("sl-s1", 5), ("sl-s3", 10)])
        candidates = cross_shot_match([track], seq, "sl-s3")
        assert [c.clip_id for c in candidates] == ["sl-s1"]
        assert candidates[0].intervening_shots == 1

    def test_subject_only_in_target(self):
        seq = storyline([40, 40, 40])
        track = track_over([("sl-s3", 10)])
        with pytest.raises(MetricError) as err:
            cross_shot_match([track], seq, "sl-s3")
        assert err.value.code == "EMPTY"

    def test_subject_absent_from_target(self):
        seq = storyline([40, 40, 40])
        track = track_over([("sl-s1", 5)])
        with pytest.raises(MetricError) as err:
            cross_shot_match([track], seq, "sl-s3")
        assert err.value.code == "NO_TRACK"

    def test_adjacent_shots_with_frame_gap(self):
        # shots 1 and 2 are adjacent (0 intervening) but 40 frames apart
        seq = storyline([40, 40], gap=40)
        track = track_over([("sl-s1", 5), ("sl-s2", 10)])
        candidates = cross_shot_match([track], seq, "sl-s2")
        assert [c.clip_id for c in candidates] == ["sl-s1"]
        assert candidates[0].intervening_shots == 0
        assert candidates[0].frame_separation == 40

    def test_adjacent_shots_without_gap_rejected(self):
        seq = storyline([40, 40])
        track = track_over([("sl-s1", 5), ("sl-s2", 10)])
        with pytest.raises(MetricError) as err:
            cross_shot_match([track], seq, "sl-s2")
        assert err.value.code == "EMPTY"

    def test_low_identity_similarity_rejected(self):
        seq = storyline([40, 40, 40])
        apps = (
            Appearance("sl-s1", 5, (0.1, 0.1, 0.2, 0.2), embedding(np.pi / 2)),
            Appearance("sl-s3", 10, (0.1, 0.1, 0.2, 0.2), embedding(0.0)),
        )
        track = SubjectTrack("id1", apps)
        with pytest.raises(MetricError):
            cross_shot_match([track], seq, "sl-s3")

    def test_ranking_prefers_diverse_identities(self):
        seq = storyline([40] * 5)
        apps = (
            Appearance("sl-s1", 0, (0.1, 0.1, 0.2, 0.2), embedding(0.6)),
            Appearance("sl-s3", 0, (0.1, 0.1, 0.2, 0.2), embedding(0.1)),
            Appearance("sl-s5", 0, (0.1, 0.1, 0.2, 0.2), embedding(0.0)),
        )
        track = SubjectTrack("id1", apps)
        candidates = cross_shot_match([track], seq, "sl-s5")
        # sl-s1's embedding is farther from the target's, so it ranks first
        assert [c.clip_id for c in candidates] == ["sl-s1", "sl-s3"]

    def test_determinism_with_ties(self):
        seq = storyline([40] * 4)
        apps = (
            Appearance("sl-s1", 0, (0.1, 0.1, 0.2, 0.2), embedding(0.2)),
            Appearance("sl-s2", 0, (0.1, 0.1, 0.2, 0.2), embedding(0.2)),
            Appearance("sl-s4", 0, (0.1, 0.1, 0.2, 0.2), embedding(0.0)),
        )
        track = SubjectTrack("id1", apps)
        first = cross_shot_match([track], seq, "sl-s4")
        second = cross_shot_match([track], seq, "sl-s4")
        assert first == second
        assert [c.clip_id for c in first] == ["sl-s1", "sl-s2"]  # lexicographic tie-break


class TestBuildS2VPair:
    def make_candidate(self, seq, target_clip):
        track = track_over([("sl-s1", 5), (target_clip, 10)])
        return cross_shot_match([track], seq, target_clip)[0]

    def test_valid_candidate_builds_pair(self):
        seq = storyline([40, 40, 40])
        candidate = self.make_candidate(seq, "sl-s3")
        window = StorylineSequence(sequence_id="w", shots=seq.shots[1:])
        pair = build_s2v_pair(candidate, window)
        assert pair.reference_clip_id == "sl-s1"
        assert pair.intervening_shots >= 1 or pair.frame_separation >= 32

    def test_reference_inside_target_rejected(self):
        seq = storyline([40, 40, 40])
        candidate = self.make_candidate(seq, "sl-s3")
        with pytest.raises(IntegrityError):
            build_s2v_pair(candidate, seq)  # full storyline contains sl-s1

    def test_low_identity_candidate_rejected(self):
        from cinebench.curation import MatchCandidate

        candidate = MatchCandidate(
            identity_id="id1", clip_id="other", frame=0,
            box=(0.1, 0.1, 0.2, 0.2), identity_sim=0.55,
            intervening_shots=2, frame_separation=0, diversity=0.5)
        window = storyline([40, 40], sequence_id="w")
        with pytest.raises(IntegrityError):
            build_s2v_pair(candidate, window)


class TestMatchingSoundnessRandomized:
    def test_brute_force_agreement(self):
        """Every emitted candidate passes an independent constraint check,
        and every appearance the brute-force filter accepts is emitted."""
        rng = np.random.default_rng(7)
        constraints = MatchConstraints()
        for _ in range(300):
            n_shots = int(rng.integers(2, 9))
            gap = int(rng.integers(0, 50))
            lengths = rng.integers(10, 80, size=n_shots).tolist()
            seq = storyline(lengths, gap=gap)
            clip_ids = [s.clip_id for s in seq.shots]
            present = sorted(rng.choice(n_shots, size=rng.integers(1, n_shots + 1),
                                        replace=False).tolist())
            apps = tuple(
                Appearance(clip_ids[i], int(rng.integers(0, 10)),
                           (0.1, 0.1, 0.2, 0.2), embedding(0.05 * i))
                for i in present)
            track = SubjectTrack("id1", apps)
            target = clip_ids[present[-1]]
            target_idx = present[-1]

            def ok(i):
                intervening = abs(i - target_idx) - 1
                a, b = seq.shots[min(i, target_idx)], seq.shots[max(i, target_idx)]
                sep = max(0, b.start_frame - a.end_frame)
                return intervening >= 1 or sep >= 32

            expected = sorted(clip_ids[i] for i in present[:-1] if ok(i))
            try:
                got = sorted(c.clip_id for c in
                             cross_shot_match([track], seq, target, constraints))
            except MetricError:
                got = []
            assert got == expected
