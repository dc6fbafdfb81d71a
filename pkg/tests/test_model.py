import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cinebench.bundle import (FeatureBundle, read_feature_bundle,
                              write_feature_bundle)
from cinebench.errors import (BadMagicError, IntegrityError,
                              ShapeMismatchError, TruncatedBundleError)
from cinebench.manifest import (S2VPair, StorylineSequence,
                                parse_manifest, parse_pair_manifest,
                                serialize_manifest, serialize_pair_manifest)
from cinebench.validation import validate_sequence

from conftest import make_sequence, make_shot, make_shot_bundle


class TestShotRecord:
    def test_empty_span_rejected(self):
        with pytest.raises(IntegrityError):
            make_shot(start=10, end=10)

    def test_inverted_span_rejected(self):
        with pytest.raises(IntegrityError):
            make_shot(start=10, end=5)

    def test_non_positive_fps_rejected(self):
        with pytest.raises(IntegrityError):
            make_shot(fps=0.0)


class TestManifestRoundTrip:
    def test_two_shot_record_round_trips_byte_identically(self):
        seq = make_sequence(n_shots=2)
        text = serialize_manifest([seq])
        parsed, issues = parse_manifest(text)
        assert not issues
        assert parsed == [seq]
        assert len(parsed[0].shots) == 2
        assert serialize_manifest(parsed) == text

    def test_unknown_fields_preserved(self):
        seq = make_sequence(n_shots=2)
        record = json.loads(serialize_manifest([seq]).splitlines()[0])
        record["custom_tag"] = {"nested": [1, 2]}
        line = json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"
        parsed, issues = parse_manifest(line)
        assert not issues
        assert parsed[0].extras["custom_tag"] == {"nested": [1, 2]}
        assert serialize_manifest(parsed) == line

    def test_empty_span_reported_with_line_number(self):
        seq = make_sequence(sequence_id="ok")
        record = json.loads(serialize_manifest([make_sequence(sequence_id="bad")]).strip())
        record["shots"][0]["end_frame"] = record["shots"][0]["start_frame"]
        text = serialize_manifest([seq]) + json.dumps(record) + "\n"
        parsed, issues = parse_manifest(text)
        assert [s.sequence_id for s in parsed] == ["ok"]
        assert len(issues) == 1
        assert issues[0].line == 2
        assert issues[0].code == "INTEGRITY_ERROR"

    def test_prompt_count_mismatch_is_integrity_error(self):
        record = json.loads(serialize_manifest([make_sequence(n_shots=3)]).strip())
        record["shot_prompts"] = record["shot_prompts"][:2]
        parsed, issues = parse_manifest(json.dumps(record))
        assert not parsed
        assert issues[0].code == "INTEGRITY_ERROR"

    def test_duplicate_clip_id_across_records(self):
        a = make_sequence(sequence_id="a")
        text = serialize_manifest([a])
        dup = json.loads(text.strip())
        dup["sequence_id"] = "b"
        parsed, issues = parse_manifest(text + json.dumps(dup) + "\n")
        assert [s.sequence_id for s in parsed] == ["a"]
        assert issues and issues[0].code == "INTEGRITY_ERROR"
        assert "duplicate" in issues[0].message

    def test_malformed_line_reported(self):
        parsed, issues = parse_manifest("{not json\n")
        assert not parsed
        assert issues[0].code == "PARSE_ERROR"
        assert issues[0].line == 1

    @given(st.lists(st.integers(min_value=1, max_value=50), min_size=1, max_size=5),
           st.booleans())
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, lengths, with_prompts):
        shots = []
        pos = 0
        for i, n in enumerate(lengths):
            shots.append(make_shot(clip_id=f"c{i}", start=pos, end=pos + n))
            pos += n
        seq = StorylineSequence(
            sequence_id="s", shots=tuple(shots),
            shot_prompts=tuple(f"p{i}" for i in range(len(shots))) if with_prompts else None)
        parsed, issues = parse_manifest(serialize_manifest([seq]))
        assert not issues
        assert parsed == [seq]


class TestBundleFormat:
    def test_round_trip_and_length(self):
        bundle = FeatureBundle(clip_id="c1", tensors={
            "m": np.arange(6, dtype=np.float32).reshape(2, 3)})
        data = write_feature_bundle(bundle)
        header_len = int.from_bytes(data[4:8], "little")
        assert len(data) == 8 + header_len + 24  # 6 float32 values
        back = read_feature_bundle(data)
        assert back == bundle
        assert back.tensors["m"].tobytes() == bundle.tensors["m"].tobytes()
        # write . read . write is stable
        assert write_feature_bundle(back) == data

    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            read_feature_bundle(b"XXXX" + b"\x00" * 16)

    def test_truncated_payload(self):
        bundle = FeatureBundle(clip_id="c1", tensors={"v": np.ones(4, np.float32)})
        data = write_feature_bundle(bundle)
        with pytest.raises(TruncatedBundleError):
            read_feature_bundle(data[:-4])

    def test_shape_payload_mismatch(self):
        bundle = FeatureBundle(clip_id="c1", tensors={"v": np.ones(3, np.float32)})
        data = write_feature_bundle(bundle)
        # corrupt the declared shape: [3] -> [4]
        header_len = int.from_bytes(data[4:8], "little")
        header = data[8:8 + header_len].decode()
        bad = header.replace("[3]", "[4]").encode()
        blob = data[:4] + len(bad).to_bytes(4, "little") + bad + data[8 + header_len:]
        with pytest.raises(ShapeMismatchError):
            read_feature_bundle(blob)

    def test_provenance_preserved(self):
        bundle = FeatureBundle(clip_id="c1", tensors={},
                               provenance={"pose": "model-a@1.2"})
        assert read_feature_bundle(write_feature_bundle(bundle)).provenance == {
            "pose": "model-a@1.2"}

    @given(st.lists(
        st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=4))
    @settings(max_examples=40, deadline=None)
    def test_payload_bit_exact_property(self, shapes):
        rng = np.random.default_rng(7)
        tensors = {f"t{i}": rng.normal(size=shape).astype(np.float32)
                   for i, shape in enumerate(shapes)}
        bundle = FeatureBundle(clip_id="x", tensors=tensors)
        back = read_feature_bundle(write_feature_bundle(bundle))
        for name, arr in tensors.items():
            assert back.tensors[name].tobytes() == arr.tobytes()


class TestValidateSequence:
    def test_clean_sequence_empty_report(self, simple_sequence, bundle_index):
        report = validate_sequence(simple_sequence, bundle_index)
        assert report.ok
        assert report.findings == []

    def test_missing_bundle_reported(self, simple_sequence, bundle_index):
        missing = simple_sequence.shots[1].clip_id
        del bundle_index[missing]
        report = validate_sequence(simple_sequence, bundle_index)
        assert not report.ok
        assert ("MISSING_BUNDLE", missing) in [
            (f.code, f.clip_id) for f in report.findings]

    def test_prompt_count_mismatch_reported(self, bundle_index, simple_sequence):
        seq = StorylineSequence(
            sequence_id=simple_sequence.sequence_id,
            shots=simple_sequence.shots,
            shot_prompts=simple_sequence.shot_prompts[:2])
        report = validate_sequence(seq, bundle_index)
        assert "PROMPT_COUNT_MISMATCH" in report.codes()

    def test_non_monotone_frames_reported(self, bundle_index):
        shots = (make_shot(clip_id="seq1-s1", start=0, end=40),
                 make_shot(clip_id="seq1-s2", start=30, end=70))
        for shot in shots:
            bundle_index[shot.clip_id] = make_shot_bundle(shot)
        seq = StorylineSequence(sequence_id="seq1", shots=shots)
        report = validate_sequence(seq, bundle_index)
        assert "NON_MONOTONE_FRAMES" in report.codes()

    def test_tensor_frame_mismatch_reported(self, simple_sequence, bundle_index):
        shot = simple_sequence.shots[0]
        bad = make_shot_bundle(make_shot(clip_id=shot.clip_id, start=0, end=10))
        bundle_index[shot.clip_id] = bad
        report = validate_sequence(simple_sequence, bundle_index)
        assert "TENSOR_SHAPE" in report.codes()

    def test_validation_is_pure(self, simple_sequence, bundle_index):
        a = validate_sequence(simple_sequence, bundle_index)
        b = validate_sequence(simple_sequence, bundle_index)
        assert a.findings == b.findings


class TestS2VPair:
    def test_separation_disjunction_enforced(self):
        with pytest.raises(IntegrityError):
            S2VPair(pair_id="p", reference_clip_id="r", reference_frame=0,
                    reference_box=(0.1, 0.1, 0.2, 0.2), target_sequence_id="t",
                    intervening_shots=0, frame_separation=31,
                    identity_similarity=0.9)

    def test_intervening_shot_suffices(self):
        pair = S2VPair(pair_id="p", reference_clip_id="r", reference_frame=0,
                       reference_box=(0.1, 0.1, 0.2, 0.2), target_sequence_id="t",
                       intervening_shots=1, frame_separation=0,
                       identity_similarity=0.9)
        assert pair.intervening_shots == 1

    def test_frame_separation_suffices(self):
        pair = S2VPair(pair_id="p", reference_clip_id="r", reference_frame=0,
                       reference_box=(0.1, 0.1, 0.2, 0.2), target_sequence_id="t",
                       intervening_shots=0, frame_separation=32,
                       identity_similarity=0.9)
        assert pair.frame_separation == 32

    def test_pair_manifest_round_trip(self):
        pair = S2VPair(pair_id="p1", reference_clip_id="r", reference_frame=3,
                       reference_box=(0.1, 0.2, 0.3, 0.4), target_sequence_id="t",
                       intervening_shots=2, frame_separation=40,
                       identity_similarity=0.75)
        text = serialize_pair_manifest([pair])
        parsed, issues = parse_pair_manifest(text)
        assert not issues
        assert parsed == [pair]
        assert serialize_pair_manifest(parsed) == text
