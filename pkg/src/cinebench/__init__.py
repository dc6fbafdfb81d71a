"""Dual-track benchmark engine and curation logic for multi-shot video generation.

The core is model-agnostic: every neural feature arrives through the CBF1
bundle format, so all metrics and curation decisions are deterministic and
testable offline.
"""

from .bundle import (FeatureBundle, load_bundle, load_bundle_dir,
                     read_feature_bundle, save_bundle, write_feature_bundle)
from .config import MatchConstraints, MetricConfig, RunConfig
from .curation import (MatchCandidate, ShotQualityRecord, SubjectTrack,
                       build_s2v_pair, cascade_filter, cross_shot_match,
                       sliding_windows)
from .errors import (BadMagicError, BundleFormatError, CinebenchError,
                     DegenerateError, IntegrityError, MetricError,
                     ShapeMismatchError, TruncatedBundleError)
from .manifest import (S2VPair, ShotRecord, StorylineSequence, parse_manifest,
                       parse_pair_manifest, serialize_manifest,
                       serialize_pair_manifest)
from .pose import KeypointSet, acp_var, procrustes_align, sim_pose
from .similarity import (copy_paste_entropy, copy_paste_stats, cosine, cp_rate,
                         inter_subject_consistency, ref_subject_consistency,
                         scene_consistency, subject_recall, text_alignment)
from .temporal import (BoundarySet, CoherenceHistogram, action_strength,
                       coherence_histogram, consistency_gap, expected_boundaries,
                       js_distance, motion_gate, transition_deviation)
from .validation import ValidationReport, validate_pair, validate_sequence

__version__ = "0.1.0"
