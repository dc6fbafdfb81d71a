"""CBF1: the bit-exact per-clip feature container.

Layout::

    bytes 0..4    magic "CBF1"
    bytes 4..8    header length, unsigned 32-bit little-endian
    header        UTF-8 JSON: {"schema_version", "clip_id", "tensors": [
                      {"name", "shape", "offset", "length"}, ...],
                      optional "provenance"}
    payload       raw little-endian float32, tensors at their declared
                  offsets (relative to payload start)

Reserved tensor names and their layouts (F frames, S shots, J joints):

    keypoints      [F, J, 3]   x, y in [0,1], confidence
    subject_emb    [F, D]      zero rows mean "absent"
    face_emb       [F, Df]     zero rows mean "no face"
    background_emb [S, D]      one row per shot
    text_sim       [S]         per-shot video-prompt similarity
    flow_mag       [F]         mean optical-flow magnitude per frame (pixels)
    detections     [N, 7]      frame, class_id, conf, x, y, w, h
    boundaries     [T]         detected transition frame indices
    coherence      [S-1]       adjacent-shot boundary similarity
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import BadMagicError, ShapeMismatchError, TruncatedBundleError

MAGIC = b"CBF1"
SCHEMA_VERSION = 1

RESERVED_TENSORS = {
    "keypoints": 3,       # [F, J, 3]
    "subject_emb": 2,     # [F, D]
    "face_emb": 2,        # [F, Df]
    "background_emb": 2,  # [S, D]
    "text_sim": 1,        # [S]
    "flow_mag": 1,        # [F]
    "detections": 2,      # [N, 7]
    "boundaries": 1,      # [T]
    "coherence": 1,       # [S-1]
}


@dataclass
class FeatureBundle:
    """Named float32 tensors extracted from one clip."""

    clip_id: str
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    provenance: dict[str, Any] | None = None

    def __post_init__(self) -> None:
        coerced = {}
        for name, arr in self.tensors.items():
            coerced[name] = np.ascontiguousarray(arr, dtype="<f4")
        self.tensors = coerced

    def get(self, name: str) -> np.ndarray | None:
        return self.tensors.get(name)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureBundle):
            return NotImplemented
        return (self.clip_id == other.clip_id
                and self.schema_version == other.schema_version
                and self.provenance == other.provenance
                and set(self.tensors) == set(other.tensors)
                and all(self.tensors[k].shape == other.tensors[k].shape
                        and self.tensors[k].tobytes() == other.tensors[k].tobytes()
                        for k in self.tensors))


def write_feature_bundle(bundle: FeatureBundle) -> bytes:
    """Serialize to CBF1 bytes; deterministic for identical bundles."""
    entries = []
    payload_parts = []
    offset = 0
    for name, arr in bundle.tensors.items():
        shape = list(arr.shape)
        if math.prod(shape) != arr.size:
            raise ShapeMismatchError(f"{name}: inconsistent shape {shape}")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": shape, "offset": offset,
                        "length": len(raw)})
        payload_parts.append(raw)
        offset += len(raw)
    header: dict[str, Any] = {
        "schema_version": bundle.schema_version,
        "clip_id": bundle.clip_id,
        "tensors": entries,
    }
    if bundle.provenance is not None:
        header["provenance"] = bundle.provenance
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"),
                              ensure_ascii=False).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + b"".join(payload_parts)


def read_feature_bundle(data: bytes) -> FeatureBundle:
    """Parse CBF1 bytes; raises a distinct error per failure mode."""
    if len(data) < 8 or data[:4] != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, got {data[:4]!r}")
    (header_len,) = struct.unpack("<I", data[4:8])
    header_end = 8 + header_len
    if len(data) < header_end:
        raise TruncatedBundleError(
            f"header declares {header_len} bytes, only {len(data) - 8} present")
    try:
        header = json.loads(data[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadMagicError(f"unreadable header: {exc}") from exc
    payload = data[header_end:]
    tensors: dict[str, np.ndarray] = {}
    for entry in header.get("tensors", []):
        name, shape = entry["name"], [int(x) for x in entry["shape"]]
        offset, length = int(entry["offset"]), int(entry["length"])
        if offset + length > len(payload):
            raise TruncatedBundleError(
                f"{name}: payload needs {offset + length} bytes, "
                f"only {len(payload)} present")
        n_values = length // 4
        if math.prod(shape) != n_values or length % 4 != 0:
            raise ShapeMismatchError(
                f"{name}: shape {shape} does not match {n_values} float32 values")
        arr = np.frombuffer(payload[offset:offset + length], dtype="<f4").reshape(shape)
        tensors[name] = arr
    return FeatureBundle(
        clip_id=str(header.get("clip_id", "")),
        tensors=tensors,
        schema_version=int(header.get("schema_version", SCHEMA_VERSION)),
        provenance=header.get("provenance"),
    )


def load_bundle(path: Any) -> FeatureBundle:
    from pathlib import Path

    return read_feature_bundle(Path(path).read_bytes())


def save_bundle(bundle: FeatureBundle, path: Any) -> None:
    from pathlib import Path

    Path(path).write_bytes(write_feature_bundle(bundle))


def load_bundle_dir(path: Any, suffix: str = ".cbf") -> dict[str, FeatureBundle]:
    """Read every ``*.cbf`` file in a directory, keyed by clip_id."""
    from pathlib import Path

    index: dict[str, FeatureBundle] = {}
    for p in sorted(Path(path).glob(f"*{suffix}")):
        b = load_bundle(p)
        index[b.clip_id] = b
    return index


BundleIndex = Mapping[str, FeatureBundle]
