"""Two-stage captioning: request construction, response parsing, gating.

This module never talks to a network.  It builds deterministic request
payloads (template texts are fixed byte-for-byte and golden-tested),
exchanges them with the model client through line-delimited batch files,
and validates everything that comes back.  Free-form model output gets one
deterministic repair attempt (strip code fences / surrounding prose) before
being rejected.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable

from .config import MetricConfig
from .errors import MetricError
from .manifest import ShotRecord, StorylineSequence

SINGLE_SHOT_SYSTEM = (
    "You are a film-director assistant. Describe a single physical shot from a "
    "movie in a detailed, visually grounded, and cinematically useful manner. "
    "Focus only on directly visible content. Describe the main subject, actions, "
    "appearance, attributes, spatial layout, background elements, lighting, "
    "weather, time-of-day cues, and camera-relevant information when such cues "
    "are visually evident. Do not invent backstory, motivation, or emotional "
    "interpretation not supported by the visual evidence. Avoid generic openings "
    "such as \"this video shows\". Prefer concrete noun phrases and clear action "
    "verbs."
)

SINGLE_SHOT_USER = (
    "Please describe this shot in detail. The description should emphasize the "
    "visible subject, actions, attributes, scene context, and any camera or "
    "visual-style cues that are clearly present. Do not repeat content, and do "
    "not infer facts that are not visually grounded."
)

REWRITE_SYSTEM = (
    "You are a prompt rewriting assistant for video generation. Rewrite the "
    "input description so that it is maximally useful for regenerating the same "
    "visual content. Preserve only visually supported content. Remove subjective "
    "interpretation, unsupported inference, redundant lead-in phrases, and "
    "non-existent details. Keep the rewritten description focused on the main "
    "subject, actions, attributes, background, location, weather, time, and "
    "camera or style cues. Never add new facts. Return a JSON object: "
    "{\"rewritten description\": \"...\"}."
)

REWRITE_USER = (
    "Rewrite the following shot description into a concise, visually grounded, "
    "generation-oriented description. Avoid subjective wording and do not add "
    "information that is not explicitly supported by the visual content."
)

AGGREGATION_SYSTEM = (
    "You are a film-director assistant responsible for refining a sequence of "
    "consecutive movie shots into a coherent multi-shot description. Each shot "
    "already has an initial local caption. Preserve the local visual facts of "
    "every shot while improving sequence-level coherence. Introduce each "
    "character, object, or location only when it first appears. In later shots, "
    "maintain stable references using clear pronouns or concise descriptors. "
    "Resolve contradictions across shots. Output one caption per shot in the "
    "format \"Shot 1: ...\", \"Shot 2: ...\". Do not merge shots, omit shots, "
    "or reorder them."
)

AGGREGATION_USER = (
    "The following shots belong to the same continuous scene or sequence. Each "
    "shot is accompanied by an initial local description. Please refine all "
    "captions jointly so that the full sequence is narratively coherent, while "
    "preserving shot-level visual accuracy. Ensure consistent entity references "
    "across shots and return exactly one caption per shot."
)

REWRITE_FIELD = "rewritten description"


class ResponseSchema(str, Enum):
    FREE_TEXT = "FREE_TEXT"
    REWRITE_JSON = "REWRITE_JSON"
    SHOT_LIST = "SHOT_LIST"
    MDVL_JSON = "MDVL_JSON"


@dataclass(frozen=True)
class FrameRef:
    clip_id: str
    frame: int


@dataclass(frozen=True)
class ChatRequest:
    system_text: str
    user_text: str
    attachments: tuple[FrameRef, ...] = ()
    expected_schema: ResponseSchema = ResponseSchema.FREE_TEXT

    def __post_init__(self) -> None:
        if not self.system_text or not self.user_text:
            raise ValueError("system and user text must be non-empty")
        object.__setattr__(self, "attachments", tuple(self.attachments))


def build_single_shot_request(shot: ShotRecord) -> ChatRequest:
    """Stage-1 request: fixed template, attachments span the shot's frames."""
    return ChatRequest(
        system_text=SINGLE_SHOT_SYSTEM,
        user_text=SINGLE_SHOT_USER,
        attachments=tuple(FrameRef(shot.clip_id, f)
                          for f in range(shot.start_frame, shot.end_frame)),
        expected_schema=ResponseSchema.FREE_TEXT,
    )


def build_rewrite_request(caption: str) -> ChatRequest:
    if not caption.strip():
        raise ValueError("caption must be non-empty")
    return ChatRequest(
        system_text=REWRITE_SYSTEM,
        user_text=f"{REWRITE_USER}\n\n{caption}",
        expected_schema=ResponseSchema.REWRITE_JSON,
    )


def render_shot_captions(captions: Iterable[str]) -> str:
    return "\n".join(f"Shot {i}: {c}" for i, c in enumerate(captions, start=1))


def build_aggregation_request(seq: StorylineSequence,
                              initial_captions: list[str]) -> ChatRequest:
    """Stage-2 request: one keyframe per shot, initial captions in shot order."""
    if len(initial_captions) != len(seq.shots):
        raise MetricError("COUNT_MISMATCH", (
            f"{len(initial_captions)} captions for {len(seq.shots)} shots"))
    keyframes = tuple(FrameRef(s.clip_id, s.start_frame + s.n_frames // 2)
                      for s in seq.shots)
    return ChatRequest(
        system_text=AGGREGATION_SYSTEM,
        user_text=f"{AGGREGATION_USER}\n\n{render_shot_captions(initial_captions)}",
        attachments=keyframes,
        expected_schema=ResponseSchema.SHOT_LIST,
    )


def alignment_gate(score: float, cfg: MetricConfig) -> bool:
    """Caption-video alignment gate; passes at the threshold (inclusive)."""
    return score >= cfg.videoclip_min


# ---------------------------------------------------------------------------
# Response parsing

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)


def strip_to_json_payload(text: str) -> str:
    """Deterministic single repair: prefer fenced content, else the outermost
    brace span; returns the candidate JSON source (possibly unchanged)."""
    fenced = _FENCE_RE.search(text)
    if fenced:
        return fenced.group(1).strip()
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        return text[start:end + 1].strip()
    return text.strip()


def parse_json_response(text: str) -> dict[str, Any]:
    """Parse a JSON object, making exactly one repair attempt."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        try:
            obj = json.loads(strip_to_json_payload(text))
        except json.JSONDecodeError as exc:
            raise MetricError("MALFORMED", f"not a JSON object: {exc}") from exc
    if not isinstance(obj, dict):
        raise MetricError("MALFORMED", f"expected a JSON object, got {type(obj).__name__}")
    return obj


def parse_rewrite(response: str) -> str:
    obj = parse_json_response(response)
    if REWRITE_FIELD not in obj:
        raise MetricError("MISSING_FIELD", f"no {REWRITE_FIELD!r} key")
    value = obj[REWRITE_FIELD]
    if not isinstance(value, str) or not value.strip():
        raise MetricError("MISSING_FIELD", f"{REWRITE_FIELD!r} is not a non-empty string")
    return value


_SHOT_LINE_RE = re.compile(r"^Shot\s+(\d+)\s*:\s*(.*)$")


def strip_fences(text: str) -> str:
    fenced = _FENCE_RE.search(text)
    return fenced.group(1).strip() if fenced else text


def parse_shot_captions(text: str, n_shots: int) -> list[str]:
    """Parse "Shot k: caption" lines; indices must be exactly 1..n in order.

    Continuation lines are folded into the current caption with a space
    (entries are meant to be single-line, but model output drifts).
    """
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    entries: list[tuple[int, str]] = []
    for line in strip_fences(text).splitlines():
        m = _SHOT_LINE_RE.match(line.strip())
        if m:
            entries.append((int(m.group(1)), m.group(2).strip()))
        elif entries and line.strip():
            entries[-1] = (entries[-1][0], f"{entries[-1][1]} {line.strip()}".strip())

    indices = [k for k, _ in entries]
    if len(set(indices)) != len(indices):
        raise MetricError("DUPLICATE_INDEX", f"indices {indices}")
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise MetricError("OUT_OF_ORDER", f"indices {indices}")
    if indices != list(range(1, n_shots + 1)):
        raise MetricError("COUNT_MISMATCH",
                          f"expected shots 1..{n_shots}, got {indices}")
    captions = [c for _, c in entries]
    if any(not c for c in captions):
        empty = [k for k, c in entries if not c]
        raise MetricError("EMPTY_CAPTION", f"shots {empty} have empty captions")
    return captions


# ---------------------------------------------------------------------------
# Batch request/response files (one JSON record per line, keyed by request_id)


@dataclass(frozen=True)
class BatchRequest:
    request_id: str
    kind: str  # caption_stage1 | caption_rewrite | caption_stage2 | mdvl
    request: ChatRequest


@dataclass(frozen=True)
class BatchResponse:
    request_id: str
    status: str  # OK | FAILED
    text: str = ""
    error: str = ""


def request_to_dict(req: BatchRequest) -> dict[str, Any]:
    return {
        "schema_version": 1,
        "request_id": req.request_id,
        "kind": req.kind,
        "system_text": req.request.system_text,
        "user_text": req.request.user_text,
        "attachments": [{"clip_id": a.clip_id, "frame": a.frame}
                        for a in req.request.attachments],
        "expected_schema": req.request.expected_schema.value,
    }


def request_from_dict(d: dict[str, Any]) -> BatchRequest:
    return BatchRequest(
        request_id=str(d["request_id"]),
        kind=str(d["kind"]),
        request=ChatRequest(
            system_text=d["system_text"],
            user_text=d["user_text"],
            attachments=tuple(FrameRef(a["clip_id"], int(a["frame"]))
                              for a in d.get("attachments", [])),
            expected_schema=ResponseSchema(d.get("expected_schema", "FREE_TEXT")),
        ),
    )


def write_batch_requests(requests: Iterable[BatchRequest]) -> str:
    return "".join(
        json.dumps(request_to_dict(r), sort_keys=True, separators=(",", ":"),
                   ensure_ascii=False) + "\n"
        for r in requests)


def read_batch_requests(text: str) -> list[BatchRequest]:
    return [request_from_dict(json.loads(line))
            for line in text.splitlines() if line.strip()]


def write_batch_responses(responses: Iterable[BatchResponse]) -> str:
    lines = []
    for r in responses:
        obj: dict[str, Any] = {"schema_version": 1, "request_id": r.request_id,
                               "status": r.status, "text": r.text}
        if r.error:
            obj["error"] = r.error
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":"),
                                ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def read_batch_responses(text: str) -> dict[str, BatchResponse]:
    out: dict[str, BatchResponse] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        resp = BatchResponse(
            request_id=str(d["request_id"]),
            status=str(d.get("status", "OK")),
            text=str(d.get("text", "")),
            error=str(d.get("error", "")),
        )
        out[resp.request_id] = resp
    return out
