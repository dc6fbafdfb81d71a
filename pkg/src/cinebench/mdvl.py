"""Visual-logic judging: keyframe-grid specs, judge prompt, score parsing.

The judge sees a 2-row grid (columns are shots, rows are two chronological
keyframes per shot) and returns four 1-5 integer scores plus free-text
reasoning.  Grid rendering is the extractor's job; this module only decides
*which* frames go in the grid and validates what the judge sends back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .captions import ChatRequest, FrameRef, ResponseSchema, parse_json_response
from .errors import MetricError
from .manifest import StorylineSequence

MDVL_PROMPT_TEMPLATE = """You are a professional film visual narrative reviewer.
Below is a keyframe grid of a generated multi-shot video. Each column corresponds to a sub-shot, containing 2 uniformly sampled keyframes (in chronological order from top to bottom). The columns from left to right are Shot 1, Shot 2, Shot 3, etc.

Global Narrative Description: {global_narrative}
Local Prompts for Each Shot: {shot_prompts}

Please strictly base your evaluation on the visual content (do not guess merely from the text) and score the following 4 dimensions on a scale of 1 to 5.

Dimension 1: Scene.Logic (Scene Consistency)
Evaluate the consistency of the background environment after cuts.
- When cutting to a different scene and back, do the background details (furniture, lighting, windows, plants, etc.) remain identical?
- Score 5 = Background details are perfectly consistent, seamless cuts. | Score 1 = Background changes every shot, completely chaotic.

Dimension 2: Casting.Logic (Identity Consistency)
Evaluate the preservation of character identities across shots.
- Do the physical traits (hairstyle, clothing color, body type) of the same character remain consistent?
- Note: Do not penalize if a character is omitted in certain shots due to framing/perspective.
- Score 5 = All identities perfectly maintained. | Score 1 = Severe arbitrary mutations (e.g., face swapping, outfit changing).

Dimension 3: Act.Logic (Action Continuity)
Evaluate the temporal continuation of dynamic behaviors.
- Do dynamic actions (talking, walking, interacting) form a logical temporal continuation after the cut?
- Score 5 = Fluent action transitions, temporally coherent. | Score 1 = Complete jump-cut, zero action linkage logic.

Dimension 4: Spat.Logic (Spatial Topology)
Evaluate the spatial relationships across shots.
- Are relative positions maintained reasonably? (e.g., if A is on the left and B is on the right, they should not teleport). Does it follow the 180-degree rule?
- Score 5 = Spatial relationships are completely logical. | Score 1 = Character positions are entirely messed up.

Please output a single JSON object in the following format:
{{ "scene_logic": <1-5>, "casting_logic": <1-5>, "act_logic": <1-5>, "spat_logic": <1-5>, "reasoning": "<concise analysis>" }}"""

MDVL_USER_TEXT = "Evaluate the attached keyframe grid and output the JSON object."

SCORE_KEYS = ("scene_logic", "casting_logic", "act_logic", "spat_logic")
NO_NARRATIVE_PLACEHOLDER = "(none provided)"


@dataclass(frozen=True)
class GridSpec:
    """Two chronological keyframe picks per shot; columns follow shot order."""

    picks: tuple[tuple[str, int, int], ...]  # (clip_id, frame_a, frame_b)

    def __post_init__(self) -> None:
        object.__setattr__(self, "picks", tuple(self.picks))
        for clip_id, a, b in self.picks:
            if a >= b:
                raise ValueError(f"{clip_id}: frame_a must precede frame_b")

    @property
    def columns(self) -> int:
        return len(self.picks)


@dataclass(frozen=True)
class MdvlScores:
    scene_logic: int
    casting_logic: int
    act_logic: int
    spat_logic: int
    reasoning: str = ""

    def __post_init__(self) -> None:
        for key in SCORE_KEYS:
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or not 1 <= v <= 5:
                raise MetricError("SCORE_OUT_OF_RANGE", f"{key}={v!r}")


def build_grid_spec(seq: StorylineSequence) -> GridSpec:
    """Quarter-point keyframes: floor(L/4) and floor(3L/4) within each shot."""
    picks = []
    for shot in seq.shots:
        n = shot.n_frames
        if n < 2:
            raise MetricError("SHOT_TOO_SHORT",
                              f"{shot.clip_id} has {n} frame(s), need >= 2")
        a = shot.start_frame + (n // 4)
        b = shot.start_frame + (3 * n // 4)
        picks.append((shot.clip_id, a, b))
    return GridSpec(picks=tuple(picks))


def build_mdvl_prompt(grid: GridSpec, global_narrative: str | None,
                      shot_prompts: Sequence[str]) -> ChatRequest:
    """Fill the judge template; attachments list the grid frames column-major."""
    if len(shot_prompts) != grid.columns:
        raise MetricError("COUNT_MISMATCH", (
            f"{len(shot_prompts)} shot prompts for {grid.columns} grid columns"))
    narrative = global_narrative if global_narrative else NO_NARRATIVE_PLACEHOLDER
    prompts_text = "\n".join(
        f"Shot {i}: {p}" for i, p in enumerate(shot_prompts, start=1))
    system_text = MDVL_PROMPT_TEMPLATE.format(
        global_narrative=narrative, shot_prompts=prompts_text)
    attachments = []
    for clip_id, a, b in grid.picks:
        attachments.append(FrameRef(clip_id, a))
        attachments.append(FrameRef(clip_id, b))
    return ChatRequest(
        system_text=system_text,
        user_text=MDVL_USER_TEXT,
        attachments=tuple(attachments),
        expected_schema=ResponseSchema.MDVL_JSON,
    )


def parse_mdvl_response(text: str) -> MdvlScores:
    """Validate the judge's JSON; integer 1-5 scores only, floats rejected."""
    obj = parse_json_response(text)
    for key in (*SCORE_KEYS, "reasoning"):
        if key not in obj:
            raise MetricError("MISSING_KEY", f"no {key!r} key")
    values = {}
    for key in SCORE_KEYS:
        v = obj[key]
        if not isinstance(v, int) or isinstance(v, bool):
            raise MetricError("MALFORMED", f"{key} must be an integer, got {v!r}")
        if not 1 <= v <= 5:
            raise MetricError("SCORE_OUT_OF_RANGE", f"{key}={v}")
        values[key] = v
    reasoning = obj["reasoning"]
    if not isinstance(reasoning, str):
        raise MetricError("MALFORMED", "reasoning must be a string")
    return MdvlScores(reasoning=reasoning, **values)


@dataclass(frozen=True)
class MdvlAggregate:
    scene_logic: float
    casting_logic: float
    act_logic: float
    spat_logic: float
    evaluated: int
    failed: int


def aggregate_mdvl(results: Iterable[MdvlScores], failed: int = 0) -> MdvlAggregate:
    """Per-axis means rounded to 2 decimals; failed parses are only counted."""
    results = list(results)
    if not results:
        raise MetricError("EMPTY", "no parsed judge results")
    means = {key: round(sum(getattr(r, key) for r in results) / len(results), 2)
             for key in SCORE_KEYS}
    return MdvlAggregate(evaluated=len(results), failed=failed, **means)
