"""Method-level aggregation and deterministic rendering of score tables.

All metrics are per-sequence means except the rhythm gap, which compares
the *pooled* coherence distribution of motion-gated sequences against the
reference distribution once per method.  Inapplicable metrics (pose
diversity and copy rate for methods without an external reference) render
as "-".
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import MetricError
from .mdvl import MdvlScores
from .temporal import CoherenceHistogram, consistency_gap

TRACK1_COLUMNS = (
    ("txt_align", "Txt.Align", "up", 4),
    ("trans_dev", "Trans.Dev", "down", 2),
    ("scene_logic", "Scene.Logic", "up", 2),
    ("casting_logic", "Casting.Logic", "up", 2),
    ("act_logic", "Act.Logic", "up", 2),
    ("spat_logic", "Spat.Logic", "up", 2),
    ("con_gap", "Con.Gap", "down", 4),
)

TRACK2_COLUMNS = (
    ("ref_sub_con", "Ref-Sub.Con", "up", 2),
    ("inter_sub_con", "Inter-Sub.Con", "up", 2),
    ("subj_recall", "Subj.Recall", "up", 4),
    ("act_str", "Act.Str", "up", 4),
    ("acp_var", "ACP-Var", "up", 4),
    ("cp_rate", "CP-Rate", "down", 2),
)

_ARROWS = {"up": "↑", "down": "↓"}


@dataclass(frozen=True)
class Track1Result:
    """Per-sequence narrative-effectiveness metrics."""

    sequence_id: str
    txt_align: float
    trans_dev: float | None
    misses: int
    extras: int
    scene_con: float | None
    motion_score: float
    motion_passed: bool
    coherence: tuple[float, ...] = ()
    mdvl: MdvlScores | None = None


@dataclass(frozen=True)
class Track2Result:
    """Per-sequence subject-consistency metrics."""

    sequence_id: str
    ref_sub_con: float
    inter_sub_con: float | None
    subj_recall: float
    act_str: float
    acp_var: float | None
    copy_fraction: float | None  # flagged/total frames; None without a reference
    has_external_reference: bool = False


@dataclass
class ScoreReport:
    """Aggregated method-level scores for both tracks."""

    method: str
    track1: dict[str, float | None] = field(default_factory=dict)
    track2: dict[str, float | None] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for table in (self.track1, self.track2):
            for key, value in table.items():
                if value is not None and not math.isfinite(value):
                    raise ValueError(f"{key} must be finite or None, got {value!r}")


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def build_report(track1: Sequence[Track1Result],
                 track2: Sequence[Track2Result],
                 method: str,
                 reference_hist: CoherenceHistogram | None = None,
                 skipped: int = 0) -> ScoreReport:
    """Aggregate per-sequence results into one method row per track.

    Raises EMPTY_TRACK when neither track has an evaluated sequence.
    """
    if not track1 and not track2:
        raise MetricError("EMPTY_TRACK", "no evaluated sequences in either track")

    t1: dict[str, float | None] = {}
    t2: dict[str, float | None] = {}
    gated_out = 0

    if track1:
        t1["txt_align"] = _mean([r.txt_align for r in track1])
        t1["trans_dev"] = _mean([r.trans_dev for r in track1 if r.trans_dev is not None])
        judged = [r.mdvl for r in track1 if r.mdvl is not None]
        for key in ("scene_logic", "casting_logic", "act_logic", "spat_logic"):
            t1[key] = (_mean([getattr(m, key) for m in judged]) if judged else None)
        gated = [r for r in track1 if r.motion_passed]
        gated_out = len(track1) - len(gated)
        if reference_hist is not None and gated:
            t1["con_gap"] = consistency_gap([r.coherence for r in gated], reference_hist)
        else:
            t1["con_gap"] = None

    if track2:
        t2["ref_sub_con"] = _mean([r.ref_sub_con for r in track2])
        t2["inter_sub_con"] = _mean(
            [r.inter_sub_con for r in track2 if r.inter_sub_con is not None])
        t2["subj_recall"] = _mean([r.subj_recall for r in track2])
        t2["act_str"] = _mean([r.act_str for r in track2])
        with_ref = [r for r in track2 if r.has_external_reference]
        t2["acp_var"] = _mean([r.acp_var for r in with_ref if r.acp_var is not None])
        fractions = [r.copy_fraction for r in with_ref if r.copy_fraction is not None]
        t2["cp_rate"] = 100.0 * _mean(fractions) if fractions else None

    return ScoreReport(
        method=method,
        track1=t1,
        track2=t2,
        counts={
            "evaluated": len(track1) + len(track2),
            "skipped": skipped,
            "gated_out": gated_out,
        },
    )


def _fmt(value: float | None, decimals: int) -> str:
    if value is None:
        return "-"
    return f"{value:.{decimals}f}"


def _table_rows(reports: Sequence[ScoreReport], track: int) -> tuple[list[str], list[list[str]]]:
    columns = TRACK1_COLUMNS if track == 1 else TRACK2_COLUMNS
    header = ["Method"] + [f"{label} {_ARROWS[direction]}"
                           for _, label, direction, _ in columns]
    rows = []
    for rep in sorted(reports, key=lambda r: r.method):
        table = rep.track1 if track == 1 else rep.track2
        if not table:
            continue
        rows.append([rep.method] + [_fmt(table.get(key), decimals)
                                    for key, _, _, decimals in columns])
    return header, rows


def render_markdown(reports: Sequence[ScoreReport]) -> bytes:
    out = io.StringIO()
    for track, title in ((1, "Track 1: Narrative Effectiveness"),
                         (2, "Track 2: Subject Consistency")):
        header, rows = _table_rows(reports, track)
        if not rows:
            continue
        out.write(f"## {title}\n\n")
        out.write("| " + " | ".join(header) + " |\n")
        out.write("|" + "|".join(" --- " for _ in header) + "|\n")
        for row in rows:
            out.write("| " + " | ".join(row) + " |\n")
        out.write("\n")
    counts = {r.method: r.counts for r in sorted(reports, key=lambda r: r.method)}
    out.write("Counts: " + json.dumps(counts, sort_keys=True) + "\n\n")
    out.write("Con.Gap compares the pooled coherence distribution of motion-gated "
              "sequences against the reference distribution; all other metrics "
              "are per-sequence means. \"-\" marks inapplicable metrics.\n")
    return out.getvalue().encode("utf-8")


def render_csv(reports: Sequence[ScoreReport]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for track in (1, 2):
        header, rows = _table_rows(reports, track)
        if not rows:
            continue
        writer.writerow([f"track{track}"])
        writer.writerow(header)
        writer.writerows(rows)
    return out.getvalue().encode("utf-8")


def render_records(reports: Sequence[ScoreReport]) -> bytes:
    lines = []
    for rep in sorted(reports, key=lambda r: r.method):
        obj: dict[str, Any] = {
            "schema_version": 1,
            "method": rep.method,
            "track1": rep.track1,
            "track2": rep.track2,
            "counts": rep.counts,
        }
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    return ("".join(line + "\n" for line in lines)).encode("utf-8")


def render(reports: Sequence[ScoreReport], fmt: str) -> bytes:
    """Render reports to one of: markdown, csv, records."""
    if fmt == "markdown":
        return render_markdown(reports)
    if fmt == "csv":
        return render_csv(reports)
    if fmt == "records":
        return render_records(reports)
    raise ValueError(f"unknown format {fmt!r}")
