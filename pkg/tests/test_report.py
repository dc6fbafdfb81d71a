import csv
import io
from pathlib import Path

import pytest

from cinebench.errors import MetricError
from cinebench.mdvl import MdvlScores
from cinebench.report import (ScoreReport, Track1Result, Track2Result,
                              build_report, render)
from cinebench.temporal import coherence_histogram

GOLDEN = Path(__file__).parent / "golden"


def fixture_reports():
    t1 = [
        Track1Result("s1", 0.2359, 2.55, 0, 0, 0.81, 120.0, True,
                     (0.4, 0.5), MdvlScores(4, 4, 3, 3)),
        Track1Result("s2", 0.2100, None, 2, 0, 0.75, 0.1, False,
                     (0.2,), MdvlScores(3, 4, 3, 3)),
    ]
    t2 = [
        Track2Result("s3", 78.50, 62.27, 0.6990, 187.8128, 0.8827, 0.0735, True),
        Track2Result("s4", 64.27, 66.27, 0.5967, 191.3154, None, None, False),
    ]
    ref = coherence_histogram([0.4, 0.5, 0.2, 0.3], 20)
    full = build_report(t1, t2, "demo-method", ref, skipped=1)
    t2_free = [Track2Result("s5", 57.36, 61.11, 0.6495, 188.2731, None, None, False)]
    free = build_report([], t2_free, "reference-free")
    return [full, free]


class TestBuildReport:
    def test_single_sequence_passes_through(self):
        t2 = [Track2Result("s1", 80.0, 70.0, 0.5, 100.0, 0.9, 0.1, True)]
        rep = build_report([], t2, "m")
        assert rep.track2["ref_sub_con"] == pytest.approx(80.0)
        assert rep.track2["acp_var"] == pytest.approx(0.9)
        assert rep.track2["cp_rate"] == pytest.approx(10.0)

    def test_reference_free_method_gets_nulls(self):
        t2 = [Track2Result("s1", 80.0, 70.0, 0.5, 100.0, None, None, False)]
        rep = build_report([], t2, "m")
        assert rep.track2["acp_var"] is None
        assert rep.track2["cp_rate"] is None

    def test_txt_align_mean(self):
        t1 = [Track1Result("a", 0.1, None, 0, 0, None, 5.0, True, ()),
              Track1Result("b", 0.3, None, 0, 0, None, 5.0, True, ())]
        rep = build_report(t1, [], "m")
        assert rep.track1["txt_align"] == pytest.approx(0.2)

    def test_con_gap_pooled_not_averaged(self):
        ref = coherence_histogram([0.35] * 10, 20)
        # each sequence alone has a different histogram than the pool
        t1 = [Track1Result("a", 0.1, None, 0, 0, None, 5.0, True, (0.35, 0.35)),
              Track1Result("b", 0.1, None, 0, 0, None, 5.0, True, (0.35,))]
        rep = build_report(t1, [], "m", ref)
        assert rep.track1["con_gap"] == pytest.approx(0.0)

    def test_gated_out_sequences_excluded_from_pool(self):
        ref = coherence_histogram([0.35] * 10, 20)
        t1 = [Track1Result("a", 0.1, None, 0, 0, None, 5.0, True, (0.35,)),
              Track1Result("b", 0.1, None, 0, 0, None, 0.0, False, (-0.9,))]
        rep = build_report(t1, [], "m", ref)
        assert rep.track1["con_gap"] == pytest.approx(0.0)
        assert rep.counts["gated_out"] == 1

    def test_empty_both_tracks(self):
        with pytest.raises(MetricError) as err:
            build_report([], [], "m")
        assert err.value.code == "EMPTY_TRACK"


class TestRender:
    def test_markdown_matches_golden(self):
        assert render(fixture_reports(), "markdown") == (GOLDEN / "report.md").read_bytes()

    def test_csv_matches_golden(self):
        assert render(fixture_reports(), "csv") == (GOLDEN / "report.csv").read_bytes()

    def test_rendering_deterministic(self):
        reports = fixture_reports()
        assert render(reports, "markdown") == render(fixture_reports(), "markdown")
        assert render(reports, "records") == render(fixture_reports(), "records")

    def test_inapplicable_metrics_render_dash(self):
        text = render(fixture_reports(), "markdown").decode()
        row = next(line for line in text.splitlines() if "reference-free" in line)
        assert row.count(" - ") == 2  # ACP-Var and CP-Rate

    def test_csv_round_trips_at_printed_precision(self):
        data = render(fixture_reports(), "csv").decode()
        rows = list(csv.reader(io.StringIO(data)))
        track2_header = rows[rows.index(["track2"]) + 1]
        values = rows[rows.index(["track2"]) + 2]
        table = dict(zip(track2_header, values))
        assert float(table["Ref-Sub.Con ↑"]) == pytest.approx(71.38)
        assert float(table["Subj.Recall ↑"]) == pytest.approx(0.6479)

    def test_method_rows_sorted(self):
        text = render(list(reversed(fixture_reports())), "markdown")
        assert text == render(fixture_reports(), "markdown")

    def test_column_order_matches_published_tables(self):
        text = render(fixture_reports(), "markdown").decode()
        lines = text.splitlines()
        t1_header = next(l for l in lines if "Txt.Align" in l)
        assert t1_header == ("| Method | Txt.Align ↑ | Trans.Dev ↓ | "
                             "Scene.Logic ↑ | Casting.Logic ↑ | "
                             "Act.Logic ↑ | Spat.Logic ↑ | Con.Gap ↓ |")
        t2_header = next(l for l in lines if "Ref-Sub.Con" in l)
        assert t2_header == ("| Method | Ref-Sub.Con ↑ | Inter-Sub.Con ↑ | "
                             "Subj.Recall ↑ | Act.Str ↑ | ACP-Var ↑ | "
                             "CP-Rate ↓ |")

    def test_non_finite_values_rejected(self):
        with pytest.raises(ValueError):
            ScoreReport(method="m", track1={"txt_align": float("nan")})
