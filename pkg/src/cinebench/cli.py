"""Command-line entry point: validate / curate / score / caption / mdvl / report.

Exit codes: 0 success, 1 findings, 2 empty input, 64 usage error.  Scoring
parallelism is a per-sequence map whose results are merged in sequence-id
order, so outputs are byte-identical across parallelism degrees.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import captions as cap
from . import mdvl as mdvl_mod
from . import scoring
from .bundle import load_bundle, load_bundle_dir
from .config import MatchConstraints, RunConfig
from .curation import (QUALITY_TENSOR, RejectionLog, ShotQualityRecord,
                       build_s2v_pair, cascade_filter, cross_shot_match,
                       parse_tracks, sliding_windows)
from .errors import CinebenchError, MetricError
from .manifest import (StorylineSequence, parse_manifest, parse_pair_manifest,
                       serialize_manifest, serialize_pair_manifest)
from .mdvl import aggregate_mdvl, build_grid_spec, build_mdvl_prompt, parse_mdvl_response
from .report import build_report, render
from .temporal import coherence_histogram
from .validation import validate_sequence

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_EMPTY = 2
EXIT_USAGE = 64


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for name in ("manifest", "bundle_dir", "gallery_bundle", "ref_coherence_bundle",
                 "pairs", "tracks", "mdvl_scores", "output_dir"):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            setattr(cfg, name, Path(value))
    for name in ("parallelism", "method", "track"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        value = getattr(cfg, name)
        if value is None:
            raise UsageError(f"missing required path: --{name.replace('_', '-')}")
        if name != "output_dir" and not Path(value).exists():
            raise UsageError(f"{name.replace('_', '-')} does not exist: {value}")


class UsageError(Exception):
    pass


def _read_manifest(path: Path) -> tuple[list[StorylineSequence], list]:
    sequences, issues = parse_manifest(Path(path).read_text(encoding="utf-8"))
    return sequences, issues


def _parallel_map(fn: Callable, items: Sequence, degree: int) -> list:
    if degree <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=degree) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# validate


def cmd_validate(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle_dir")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    sequences, issues = _read_manifest(cfg.manifest)
    bundles = load_bundle_dir(cfg.bundle_dir)

    lines = []
    for issue in issues:
        lines.append({"kind": "manifest", "line": issue.line, "code": issue.code,
                      "detail": issue.message})
    for seq in sequences:
        report = validate_sequence(seq, bundles)
        for finding in report.findings:
            lines.append({"kind": "sequence", "sequence_id": seq.sequence_id,
                          "code": finding.code, "clip_id": finding.clip_id,
                          "detail": finding.detail})
    out = cfg.output_dir / "validation.jsonl"
    out.write_text("".join(
        json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n"
        for entry in lines), encoding="utf-8")
    print(f"validate: {len(sequences)} sequences, {len(lines)} findings -> {out}")
    return EXIT_OK if not lines else EXIT_FINDINGS


# ---------------------------------------------------------------------------
# curate


def _shot_quality(bundles, clip_id: str) -> ShotQualityRecord | None:
    bundle = bundles.get(clip_id)
    if bundle is None:
        return None
    tensor = bundle.get(QUALITY_TENSOR)
    if tensor is None:
        return None
    return ShotQualityRecord.from_tensor(tensor)


def cmd_curate(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle_dir")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    sequences, issues = _read_manifest(cfg.manifest)
    bundles = load_bundle_dir(cfg.bundle_dir)
    tracks = (parse_tracks(Path(cfg.tracks).read_text(encoding="utf-8"))
              if cfg.tracks else [])
    constraints = MatchConstraints()
    rejections = RejectionLog()
    for issue in issues:
        rejections.add("manifest_line", str(issue.line), f"{issue.code}: {issue.message}")

    windows: list[StorylineSequence] = []
    pairs = []
    for seq in sorted(sequences, key=lambda s: s.sequence_id):
        accepted: set[str] = set()
        for shot in seq.shots:
            quality = _shot_quality(bundles, shot.clip_id)
            if quality is None:
                rejections.add("clip", shot.clip_id, "MISSING_QUALITY")
                continue
            decision = cascade_filter(quality, cfg.metrics)
            if decision.accepted:
                accepted.add(shot.clip_id)
            else:
                rejections.add("clip", shot.clip_id, decision.stage.value)
        seq_windows = sliding_windows(seq, cfg.metrics, accepted)
        windows.extend(seq_windows)

        if not tracks:
            continue
        for window in seq_windows:
            window_clips = {s.clip_id for s in window.shots}
            seen_tracks = set()
            for shot in window.shots:
                for track in tracks:
                    if track.identity_id in seen_tracks:
                        continue
                    if not any(a.clip_id == shot.clip_id for a in track.appearances):
                        continue
                    seen_tracks.add(track.identity_id)
                    try:
                        candidates = cross_shot_match(
                            [track], seq, shot.clip_id, constraints)
                    except MetricError as exc:
                        rejections.add("pair", f"{window.sequence_id}/{track.identity_id}",
                                       exc.code)
                        continue
                    candidates = [c for c in candidates if c.clip_id not in window_clips]
                    if not candidates:
                        rejections.add("pair", f"{window.sequence_id}/{track.identity_id}",
                                       "EMPTY")
                        continue
                    pairs.append(build_s2v_pair(candidates[0], window, constraints))

    (cfg.output_dir / "windows.jsonl").write_text(
        serialize_manifest(windows), encoding="utf-8")
    (cfg.output_dir / "pairs.jsonl").write_text(
        serialize_pair_manifest(sorted(pairs, key=lambda p: p.pair_id)),
        encoding="utf-8")
    (cfg.output_dir / "rejections.jsonl").write_text(
        rejections.render(), encoding="utf-8")
    print(f"curate: {len(windows)} windows, {len(pairs)} pairs, "
          f"{len(rejections.entries)} rejections -> {cfg.output_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# score


def _load_mdvl_scores(path: Path | None) -> dict[str, mdvl_mod.MdvlScores]:
    if path is None or not Path(path).exists():
        return {}
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out[d["sequence_id"]] = mdvl_mod.MdvlScores(
            scene_logic=d["scene_logic"], casting_logic=d["casting_logic"],
            act_logic=d["act_logic"], spat_logic=d["spat_logic"],
            reasoning=d.get("reasoning", ""))
    return out


def cmd_score(cfg: RunConfig) -> int:
    _require(cfg, "manifest", "bundle_dir")
    if cfg.track not in (1, 2):
        raise UsageError("--track must be 1 or 2")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    sequences, issues = _read_manifest(cfg.manifest)
    bundles = load_bundle_dir(cfg.bundle_dir)

    pairs_by_sequence = {}
    if cfg.pairs and Path(cfg.pairs).exists():
        pairs, _ = parse_pair_manifest(Path(cfg.pairs).read_text(encoding="utf-8"))
        for pair in sorted(pairs, key=lambda p: p.pair_id):
            pairs_by_sequence.setdefault(pair.target_sequence_id, pair)

    gallery = None
    if cfg.gallery_bundle and Path(cfg.gallery_bundle).exists():
        gallery = load_bundle(cfg.gallery_bundle).get("subject_emb")

    mdvl_scores = _load_mdvl_scores(cfg.mdvl_scores)

    def run_one(seq: StorylineSequence):
        if cfg.track == 1:
            return scoring.score_track1(seq, bundles, cfg.metrics,
                                        mdvl_scores.get(seq.sequence_id))
        return scoring.score_track2(seq, bundles, cfg.metrics,
                                    pairs_by_sequence.get(seq.sequence_id),
                                    gallery, cfg.recall_target_class)

    ordered = sorted(sequences, key=lambda s: s.sequence_id)
    outcomes = _parallel_map(run_one, ordered, cfg.parallelism)

    results = [r for r, _ in outcomes if r is not None]
    skips = []
    for seq, (result, report) in zip(ordered, outcomes):
        if result is None:
            skips.append({"sequence_id": seq.sequence_id,
                          "codes": sorted(set(report.codes()))})

    out = cfg.output_dir / f"results_track{cfg.track}.jsonl"
    out.write_text(scoring.write_results(results), encoding="utf-8")
    skip_out = cfg.output_dir / f"skipped_track{cfg.track}.jsonl"
    skip_out.write_text("".join(
        json.dumps(s, sort_keys=True, separators=(",", ":")) + "\n"
        for s in skips), encoding="utf-8")
    print(f"score track {cfg.track}: {len(results)} scored, {len(skips)} skipped, "
          f"{len(issues)} manifest issues -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(cfg: RunConfig) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    t1_path = cfg.output_dir / "results_track1.jsonl"
    t2_path = cfg.output_dir / "results_track2.jsonl"
    track1, track2 = [], []
    if t1_path.exists():
        track1, _ = scoring.read_results(t1_path.read_text(encoding="utf-8"))
    if t2_path.exists():
        _, track2 = scoring.read_results(t2_path.read_text(encoding="utf-8"))

    skipped = 0
    for name in ("skipped_track1.jsonl", "skipped_track2.jsonl"):
        p = cfg.output_dir / name
        if p.exists():
            skipped += sum(1 for line in p.read_text(encoding="utf-8").splitlines()
                           if line.strip())

    reference_hist = None
    if cfg.ref_coherence_bundle and Path(cfg.ref_coherence_bundle).exists():
        values = load_bundle(cfg.ref_coherence_bundle).get("coherence")
        if values is not None and values.size:
            reference_hist = coherence_histogram(
                [float(v) for v in values], cfg.metrics.coherence_bins)

    try:
        rep = build_report(track1, track2, cfg.method, reference_hist, skipped)
    except MetricError as exc:
        print(f"report: {exc}", file=sys.stderr)
        return EXIT_EMPTY

    (cfg.output_dir / "report.md").write_bytes(render([rep], "markdown"))
    (cfg.output_dir / "report.csv").write_bytes(render([rep], "csv"))
    (cfg.output_dir / "report.jsonl").write_bytes(render([rep], "records"))
    print(f"report: wrote report.md / report.csv / report.jsonl -> {cfg.output_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# caption


def cmd_caption_build_stage1(cfg: RunConfig, out_path: Path) -> int:
    _require(cfg, "manifest")
    sequences, _ = _read_manifest(cfg.manifest)
    requests = []
    for seq in sorted(sequences, key=lambda s: s.sequence_id):
        for shot in seq.shots:
            requests.append(cap.BatchRequest(
                request_id=f"s1:{shot.clip_id}", kind="caption_stage1",
                request=cap.build_single_shot_request(shot)))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(cap.write_batch_requests(requests), encoding="utf-8")
    print(f"caption build-stage1: {len(requests)} requests -> {out_path}")
    return EXIT_OK


def cmd_caption_build_stage2(cfg: RunConfig, out_path: Path) -> int:
    _require(cfg, "manifest")
    sequences, _ = _read_manifest(cfg.manifest)
    requests = []
    skipped = 0
    for seq in sorted(sequences, key=lambda s: s.sequence_id):
        initial = [s.caption_rewritten or s.caption for s in seq.shots]
        if any(not c for c in initial):
            skipped += 1
            continue
        requests.append(cap.BatchRequest(
            request_id=f"s2:{seq.sequence_id}", kind="caption_stage2",
            request=cap.build_aggregation_request(seq, initial)))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(cap.write_batch_requests(requests), encoding="utf-8")
    print(f"caption build-stage2: {len(requests)} requests, "
          f"{skipped} skipped (missing captions) -> {out_path}")
    return EXIT_OK


def cmd_caption_ingest(cfg: RunConfig, requests_path: Path, responses_path: Path,
                       out_path: Path) -> int:
    _require(cfg, "manifest")
    sequences, _ = _read_manifest(cfg.manifest)
    requests = cap.read_batch_requests(
        Path(requests_path).read_text(encoding="utf-8"))
    responses = cap.read_batch_responses(
        Path(responses_path).read_text(encoding="utf-8"))
    kinds = {r.request_id: r.kind for r in requests}

    captions_by_clip: dict[str, str] = {}
    rewrites_by_clip: dict[str, str] = {}
    prompts_by_sequence: dict[str, list[str]] = {}
    failures = []
    n_shots = {seq.sequence_id: len(seq.shots) for seq in sequences}

    for request_id, resp in sorted(responses.items()):
        kind = kinds.get(request_id)
        if kind is None or resp.status != "OK":
            failures.append({"request_id": request_id, "code": "FAILED"})
            continue
        prefix, _, ident = request_id.partition(":")
        try:
            if kind == "caption_stage1":
                captions_by_clip[ident] = resp.text.strip()
            elif kind == "caption_rewrite":
                rewrites_by_clip[ident] = cap.parse_rewrite(resp.text)
            elif kind == "caption_stage2":
                prompts_by_sequence[ident] = cap.parse_shot_captions(
                    resp.text, n_shots.get(ident, 0))
        except MetricError as exc:
            failures.append({"request_id": request_id, "code": exc.code})

    updated = []
    for seq in sequences:
        shots = []
        for shot in seq.shots:
            caption = captions_by_clip.get(shot.clip_id, shot.caption)
            rewritten = rewrites_by_clip.get(shot.clip_id, shot.caption_rewritten)
            shots.append(type(shot)(
                clip_id=shot.clip_id, source_id=shot.source_id,
                start_frame=shot.start_frame, end_frame=shot.end_frame,
                fps=shot.fps, caption=caption, caption_rewritten=rewritten,
                extras=shot.extras))
        prompts = prompts_by_sequence.get(seq.sequence_id)
        updated.append(StorylineSequence(
            sequence_id=seq.sequence_id, shots=tuple(shots),
            global_narrative=seq.global_narrative,
            shot_prompts=tuple(prompts) if prompts is not None else seq.shot_prompts,
            extras=seq.extras))

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(serialize_manifest(updated), encoding="utf-8")
    print(f"caption ingest: {len(responses)} responses, {len(failures)} failures "
          f"-> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# mdvl


def cmd_mdvl_build(cfg: RunConfig, out_path: Path) -> int:
    _require(cfg, "manifest")
    sequences, _ = _read_manifest(cfg.manifest)
    requests = []
    grids = []
    for seq in sorted(sequences, key=lambda s: s.sequence_id):
        prompts = list(seq.shot_prompts or [s.caption for s in seq.shots])
        try:
            grid = build_grid_spec(seq)
            request = build_mdvl_prompt(grid, seq.global_narrative, prompts)
        except MetricError as exc:
            logger.warning("mdvl build: %s skipped (%s)", seq.sequence_id, exc.code)
            continue
        grids.append({"schema_version": 1, "sequence_id": seq.sequence_id,
                      "picks": [list(p) for p in grid.picks]})
        requests.append(cap.BatchRequest(
            request_id=f"mdvl:{seq.sequence_id}", kind="mdvl", request=request))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(cap.write_batch_requests(requests), encoding="utf-8")
    grid_path = out_path.with_name(out_path.stem + "_grids.jsonl")
    grid_path.write_text("".join(
        json.dumps(g, sort_keys=True, separators=(",", ":")) + "\n"
        for g in grids), encoding="utf-8")
    print(f"mdvl build: {len(requests)} requests -> {out_path} (+ {grid_path.name})")
    return EXIT_OK


def cmd_mdvl_ingest(cfg: RunConfig, responses_path: Path, out_path: Path) -> int:
    responses = cap.read_batch_responses(
        Path(responses_path).read_text(encoding="utf-8"))
    rows = []
    parsed = []
    failed = 0
    for request_id, resp in sorted(responses.items()):
        if not request_id.startswith("mdvl:"):
            continue
        sequence_id = request_id.partition(":")[2]
        if resp.status != "OK":
            failed += 1
            continue
        try:
            scores = parse_mdvl_response(resp.text)
        except MetricError:
            failed += 1
            continue
        parsed.append(scores)
        rows.append({"schema_version": 1, "sequence_id": sequence_id,
                     "scene_logic": scores.scene_logic,
                     "casting_logic": scores.casting_logic,
                     "act_logic": scores.act_logic,
                     "spat_logic": scores.spat_logic,
                     "reasoning": scores.reasoning})
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("".join(
        json.dumps(r, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"
        for r in rows), encoding="utf-8")
    if parsed:
        agg = aggregate_mdvl(parsed, failed)
        print(f"mdvl ingest: {agg.evaluated} parsed, {agg.failed} failed; means "
              f"scene={agg.scene_logic:.2f} casting={agg.casting_logic:.2f} "
              f"act={agg.act_logic:.2f} spat={agg.spat_logic:.2f} -> {out_path}")
    else:
        print(f"mdvl ingest: 0 parsed, {failed} failed -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--bundle-dir", dest="bundle_dir", type=Path, default=None)
    p.add_argument("--gallery-bundle", dest="gallery_bundle", type=Path, default=None)
    p.add_argument("--ref-coherence-bundle", dest="ref_coherence_bundle",
                   type=Path, default=None)
    p.add_argument("--pairs", type=Path, default=None)
    p.add_argument("--tracks", type=Path, default=None)
    p.add_argument("--mdvl-scores", dest="mdvl_scores", type=Path, default=None)
    p.add_argument("--output-dir", dest="output_dir", type=Path, default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--method", type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cinebench",
        description="Dual-track multi-shot video benchmark and curation engine")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("validate", "curate", "report"):
        p = sub.add_parser(name)
        _add_common(p)

    p = sub.add_parser("score")
    _add_common(p)
    p.add_argument("--track", type=int, choices=(1, 2), required=True)

    p = sub.add_parser("caption")
    cap_sub = p.add_subparsers(dest="caption_command", required=True)
    for name in ("build-stage1", "build-stage2"):
        cp = cap_sub.add_parser(name)
        _add_common(cp)
        cp.add_argument("--out", type=Path, required=True)
    cp = cap_sub.add_parser("ingest")
    _add_common(cp)
    cp.add_argument("--requests", type=Path, required=True)
    cp.add_argument("--responses", type=Path, required=True)
    cp.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("mdvl")
    mdvl_sub = p.add_subparsers(dest="mdvl_command", required=True)
    mp = mdvl_sub.add_parser("build")
    _add_common(mp)
    mp.add_argument("--out", type=Path, required=True)
    mp = mdvl_sub.add_parser("ingest")
    _add_common(mp)
    mp.add_argument("--responses", type=Path, required=True)
    mp.add_argument("--out", type=Path, required=True)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; normalize to the documented code
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        cfg = _load_config(args)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "curate":
            return cmd_curate(cfg)
        if args.command == "score":
            return cmd_score(cfg)
        if args.command == "report":
            return cmd_report(cfg)
        if args.command == "caption":
            if args.caption_command == "build-stage1":
                return cmd_caption_build_stage1(cfg, args.out)
            if args.caption_command == "build-stage2":
                return cmd_caption_build_stage2(cfg, args.out)
            return cmd_caption_ingest(cfg, args.requests, args.responses, args.out)
        if args.command == "mdvl":
            if args.mdvl_command == "build":
                return cmd_mdvl_build(cfg, args.out)
            return cmd_mdvl_ingest(cfg, args.responses, args.out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CinebenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    raise AssertionError("unreachable")


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
