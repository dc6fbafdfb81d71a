"""cinextract CLI: extract / chat / fetch."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cinebench.manifest import parse_manifest

from .chat import chat_complete
from .config import SHOT_FAMILIES, ExtractorConfig
from .extract import DecodeError, extract_bundle
from .fetch import fetch_and_trim, http_resolver, local_resolver

logger = logging.getLogger(__name__)


def cmd_extract(args: argparse.Namespace) -> int:
    config = ExtractorConfig(families=tuple(args.families.split(","))
                             if args.families else SHOT_FAMILIES,
                             clips_dir=args.clips_dir)
    sequences, issues = parse_manifest(
        Path(args.manifest).read_text(encoding="utf-8"))
    for issue in issues:
        logger.warning("manifest line %d: %s", issue.line, issue.message)
    failures = 0
    for seq in sequences:
        for shot in seq.shots:
            clip = Path(args.clips_dir) / f"{shot.clip_id}.mp4"
            if not clip.exists():
                logger.warning("missing clip file for %s", shot.clip_id)
                failures += 1
                continue
            try:
                extract_bundle(clip, config, args.out_dir,
                               clip_id=shot.clip_id,
                               caption=shot.caption_rewritten or shot.caption)
            except DecodeError as exc:
                logger.error("%s", exc)
                failures += 1
        seq_clip = Path(args.clips_dir) / f"{seq.sequence_id}.mp4"
        if seq_clip.exists():
            extract_bundle(seq_clip, config, args.out_dir,
                           clip_id=seq.sequence_id, kind="sequence")
    print(f"extract: {len(sequences)} sequences processed, {failures} failures "
          f"-> {args.out_dir}")
    return 0 if failures == 0 else 1


def cmd_chat(args: argparse.Namespace) -> int:
    config = ExtractorConfig(clips_dir=args.clips_dir,
                             max_retries=args.max_retries)
    failed = chat_complete(args.requests, args.out, config)
    print(f"chat: responses -> {args.out} ({failed} failed)")
    return 0


def cmd_fetch(args: argparse.Namespace) -> int:
    sequences, _ = parse_manifest(Path(args.manifest).read_text(encoding="utf-8"))
    if args.source_url:
        resolver = http_resolver(args.source_url, Path(args.cache_dir or
                                                       args.clips_dir / "_cache"))
    else:
        resolver = local_resolver(args.source_dir)
    outcome = fetch_and_trim(sequences, resolver, args.clips_dir)
    print(f"fetch: {len(outcome.fetched)} fetched, {len(outcome.skipped)} "
          f"skipped, {len(outcome.unavailable)} unavailable -> {args.clips_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cinextract")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--clips-dir", dest="clips_dir", type=Path, required=True)
    p.add_argument("--out-dir", dest="out_dir", type=Path, required=True)
    p.add_argument("--families", type=str, default=None,
                   help="comma-separated family subset")

    p = sub.add_parser("chat")
    p.add_argument("--requests", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--clips-dir", dest="clips_dir", type=Path, default=None)
    p.add_argument("--max-retries", dest="max_retries", type=int, default=3)

    p = sub.add_parser("fetch")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--clips-dir", dest="clips_dir", type=Path, required=True)
    p.add_argument("--source-dir", dest="source_dir", type=Path, default=None)
    p.add_argument("--source-url", dest="source_url", type=str, default=None)
    p.add_argument("--cache-dir", dest="cache_dir", type=Path, default=None)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "extract":
        return cmd_extract(args)
    if args.command == "chat":
        return cmd_chat(args)
    return cmd_fetch(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
