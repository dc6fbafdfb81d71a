#!/usr/bin/env python3
"""Build a synthetic desk-scale corpus for trying out the engine offline.

Usage:
    python3 scripts/make_stub_corpus.py out/corpus [--sequences 20] [--seed 7]
"""

import argparse
from pathlib import Path

from cinebench.stubcorpus import build_stub_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", type=Path)
    parser.add_argument("--sequences", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    paths = build_stub_corpus(args.root, args.sequences, args.seed)
    for name, path in paths.items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
