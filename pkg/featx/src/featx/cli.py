"""Batch extraction entry point.

featx 'clips/*.wav' --out-dir feats/
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from fractions import Fraction

from .extract import BUILTIN_TINY, ExtractionJob, FeatxError, extract


def _expand(patterns) -> list[str]:
    paths: set[str] = set()
    for pattern in patterns:
        hits = glob.glob(pattern)
        if hits:
            paths.update(hits)
        else:
            paths.add(pattern)
    return sorted(paths)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="featx",
        description="Extract FLXF feature pairs from 16 kHz mono WAV files.",
    )
    parser.add_argument("inputs", nargs="+", help="WAV paths or glob patterns")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--model", default=BUILTIN_TINY)
    parser.add_argument("--rate", default="25/2", help="target frame rate in Hz, accepts num/den")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        rate = Fraction(args.rate)
    except (ValueError, ZeroDivisionError):
        parser.error(f"bad --rate value {args.rate!r}")

    paths = _expand(args.inputs)
    try:
        job = ExtractionJob(tuple(paths), args.out_dir, args.model, rate, args.seed)
        pairs = extract(job)
    except (FeatxError, OSError) as exc:
        print(f"featx: {exc}", file=sys.stderr)
        return 1
    for sem_path, ac_path in pairs:
        print(json.dumps({"semantic": str(sem_path), "acoustic": str(ac_path)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
