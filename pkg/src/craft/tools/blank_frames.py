"""Stand-in frame extractor for fixture corpora and tests.

Fills the same command contract as a real extractor (ffmpeg and friends):
given a media file, a time window, a sampling rate, and an output directory,
write one file per sampled frame named ``frame_<6-digit index>.jpg``. The
files are placeholders; nothing in the engine reads pixels.

Usage:
    python -m craft.tools.blank_frames --input V --start S --end E --fps R --outdir D
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input", required=True)
    parser.add_argument("--start", type=float, required=True)
    parser.add_argument("--end", type=float, required=True)
    parser.add_argument("--fps", type=float, required=True)
    parser.add_argument("--outdir", required=True)
    args = parser.parse_args(argv)

    if not Path(args.input).exists():
        print(f"input media not found: {args.input}", file=sys.stderr)
        return 1
    if args.fps <= 0 or args.end <= args.start:
        print("invalid window or rate", file=sys.stderr)
        return 1

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    count = math.ceil((args.end - args.start) * args.fps)
    for k in range(count):
        if args.start + k / args.fps >= args.end:
            break
        (outdir / f"frame_{k:06d}.jpg").write_bytes(b"\xff\xd8\xff\xd9")  # minimal JPEG shell
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
