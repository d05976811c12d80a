"""media-probe CLI: probe, encode-ladder, build-metadata, encode-aug.

Requires ffmpeg/ffprobe with libx264 and libvmaf on PATH (override with
MEDIA_PROBE_FFMPEG / MEDIA_PROBE_FFPROBE).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .encode import (DEFAULT_MAX_BITRATE_FACTOR, DEFAULT_MAX_KEYFRAME_INTERVAL_S,
                     EncodeJob, LadderRung, encode_ladder)
from .metadata import build_metadata, encode_augmentation, save_metadata, validate_with_primary
from .probe import probe_keyframes, probe_stream
from .tools import ToolError

DEFAULT_LADDER = ((0, 400, 240), (1, 800, 360), (2, 1500, 480), (3, 3000, 720), (4, 6000, 1080))


def _ladder(path: str | None) -> tuple[LadderRung, ...]:
    if path is None:
        return tuple(LadderRung(id=i, kbps=float(k), height=h, label=f"{h}p")
                     for i, k, h in DEFAULT_LADDER)
    doc = json.loads(Path(path).read_text())
    entries = doc["ladder"] if isinstance(doc, dict) else doc
    return tuple(LadderRung(id=int(e["id"]), kbps=float(e["kbps"]),
                            height=int(e.get("height", 720)), label=str(e.get("label", "")))
                 for e in entries)


def _job(args) -> EncodeJob:
    info = probe_stream(args.source)
    return EncodeJob(source=Path(args.source), ladder=_ladder(args.ladder),
                     workspace=Path(args.workspace),
                     max_bitrate_factor=args.max_bitrate_factor,
                     max_keyframe_interval_s=args.keyframe_interval,
                     fps=info.fps or 30.0,
                     video_id=args.video_id or Path(args.source).stem)


def cmd_probe(args) -> int:
    stamps = probe_keyframes(args.source)
    info = probe_stream(args.source)
    print(json.dumps({"keyframes": stamps, "duration": info.duration, "fps": info.fps}))
    return 0


def cmd_encode_ladder(args) -> int:
    paths = encode_ladder(_job(args))
    for tid in sorted(paths):
        print(f"track {tid}: {paths[tid]}")
    return 0


def cmd_build_metadata(args) -> int:
    job = _job(args)
    doc = build_metadata(job)
    out = Path(args.out)
    save_metadata(doc, out)
    if not args.no_validate:
        validate_with_primary(out)
    print(f"wrote {out}: {len(doc['fragments'])} fragments, {len(doc['ladder'])} tracks")
    return 0


def cmd_encode_aug(args) -> int:
    job = _job(args)
    record = encode_augmentation(job, args.start, args.end, args.kbps,
                                 (args.between_low, args.between_low + 1))
    Path(args.out).write_text(json.dumps(record) + "\n")
    print(f"wrote {args.out}: {record['bytes']} bytes at {args.kbps} kbps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="media-probe")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probe", help="keyframe timestamps and stream facts")
    p.add_argument("source")
    p.set_defaults(func=cmd_probe)

    def common(p):
        p.add_argument("source")
        p.add_argument("--workspace", default="probe_work")
        p.add_argument("--ladder", help="ladder JSON with id/kbps/height entries")
        p.add_argument("--max-bitrate-factor", type=float, default=DEFAULT_MAX_BITRATE_FACTOR)
        p.add_argument("--keyframe-interval", type=float,
                       default=DEFAULT_MAX_KEYFRAME_INTERVAL_S)
        p.add_argument("--video-id")

    p = sub.add_parser("encode-ladder", help="two-pass encode every rung with shared keyframes")
    common(p)
    p.set_defaults(func=cmd_encode_ladder)

    p = sub.add_parser("build-metadata", help="encode, measure, and emit metadata JSON")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-validate", action="store_true",
                   help="skip the abrchunk validate-only check")
    p.set_defaults(func=cmd_build_metadata)

    p = sub.add_parser("encode-aug", help="standalone encode of one range at one bitrate")
    common(p)
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--end", type=float, required=True)
    p.add_argument("--kbps", type=float, required=True)
    p.add_argument("--between-low", type=int, required=True,
                   help="lower track id of the gap the option sits in")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode_aug)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ToolError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
