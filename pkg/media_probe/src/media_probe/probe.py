"""Probing encoded tracks: keyframe timestamps, packet accounting, stream
facts. The parsing/cutting arithmetic is kept in pure functions so it can
be tested without real media."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .tools import ToolError, ffprobe_json

# keyframes closer than this are considered the same instant across tracks
KEYFRAME_MATCH_TOLERANCE_S = 0.005


@dataclass(frozen=True)
class Packet:
    pts: float
    size: int


@dataclass(frozen=True)
class StreamInfo:
    duration: float
    fps: float


def probe_stream(path: str | Path) -> StreamInfo:
    doc = ffprobe_json(["-select_streams", "v:0", "-show_streams", str(path)])
    streams = doc.get("streams") or []
    if not streams:
        raise ToolError(f"{path}: no video stream")
    s = streams[0]
    num, _, den = (s.get("avg_frame_rate") or "0/1").partition("/")
    fps = float(num) / float(den or 1) if float(den or 1) else 0.0
    duration = float(s.get("duration") or 0.0)
    if duration <= 0:
        fmt = ffprobe_json(["-show_format", str(path)]).get("format", {})
        duration = float(fmt.get("duration") or 0.0)
    return StreamInfo(duration=duration, fps=fps)


def probe_keyframes(path: str | Path) -> list[float]:
    """Keyframe timestamps of the first video stream, strictly increasing
    and starting at 0."""
    doc = ffprobe_json(["-select_streams", "v:0", "-skip_frame", "nokey",
                        "-show_entries", "frame=pts_time", "-show_frames", str(path)])
    frames = doc.get("frames")
    if not frames:
        raise ToolError(f"{path}: could not decode any keyframes")
    stamps = sorted(float(f["pts_time"]) for f in frames if "pts_time" in f)
    if not stamps:
        raise ToolError(f"{path}: keyframes carry no timestamps")
    # normalize container start offsets so fragment 0 begins at 0
    first = stamps[0]
    return [round(t - first, 6) for t in stamps]


def probe_packets(path: str | Path) -> list[Packet]:
    """Video packets (what a client would download), in presentation order."""
    doc = ffprobe_json(["-select_streams", "v:0",
                        "-show_entries", "packet=pts_time,size", "-show_packets", str(path)])
    packets = []
    for p in doc.get("packets", []):
        if "size" not in p:
            continue
        pts = float(p.get("pts_time", p.get("dts_time", 0.0)) or 0.0)
        packets.append(Packet(pts=pts, size=int(p["size"])))
    if not packets:
        raise ToolError(f"{path}: no video packets found")
    packets.sort(key=lambda p: p.pts)
    base = packets[0].pts
    return [Packet(pts=round(p.pts - base, 6), size=p.size) for p in packets]


# ---------------------------------------------------------------------------
# Pure arithmetic
# ---------------------------------------------------------------------------

def fragment_spans(keyframes: list[float], duration: float) -> list[tuple[float, float]]:
    """(start, end) spans between successive keyframes, last one closed by
    the stream duration."""
    if not keyframes:
        raise ValueError("no keyframes")
    bounds = list(keyframes) + [duration]
    spans = []
    for a, b in zip(bounds, bounds[1:]):
        if b - a <= 1e-6:
            continue
        spans.append((a, b))
    return spans


def bytes_per_span(packets: list[Packet], spans: list[tuple[float, float]]) -> list[int]:
    """Sum container packet sizes per fragment span (packet owned by the
    span containing its pts)."""
    totals = [0] * len(spans)
    si = 0
    for p in sorted(packets, key=lambda p: p.pts):
        while si + 1 < len(spans) and p.pts >= spans[si][1] - 1e-9:
            si += 1
        totals[si] += p.size
    return totals


def check_aligned_keyframes(reference: list[float], others: dict[str, list[float]],
                            tolerance: float = KEYFRAME_MATCH_TOLERANCE_S) -> None:
    """Every track must carry exactly the reference keyframes (boundary
    alignment); raises listing the offending timestamps."""
    for name, stamps in others.items():
        if len(stamps) != len(reference):
            raise ToolError(
                f"keyframe mismatch in {name}: {len(stamps)} keyframes vs "
                f"{len(reference)} in the reference track")
        bad = [(r, s) for r, s in zip(reference, stamps) if abs(r - s) > tolerance]
        if bad:
            listed = ", ".join(f"{r:.3f}s vs {s:.3f}s" for r, s in bad[:8])
            raise ToolError(f"keyframe mismatch in {name}: {listed}"
                            + (" ..." if len(bad) > 8 else ""))


def per_second_means(frame_scores: list[float], fps: float, duration: float) -> list[float]:
    """Collapse per-frame scores into one mean per playback second."""
    n_sec = max(1, math.ceil(duration - 1e-9))
    buckets: list[list[float]] = [[] for _ in range(n_sec)]
    for i, score in enumerate(frame_scores):
        sec = min(int(i / fps), n_sec - 1) if fps > 0 else 0
        buckets[sec].append(score)
    out = []
    last = 0.0
    for b in buckets:
        if b:
            last = sum(b) / len(b)
        out.append(min(max(last, 0.0), 100.0))
    return out
