"""Assemble playback metadata from encoded tracks.

Fragments are cut at the top track's keyframes; every track contributes
its container-level packet bytes per fragment and a per-second VMAF
series under the three viewing models. The result is the exact JSON
schema the chunking toolkit consumes, and can be checked against its
validator via ``abrchunk segment --validate-only``.
"""

from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

from .encode import EncodeJob, VMAF_MODEL_ARGS, compute_vmaf_series, encode_ladder, encode_range
from .probe import (bytes_per_span, check_aligned_keyframes, fragment_spans,
                    per_second_means, probe_keyframes, probe_packets, probe_stream)
from .tools import ToolError

META_SCHEMA = "abrchunk/meta/1"


def build_metadata(job: EncodeJob, track_paths: dict[int, Path] | None = None) -> dict:
    """Encode (unless given) and measure the ladder into metadata JSON."""
    if track_paths is None:
        track_paths = encode_ladder(job)
    top_id = job.ladder[-1].id
    reference = track_paths[top_id]

    keyframes = probe_keyframes(reference)
    check_aligned_keyframes(
        keyframes,
        {str(track_paths[r.id]): probe_keyframes(track_paths[r.id])
         for r in job.ladder if r.id != top_id})
    info = probe_stream(reference)
    spans = fragment_spans(keyframes, info.duration)

    per_track_bytes: dict[int, list[int]] = {}
    per_track_vmaf: dict[int, dict[str, list[float]]] = {}
    for rung in job.ladder:
        path = track_paths[rung.id]
        per_track_bytes[rung.id] = bytes_per_span(probe_packets(path), spans)
        per_track_vmaf[rung.id] = {}
        for model in VMAF_MODEL_ARGS:
            log = job.workspace / f"vmaf_{rung.id}_{model}.json"
            frames = compute_vmaf_series(path, job.source, model, log)
            per_track_vmaf[rung.id][model] = per_second_means(frames, info.fps, info.duration)

    fragments = []
    for fi, (start, end) in enumerate(spans):
        dur = round(end - start, 6)
        n_sec = math.ceil(dur - 1e-9)
        tracks = []
        for rung in job.ladder:
            series = {}
            for model, whole in per_track_vmaf[rung.id].items():
                first = math.floor(start)
                chunk = whole[first:first + n_sec]
                if len(chunk) < n_sec:  # stream tail rounding
                    chunk = chunk + [chunk[-1]] * (n_sec - len(chunk))
                series[model] = [round(v, 4) for v in chunk]
            tracks.append({"bytes": per_track_bytes[rung.id][fi], "vmaf": series})
        fragments.append({"duration_s": dur, "tracks": tracks})

    return {
        "schema": META_SCHEMA,
        "video_id": job.video_id or job.source.stem,
        "fps": info.fps,
        "ladder": [{"id": r.id, "kbps": r.kbps, "label": r.label} for r in job.ladder],
        "fragments": fragments,
    }


def encode_augmentation(job: EncodeJob, start: float, end: float, kbps: float,
                        between: tuple[int, int]) -> dict:
    """Standalone encode of one segment range at one average bitrate, with
    measured bytes and per-second VMAF (the primary's augmentation record)."""
    if end <= start:
        raise ValueError("zero-length range")
    job.workspace.mkdir(parents=True, exist_ok=True)
    lo, hi = between
    height = next(r.height for r in job.ladder if r.id == hi)
    out = job.workspace / f"aug_{int(start * 1000)}_{int(kbps)}k.mp4"
    encode_range(job, start, end, kbps, height, out)
    nbytes = sum(p.size for p in probe_packets(out))
    info = probe_stream(out)
    vmaf = {}
    for model in VMAF_MODEL_ARGS:
        log = job.workspace / f"aug_vmaf_{int(start * 1000)}_{model}.json"
        frames = compute_vmaf_series(out, _clip_reference(job, start, end), model, log)
        vmaf[model] = [round(v, 4) for v in per_second_means(frames, info.fps, end - start)]
    return {"kbps": kbps, "bytes": nbytes, "vmaf": vmaf, "between": [lo, hi]}


def _clip_reference(job: EncodeJob, start: float, end: float) -> Path:
    """Cut the matching source range so the quality comparison aligns."""
    from .tools import ffmpeg
    out = job.workspace / f"ref_{int(start * 1000)}_{int(end * 1000)}.mp4"
    if not out.exists():
        ffmpeg(["-ss", f"{start:.6f}", "-to", f"{end:.6f}", "-i", str(job.source),
                "-an", "-c:v", "libx264", "-crf", "10", str(out)])
    return out


def validate_with_primary(metadata_path: Path) -> None:
    """Run the chunking toolkit's validator on a metadata file."""
    proc = subprocess.run(
        [sys.executable, "-m", "abrchunk.cli", "segment", "--video", str(metadata_path),
         "--validate-only"],
        capture_output=True, text=True)
    if proc.returncode != 0:
        raise ToolError(f"primary validation failed: {proc.stderr.strip()}")


def save_metadata(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, separators=(",", ":")) + "\n")
