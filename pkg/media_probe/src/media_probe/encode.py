"""Two-pass VBR encoding of a bitrate ladder, with shared keyframes.

The top track is encoded first with a maximum keyframe interval (the
encoder may insert extra keyframes at scene changes); its probed keyframe
timestamps are then forced onto every other track with scene-cut insertion
disabled, so all tracks share boundaries exactly. Instantaneous bitrate is
capped at a multiple of the track target, and every encode is two-pass.

Encoder flags beyond these constraints are defaults, not normative.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .probe import probe_keyframes
from .tools import ffmpeg

DEFAULT_MAX_BITRATE_FACTOR = 1.75
DEFAULT_MAX_KEYFRAME_INTERVAL_S = 5.0

# libvmaf model selection per viewing model; the mobile model is the HD
# model with the viewing-distance transform enabled
VMAF_MODEL_ARGS = {
    "mobile": "version=vmaf_v0.6.1:enable_transform=true",
    "hdtv": "version=vmaf_v0.6.1",
    "uhd4k": "version=vmaf_4k_v0.6.1",
}
# canonical viewing resolution each model expects
VMAF_MODEL_SCALE = {
    "mobile": (1920, 1080),
    "hdtv": (1920, 1080),
    "uhd4k": (3840, 2160),
}


@dataclass(frozen=True)
class LadderRung:
    id: int
    kbps: float
    height: int  # encode resolution (width derived, 16:9)
    label: str = ""


@dataclass(frozen=True)
class EncodeJob:
    source: Path
    ladder: tuple[LadderRung, ...]
    workspace: Path
    max_bitrate_factor: float = DEFAULT_MAX_BITRATE_FACTOR
    max_keyframe_interval_s: float = DEFAULT_MAX_KEYFRAME_INTERVAL_S
    fps: float = 30.0
    video_id: str = ""

    def __post_init__(self) -> None:
        if self.max_bitrate_factor <= 1.0:
            raise ValueError("max bitrate factor must exceed 1")
        if self.max_keyframe_interval_s <= 0:
            raise ValueError("keyframe interval must be positive")
        if not self.ladder:
            raise ValueError("empty ladder")

    def track_path(self, rung: LadderRung) -> Path:
        return self.workspace / f"track_{rung.id}_{int(rung.kbps)}k.mp4"


def _rate_args(kbps: float, factor: float) -> list[str]:
    maxrate = int(kbps * factor)
    return ["-b:v", f"{int(kbps)}k", "-maxrate", f"{maxrate}k", "-bufsize", f"{2 * maxrate}k"]


def _two_pass(src: Path, out: Path, vf: str, rate: list[str], keyframes: list[str],
              passlog: Path) -> None:
    common = ["-i", str(src), "-an", "-c:v", "libx264", "-vf", vf, *rate, *keyframes,
              "-passlogfile", str(passlog)]
    ffmpeg([*common, "-pass", "1", "-f", "null", "/dev/null"])
    ffmpeg([*common, "-pass", "2", str(out)])


def encode_top_track(job: EncodeJob) -> Path:
    """Encode the highest rung with a bounded keyframe interval; scene-cut
    keyframes remain enabled, producing the natural fragment lattice."""
    rung = job.ladder[-1]
    out = job.track_path(rung)
    keyint = max(1, round(job.max_keyframe_interval_s * job.fps))
    keyframes = ["-x264-params", f"keyint={keyint}"]
    _two_pass(job.source, out, f"scale=-2:{rung.height}",
              _rate_args(rung.kbps, job.max_bitrate_factor), keyframes,
              job.workspace / f"pass_{rung.id}")
    return out


def encode_aligned_track(job: EncodeJob, rung: LadderRung, timestamps: list[float]) -> Path:
    """Encode a lower rung forcing exactly the reference keyframes."""
    out = job.track_path(rung)
    forced = ",".join(f"{t:.6f}" for t in timestamps)
    keyframes = ["-force_key_frames", forced, "-x264-params",
                 "scenecut=0:keyint=999999"]
    _two_pass(job.source, out, f"scale=-2:{rung.height}",
              _rate_args(rung.kbps, job.max_bitrate_factor), keyframes,
              job.workspace / f"pass_{rung.id}")
    return out


def encode_ladder(job: EncodeJob) -> dict[int, Path]:
    """Encode every rung; returns track id -> file. The top track defines
    the keyframe lattice, the rest are forced onto it."""
    job.workspace.mkdir(parents=True, exist_ok=True)
    top = encode_top_track(job)
    timestamps = probe_keyframes(top)
    paths = {job.ladder[-1].id: top}
    for rung in job.ladder[:-1]:
        paths[rung.id] = encode_aligned_track(job, rung, timestamps)
    return paths


def encode_range(job: EncodeJob, start: float, end: float, kbps: float,
                 height: int, out: Path) -> Path:
    """Standalone two-pass encode of one time range at one average bitrate
    (the augmentation encode)."""
    if end <= start:
        raise ValueError(f"empty encode range [{start}, {end})")
    rate = _rate_args(kbps, job.max_bitrate_factor)
    common = ["-ss", f"{start:.6f}", "-to", f"{end:.6f}", "-i", str(job.source),
              "-an", "-c:v", "libx264", "-vf", f"scale=-2:{height}", *rate,
              "-force_key_frames", "0",
              "-passlogfile", str(out.with_suffix(".pass"))]
    ffmpeg([*common, "-pass", "1", "-f", "null", "/dev/null"])
    ffmpeg([*common, "-pass", "2", str(out)])
    return out


def compute_vmaf_series(distorted: Path, reference: Path, model: str,
                        log_path: Path) -> list[float]:
    """Per-frame VMAF of ``distorted`` against ``reference``, both upscaled
    to the model's canonical viewing resolution."""
    w, h = VMAF_MODEL_SCALE[model]
    graph = (f"[0:v]scale={w}:{h}:flags=bicubic,setpts=PTS-STARTPTS[d];"
             f"[1:v]scale={w}:{h}:flags=bicubic,setpts=PTS-STARTPTS[r];"
             f"[d][r]libvmaf=model={VMAF_MODEL_ARGS[model]}:"
             f"log_fmt=json:log_path={log_path}")
    ffmpeg(["-i", str(distorted), "-i", str(reference), "-lavfi", graph, "-f", "null", "/dev/null"])
    doc = json.loads(Path(log_path).read_text())
    return [float(f["metrics"]["vmaf"]) for f in doc.get("frames", [])]
