"""Deterministic synthetic video generator for tests and experiments.

Generates keyframe-delimited fragment metadata whose byte counts track a
configurable complexity curve: complex spans cost more bytes at every rung
of the ladder and score lower VMAF at a fixed bitrate. The quality model is
a fixture choice, not a claim about real encoders:

    vmaf = clamp(100 * (1 - c_eff * exp(-r / ref(c))), 5, 100)

with ``r`` the fragment's instantaneous bitrate, ``ref(c)`` a
complexity-scaled reference bitrate, and ``c_eff`` a complexity-scaled
ceiling. It preserves the two monotonicities everything downstream relies
on: more bitrate -> higher VMAF, more complexity -> lower VMAF and more
bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .media import Fragment, Track, TrackData, VideoMeta, VMAF_MODELS, DEFAULT_LADDER_KBPS

# Per-track instantaneous bitrate is capped at this multiple of the track's
# target average, mirroring common encoder guidance for VBR ladders.
MAX_BITRATE_FACTOR = 1.75

# Per-model offsets: the mobile model is the most permissive (small screens
# hide artifacts), the 4K model the harshest.
_MODEL_SHIFT = {"mobile": 6.0, "hdtv": 0.0, "uhd4k": -5.0}


@dataclass(frozen=True)
class SynthProfile:
    """Shape of a synthetic video.

    ``complexity`` is a piecewise-constant curve given as (start_time,
    value) breakpoints with values in [0, 1]; ``keyframe_interval`` is
    either a fixed spacing in seconds or a (min, max) range sampled
    uniformly per fragment.
    """

    duration_s: float
    keyframe_interval: float | tuple[float, float] = 2.0
    complexity: tuple[tuple[float, float], ...] = ((0.0, 0.5),)

    def complexity_at(self, t: float) -> float:
        c = self.complexity[0][1]
        for start, value in self.complexity:
            if t >= start:
                c = value
            else:
                break
        return float(min(max(c, 0.0), 1.0))


def default_ladder() -> tuple[Track, ...]:
    return tuple(Track(id=i, kbps=float(kbps), label=label)
                 for i, (kbps, label) in enumerate(DEFAULT_LADDER_KBPS))


def _quality(bitrate_kbps: float, complexity: float, model: str) -> float:
    ref = 800.0 * (0.3 + 2.2 * complexity)
    ceiling = 0.55 + 0.45 * complexity
    base = 100.0 * (1.0 - ceiling * math.exp(-bitrate_kbps / ref))
    return min(max(base + _MODEL_SHIFT[model], 5.0), 99.0)


def synth_video(profile: SynthProfile, ladder: tuple[Track, ...] | None = None,
                seed: int = 0, video_id: str | None = None) -> VideoMeta:
    """Generate a video deterministically from (profile, ladder, seed)."""
    if ladder is None:
        ladder = default_ladder()
    if not ladder:
        raise ValueError("empty ladder")
    if profile.duration_s <= 0:
        raise ValueError(f"non-positive duration {profile.duration_s}")

    rng = np.random.default_rng(seed)

    # 1) fragment durations (all rng draws happen in a fixed order)
    durations: list[float] = []
    remaining = profile.duration_s
    while remaining > 1e-9:
        if isinstance(profile.keyframe_interval, tuple):
            lo, hi = profile.keyframe_interval
            d = round(float(rng.uniform(lo, hi)), 2)
        else:
            d = float(profile.keyframe_interval)
        if remaining - d < 0.25:
            d = remaining  # fold the sub-minimum tail into the final fragment
        durations.append(d)
        remaining -= d

    starts = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
    complexities = [profile.complexity_at(s + d / 2) for s, d in zip(starts, durations)]

    # 2) byte scale: complexity-proportional, normalized so each track's
    # video-wide average instantaneous bitrate sits near its target
    raw = np.array([0.4 + 1.6 * c for c in complexities])
    mean_scale = float(np.average(raw, weights=durations))
    jitter = rng.uniform(0.97, 1.03, size=(len(durations), len(ladder)))
    phase = float(rng.uniform(0.0, 2.0 * math.pi))

    fragments = []
    for i, (start, dur, c) in enumerate(zip(starts, durations, complexities)):
        tracks = []
        for j, track in enumerate(ladder):
            scale = min(raw[i] / mean_scale * jitter[i, j], MAX_BITRATE_FACTOR)
            nbytes = max(1, round(track.kbps * 125.0 * dur * scale))
            bitrate = 8.0 * nbytes / 1000.0 / dur
            n_sec = math.ceil(dur)
            vmaf: dict[str, tuple[float, ...]] = {}
            for model in VMAF_MODELS:
                base = _quality(bitrate, c, model)
                amp = 0.3 + 2.0 * (1.0 - base / 100.0)
                series = tuple(
                    min(max(base + amp * math.sin(2.0 * math.pi * (start + s) / 7.3 + phase), 5.0), 100.0)
                    for s in range(n_sec)
                )
                vmaf[model] = series
            tracks.append(TrackData(bytes=nbytes, vmaf=vmaf))
        fragments.append(Fragment(index=i, duration=float(dur), tracks=tuple(tracks)))

    return VideoMeta(
        video_id=video_id if video_id is not None else f"synth-{seed}",
        fps=30.0,
        ladder=tuple(ladder),
        fragments=tuple(fragments),
    )
