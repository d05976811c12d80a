"""Video metadata model: tracks, keyframe-delimited fragments, segments,
and per-segment bitrate augmentations.

A video is an ordered list of fragments (the spans between successive
keyframes). Every fragment carries, for every track of the bitrate ladder,
its encoded byte count and per-second VMAF series under three viewing
models. Segmentations partition fragments into contiguous segments;
augmentations add a single extra bitrate option for one segment, slotted
between two adjacent ladder tracks.

All types are immutable after construction and safe to share across
threads/processes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

VMAF_MODELS = ("mobile", "hdtv", "uhd4k")

META_SCHEMA = "abrchunk/meta/1"
CHUNKING_SCHEMA = "abrchunk/chunking/1"

# Industry-style default ladder used by fixtures and the CLI when no ladder
# file is given (kbps targets for common output resolutions).
DEFAULT_LADDER_KBPS = ((400, "240p"), (800, "360p"), (1500, "480p"),
                       (3000, "720p"), (6000, "1080p"))


class ParseError(ValueError):
    """Raised when an input file is not structurally readable."""


class ValidationError(ValueError):
    """Raised when parsed data violates a model invariant."""


@dataclass(frozen=True)
class Track:
    """One rung of the bitrate ladder."""

    id: int
    kbps: float  # target average bitrate
    label: str = ""


@dataclass(frozen=True)
class TrackData:
    """Per-track payload of one fragment."""

    bytes: int
    vmaf: Mapping[str, tuple[float, ...]]  # model name -> per-second series


@dataclass(frozen=True)
class Fragment:
    """The video span between two successive keyframes.

    ``tracks`` is aligned with the ladder order; every fragment starts at a
    keyframe by construction, so any fragment boundary is a legal segment
    boundary on every track.
    """

    index: int
    duration: float  # seconds
    tracks: tuple[TrackData, ...]


@dataclass(frozen=True)
class VideoMeta:
    """A full video: ladder plus ordered fragments."""

    video_id: str
    fps: float
    ladder: tuple[Track, ...]
    fragments: tuple[Fragment, ...]

    @property
    def total_duration(self) -> float:
        return sum(f.duration for f in self.fragments)

    @property
    def n_fragments(self) -> int:
        return len(self.fragments)

    @property
    def n_tracks(self) -> int:
        return len(self.ladder)


@dataclass(frozen=True)
class Segment:
    """A contiguous run of fragments fetched as one unit (inclusive ends)."""

    first: int
    last: int

    def __post_init__(self) -> None:
        if self.first > self.last:
            raise ValidationError(f"segment first {self.first} > last {self.last}")


@dataclass(frozen=True)
class Augmentation:
    """An extra bitrate option for a single segment.

    ``between`` names the adjacent ladder track ids whose instantaneous
    bitrates (for this segment) bracket ``kbps``.
    """

    segment_index: int
    kbps: float
    bytes: int
    vmaf: Mapping[str, tuple[float, ...]]
    between: tuple[int, int]


@dataclass(frozen=True)
class Chunking:
    """A segmentation plus its augmentations: the primary output artifact."""

    segments: tuple[Segment, ...]
    augmentations: tuple[Augmentation, ...] = ()

    def augmentations_for(self, segment_index: int) -> tuple[Augmentation, ...]:
        return tuple(a for a in self.augmentations if a.segment_index == segment_index)


@dataclass(frozen=True)
class SegmentStats:
    duration: float
    bytes: int
    bitrate_kbps: float
    mean_vmaf: Mapping[str, float]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _second_weights(duration: float) -> np.ndarray:
    """Weight of each per-second sample: 1 s each, the last clipped to the
    fragment's fractional remainder."""
    n = math.ceil(duration)
    w = np.minimum(1.0, duration - np.arange(n))
    return w


def validate_video(video: VideoMeta) -> None:
    """Check every structural invariant; raise ValidationError naming the
    offending track/fragment."""
    if not video.ladder:
        raise ValidationError("empty ladder")
    for j, t in enumerate(video.ladder):
        if t.id != j:
            raise ValidationError(f"ladder ids not contiguous from 0 (position {j} has id {t.id})")
    for a, b in zip(video.ladder, video.ladder[1:]):
        if not b.kbps > a.kbps:
            raise ValidationError(
                f"ladder not increasing: track {b.id} kbps {b.kbps} <= track {a.id} kbps {a.kbps}")
    if video.fps <= 0:
        raise ValidationError(f"fps must be positive, got {video.fps}")
    if not video.fragments:
        raise ValidationError("video has no fragments")
    for i, frag in enumerate(video.fragments):
        where = f"fragment {i}"
        if frag.index != i:
            raise ValidationError(f"{where}: index {frag.index} not contiguous")
        if not frag.duration > 0:
            raise ValidationError(f"{where}: non-positive duration {frag.duration}")
        if len(frag.tracks) != len(video.ladder):
            raise ValidationError(
                f"{where}: has {len(frag.tracks)} track entries, ladder has {len(video.ladder)} "
                f"(missing entry for track {min(len(frag.tracks), len(video.ladder) - 1)})")
        n_sec = math.ceil(frag.duration)
        for j, td in enumerate(frag.tracks):
            if td.bytes <= 0:
                raise ValidationError(f"{where} track {j}: non-positive bytes {td.bytes}")
            for model in VMAF_MODELS:
                if model not in td.vmaf:
                    raise ValidationError(f"{where} track {j}: missing VMAF model {model!r}")
                series = td.vmaf[model]
                if len(series) != n_sec:
                    raise ValidationError(
                        f"{where} track {j} model {model}: series length {len(series)} != ceil(duration) {n_sec}")
                for v in series:
                    if not (0.0 <= v <= 100.0):
                        raise ValidationError(f"{where} track {j} model {model}: VMAF {v} outside [0, 100]")


def validate_segmentation(segments: Iterable[Segment], n_fragments: int) -> None:
    """Segments must partition [0, n_fragments) contiguously, in order."""
    segs = list(segments)
    if not segs:
        raise ValidationError("empty segmentation")
    if segs[0].first != 0:
        raise ValidationError(f"segmentation does not start at fragment 0 (starts at {segs[0].first})")
    for k, (a, b) in enumerate(zip(segs, segs[1:])):
        if b.first != a.last + 1:
            raise ValidationError(
                f"segmentation gap/overlap between segment {k} (last {a.last}) and segment {k + 1} (first {b.first})")
    if segs[-1].last != n_fragments - 1:
        raise ValidationError(
            f"segmentation ends at fragment {segs[-1].last}, video has {n_fragments} fragments")


def validate_chunking(chunking: Chunking, video: VideoMeta) -> None:
    validate_segmentation(chunking.segments, video.n_fragments)
    index = VideoIndex(video)
    seen: set[tuple[int, tuple[int, int]]] = set()
    for a in chunking.augmentations:
        if not (0 <= a.segment_index < len(chunking.segments)):
            raise ValidationError(f"augmentation references segment {a.segment_index}, "
                                  f"chunking has {len(chunking.segments)} segments")
        lo, hi = a.between
        if hi != lo + 1 or lo < 0 or hi >= video.n_tracks:
            raise ValidationError(f"augmentation 'between' {a.between} is not an adjacent track pair")
        key = (a.segment_index, a.between)
        if key in seen:
            raise ValidationError(f"duplicate augmentation for segment {a.segment_index} gap {a.between}")
        seen.add(key)
        seg = chunking.segments[a.segment_index]
        lo_kbps = index.segment_bitrate_kbps(seg.first, seg.last, lo)
        hi_kbps = index.segment_bitrate_kbps(seg.first, seg.last, hi)
        if not (lo_kbps < a.kbps < hi_kbps):
            raise ValidationError(
                f"augmentation for segment {a.segment_index} at {a.kbps} kbps not strictly between "
                f"track {lo} ({lo_kbps:.1f}) and track {hi} ({hi_kbps:.1f})")
        if a.bytes <= 0:
            raise ValidationError(f"augmentation for segment {a.segment_index}: non-positive bytes")
        n_sec = math.ceil(index.segment_duration(seg.first, seg.last))
        for model in VMAF_MODELS:
            if model not in a.vmaf:
                raise ValidationError(f"augmentation for segment {a.segment_index}: missing VMAF model {model!r}")
            if len(a.vmaf[model]) != n_sec:
                raise ValidationError(
                    f"augmentation for segment {a.segment_index} model {model}: "
                    f"series length {len(a.vmaf[model])} != {n_sec}")


# ---------------------------------------------------------------------------
# Derived per-segment quantities
# ---------------------------------------------------------------------------

class VideoIndex:
    """Prefix sums over fragments so any segment's duration/bytes/VMAF stats
    cost O(1). Built once per video; read-only afterwards."""

    def __init__(self, video: VideoMeta):
        self.video = video
        n = video.n_fragments
        n_tracks = video.n_tracks
        n_models = len(VMAF_MODELS)
        self.dur_prefix = np.zeros(n + 1)
        self.bytes_prefix = np.zeros((n + 1, n_tracks), dtype=np.int64)
        self.vmaf_mass_prefix = np.zeros((n + 1, n_tracks, n_models))
        for i, frag in enumerate(video.fragments):
            self.dur_prefix[i + 1] = self.dur_prefix[i] + frag.duration
            w = _second_weights(frag.duration)
            for j, td in enumerate(frag.tracks):
                self.bytes_prefix[i + 1, j] = self.bytes_prefix[i, j] + td.bytes
                for m, model in enumerate(VMAF_MODELS):
                    mass = float(np.dot(np.asarray(td.vmaf[model]), w))
                    self.vmaf_mass_prefix[i + 1, j, m] = self.vmaf_mass_prefix[i, j, m] + mass

    # segment bounds are inclusive fragment indices
    def segment_duration(self, first: int, last: int) -> float:
        return float(self.dur_prefix[last + 1] - self.dur_prefix[first])

    def segment_bytes(self, first: int, last: int, track: int) -> int:
        return int(self.bytes_prefix[last + 1, track] - self.bytes_prefix[first, track])

    def segment_bitrate_kbps(self, first: int, last: int, track: int) -> float:
        dur = self.segment_duration(first, last)
        return 8.0 * self.segment_bytes(first, last, track) / 1000.0 / dur

    def segment_mean_vmaf(self, first: int, last: int, track: int, model: str) -> float:
        m = VMAF_MODELS.index(model)
        mass = float(self.vmaf_mass_prefix[last + 1, track, m] - self.vmaf_mass_prefix[first, track, m])
        return mass / self.segment_duration(first, last)

    def fragment_start(self, i: int) -> float:
        return float(self.dur_prefix[i])

    def track_mean_vmaf(self, track: int, model: str) -> float:
        return self.segment_mean_vmaf(0, self.video.n_fragments - 1, track, model)

    def value_at(self, track: int, model: str, t: float) -> float:
        """Per-second VMAF value of content at playback time ``t`` (seconds
        from video start), sampled from the owning fragment's series."""
        i = int(np.searchsorted(self.dur_prefix, t, side="right")) - 1
        i = min(max(i, 0), self.video.n_fragments - 1)
        frag = self.video.fragments[i]
        local = int(t - self.dur_prefix[i])
        series = frag.tracks[track].vmaf[model]
        return float(series[min(local, len(series) - 1)])

    def segment_second_series(self, first: int, last: int, track: int, model: str) -> np.ndarray:
        """VMAF of the segment's content on its own 1 s playback grid."""
        start = self.fragment_start(first)
        dur = self.segment_duration(first, last)
        n = math.ceil(dur - 1e-9)
        return np.array([self.value_at(track, model, start + s) for s in range(n)])


def segment_stats(video: VideoMeta, seg: Segment, track: int,
                  index: VideoIndex | None = None) -> SegmentStats:
    """Duration, byte count, instantaneous bitrate, and duration-weighted
    mean VMAF of one segment on one track."""
    idx = index if index is not None else VideoIndex(video)
    dur = idx.segment_duration(seg.first, seg.last)
    nbytes = idx.segment_bytes(seg.first, seg.last, track)
    return SegmentStats(
        duration=dur,
        bytes=nbytes,
        bitrate_kbps=8.0 * nbytes / 1000.0 / dur,
        mean_vmaf={m: idx.segment_mean_vmaf(seg.first, seg.last, track, m) for m in VMAF_MODELS},
    )


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def video_to_dict(video: VideoMeta) -> dict:
    return {
        "schema": META_SCHEMA,
        "video_id": video.video_id,
        "fps": video.fps,
        "ladder": [{"id": t.id, "kbps": t.kbps, "label": t.label} for t in video.ladder],
        "fragments": [
            {
                "duration_s": f.duration,
                "tracks": [
                    {"bytes": td.bytes, "vmaf": {m: list(td.vmaf[m]) for m in VMAF_MODELS}}
                    for td in f.tracks
                ],
            }
            for f in video.fragments
        ],
    }


def video_from_dict(doc: dict) -> VideoMeta:
    try:
        if doc.get("schema") != META_SCHEMA:
            raise ParseError(f"unsupported metadata schema {doc.get('schema')!r}")
        ladder = tuple(Track(id=int(t["id"]), kbps=float(t["kbps"]), label=str(t.get("label", "")))
                       for t in doc["ladder"])
        fragments = []
        for i, f in enumerate(doc["fragments"]):
            tracks = tuple(
                TrackData(bytes=int(td["bytes"]),
                          vmaf={m: tuple(float(v) for v in td["vmaf"][m])
                                for m in td["vmaf"]})
                for td in f["tracks"]
            )
            fragments.append(Fragment(index=i, duration=float(f["duration_s"]), tracks=tracks))
        video = VideoMeta(video_id=str(doc["video_id"]), fps=float(doc["fps"]),
                          ladder=ladder, fragments=tuple(fragments))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed video metadata: {exc}") from exc
    validate_video(video)
    return video


def load_video(path: str | Path) -> VideoMeta:
    """Load and validate a video metadata JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    return video_from_dict(doc)


def save_video(video: VideoMeta, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(video_to_dict(video)))


def chunking_to_dict(chunking: Chunking) -> dict:
    return {
        "schema": CHUNKING_SCHEMA,
        "segments": [{"first": s.first, "last": s.last} for s in chunking.segments],
        "augmentations": [
            {
                "segment": a.segment_index,
                "kbps": a.kbps,
                "bytes": a.bytes,
                "vmaf": {m: list(a.vmaf[m]) for m in VMAF_MODELS},
                "between": list(a.between),
            }
            for a in chunking.augmentations
        ],
    }


def chunking_from_dict(doc: dict, video: VideoMeta | None = None) -> Chunking:
    try:
        if doc.get("schema") != CHUNKING_SCHEMA:
            raise ParseError(f"unsupported chunking schema {doc.get('schema')!r}")
        segments = tuple(Segment(first=int(s["first"]), last=int(s["last"])) for s in doc["segments"])
        augs = tuple(
            Augmentation(
                segment_index=int(a["segment"]),
                kbps=float(a["kbps"]),
                bytes=int(a["bytes"]),
                vmaf={m: tuple(float(v) for v in a["vmaf"][m]) for m in a["vmaf"]},
                between=(int(a["between"][0]), int(a["between"][1])),
            )
            for a in doc.get("augmentations", ())
        )
        chunking = Chunking(segments=segments, augmentations=augs)
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"malformed chunking: {exc}") from exc
    if video is not None:
        validate_chunking(chunking, video)
    return chunking


def load_chunking(path: str | Path, video: VideoMeta | None = None) -> Chunking:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    return chunking_from_dict(doc, video)


def save_chunking(chunking: Chunking, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(chunking_to_dict(chunking)))


def dumps_canonical(doc: dict) -> str:
    """Canonical JSON form: stable key order as constructed, compact
    separators, trailing newline. Reloading and re-dumping is bit-stable."""
    return json.dumps(doc, separators=(",", ":")) + "\n"


# ---------------------------------------------------------------------------
# Baseline segmentations
# ---------------------------------------------------------------------------

def constant_segmentation(video: VideoMeta, target_len: float = 5.0) -> tuple[Segment, ...]:
    """Greedily accumulate fragments until each segment reaches the target
    playback length. Emulates today's fixed-length chunking on the given
    keyframe lattice."""
    segments: list[Segment] = []
    first = 0
    acc = 0.0
    for i, frag in enumerate(video.fragments):
        acc += frag.duration
        if acc >= target_len - 1e-9:
            segments.append(Segment(first, i))
            first = i + 1
            acc = 0.0
    if first < video.n_fragments:
        segments.append(Segment(first, video.n_fragments - 1))
    return tuple(segments)


def per_fragment_segmentation(video: VideoMeta) -> tuple[Segment, ...]:
    """Every fragment is its own segment."""
    return tuple(Segment(i, i) for i in range(video.n_fragments))
