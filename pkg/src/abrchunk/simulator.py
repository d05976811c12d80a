"""Deterministic playback simulation of segment downloads over a trace.

The engine walks segments in order: the policy picks an option, the
download time is the link RTT plus the piecewise-constant trace integral,
the buffer drains during downloads (stalling when it empties), fills on
completion, and the player idles before any request that would overflow
the buffer. Everything is a pure function of its inputs; engine states can
be snapshotted and resumed, and a resumed run reproduces the continuous
run bit for bit — the segmentation/augmentation searches lean on that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .abr import AbrContext, Option, SegmentOptions
from .media import Chunking, Segment, VideoIndex, VideoMeta, VMAF_MODELS
from .traces import NetworkTrace, TraceSignal

OUTCOME_SCHEMA = "abrchunk/outcome/1"

_EPS = 1e-9
IDLE_STEP_S = 0.1   # granularity of the buffer-full wait
HISTORY_KEEP = 10   # throughput samples retained (2x the estimator window)


@dataclass(frozen=True)
class SimConfig:
    rtt: float = 0.08
    max_buffer: float = 60.0
    startup_buffer: float = 10.0
    rtt_in_throughput_sample: bool = True
    trace_looping: bool = True

    def __post_init__(self) -> None:
        if self.rtt < 0:
            raise ValueError("rtt must be >= 0")
        if self.startup_buffer > self.max_buffer:
            raise ValueError("startup_buffer must not exceed max_buffer")


@dataclass(frozen=True)
class DownloadRecord:
    segment_index: int
    option: Option
    start: float
    end: float
    throughput_mbps: float


@dataclass
class PlayerState:
    """Mutable engine state. ``copy()`` gives an independent snapshot."""

    wall: float = 0.0
    buffer: float = 0.0
    position: float = 0.0
    started: bool = False
    startup_delay: float = 0.0
    next_segment: int = 0
    last_choice: Option | None = None
    throughput_history: list[float] = field(default_factory=list)
    downloads: list[DownloadRecord] = field(default_factory=list)
    stalls: list[tuple[float, float]] = field(default_factory=list)

    def copy(self) -> "PlayerState":
        return PlayerState(
            wall=self.wall, buffer=self.buffer, position=self.position,
            started=self.started, startup_delay=self.startup_delay,
            next_segment=self.next_segment, last_choice=self.last_choice,
            throughput_history=list(self.throughput_history),
            downloads=list(self.downloads), stalls=list(self.stalls),
        )


@dataclass(frozen=True)
class SecondSample:
    """One wall-clock second of the playback phase."""

    vmaf: Mapping[str, float]    # content quality per VMAF model
    rebuffer_fraction: float     # stalled share of this second, in [0, 1]


@dataclass(frozen=True)
class SimOutcome:
    video_id: str
    trace_id: str
    abr: str
    startup_delay: float
    wall_time: float              # wall clock at end of playback
    video_duration: float         # playback seconds downloaded (full video normally)
    downloads: tuple[DownloadRecord, ...]
    rebuffers: tuple[tuple[float, float], ...]  # (wall start, duration)
    per_second: tuple[SecondSample, ...]
    started: bool = True

    @property
    def total_rebuffer_s(self) -> float:
        """Mid-playback stalls plus startup delay."""
        return self.startup_delay + sum(d for _, d in self.rebuffers)

    def to_dict(self) -> dict:
        return {
            "schema": OUTCOME_SCHEMA,
            "video_id": self.video_id,
            "trace_id": self.trace_id,
            "abr": self.abr,
            "startup_delay": self.startup_delay,
            "wall_time": self.wall_time,
            "video_duration": self.video_duration,
            "started": self.started,
            "downloads": [
                {
                    "segment": d.segment_index,
                    "kind": "track" if d.option.is_base else "augmentation",
                    "track": d.option.track_id,
                    "between": list(d.option.between) if d.option.between else None,
                    "bytes": d.option.bytes,
                    "bitrate_kbps": d.option.bitrate_kbps,
                    "start": d.start,
                    "end": d.end,
                    "throughput_mbps": d.throughput_mbps,
                }
                for d in self.downloads
            ],
            "rebuffers": [{"start": s, "duration": d} for s, d in self.rebuffers],
            "per_second": [
                {"vmaf": dict(s.vmaf), "rebuffer_fraction": s.rebuffer_fraction}
                for s in self.per_second
            ],
        }


# ---------------------------------------------------------------------------
# Download arithmetic
# ---------------------------------------------------------------------------

def download_time(trace: NetworkTrace, start_time: float, nbytes: int, rtt: float,
                  trace_looping: bool = True, signal: TraceSignal | None = None) -> float:
    """RTT plus the time for the trace to deliver ``nbytes`` starting after
    the request's RTT. Raises StalledTraceError on an all-zero trace."""
    if nbytes <= 0:
        return rtt
    sig = signal if signal is not None else TraceSignal(trace, trace_looping)
    return rtt + sig.time_to_deliver(start_time + rtt, 8.0 * nbytes)


def throughput_sample(nbytes: int, duration: float, rtt: float, cfg: SimConfig) -> float:
    """Observed throughput of one download in Mbps. By default the RTT stays
    inside the denominator, reproducing the estimator quirk that
    underestimates bandwidth on tiny segments; disable
    ``rtt_in_throughput_sample`` for the corrected estimator."""
    if cfg.rtt_in_throughput_sample:
        return 8.0 * nbytes / duration / 1e6
    return 8.0 * nbytes / (duration - rtt) / 1e6


# ---------------------------------------------------------------------------
# Segment supplies
# ---------------------------------------------------------------------------

class SegmentSupply(Protocol):
    """Ordered segments to download, with policy lookahead that may extend
    past the supplied segments (raw fragments during segmentation search)."""

    video: VideoMeta
    first_index: int

    def __len__(self) -> int: ...
    def options(self, i: int) -> SegmentOptions: ...
    def lookahead(self, i: int, min_segments: int, min_seconds: float) -> tuple[SegmentOptions, ...]: ...
    @property
    def is_final(self) -> bool: ...


def _segment_options(index: VideoIndex, seg: Segment, seg_idx: int,
                     augmentations: Sequence = ()) -> SegmentOptions:
    video = index.video
    dur = index.segment_duration(seg.first, seg.last)
    opts: list[Option] = []
    for t in video.ladder:
        nbytes = index.segment_bytes(seg.first, seg.last, t.id)
        opts.append(Option(
            segment_index=seg_idx,
            duration=dur,
            bytes=nbytes,
            bitrate_kbps=8.0 * nbytes / 1000.0 / dur,
            mean_vmaf={m: index.segment_mean_vmaf(seg.first, seg.last, t.id, m) for m in VMAF_MODELS},
            track_id=t.id,
        ))
    for a in augmentations:
        if a.segment_index != seg_idx:
            continue
        mean_vmaf = {}
        for m in VMAF_MODELS:
            series = np.asarray(a.vmaf[m], dtype=float)
            w = np.maximum(np.minimum(1.0, dur - np.arange(len(series))), 0.0)
            mean_vmaf[m] = float(np.dot(series, w) / dur)
        opts.append(Option(
            segment_index=seg_idx,
            duration=dur,
            bytes=a.bytes,
            bitrate_kbps=a.kbps,
            mean_vmaf=mean_vmaf,
            track_id=None,
            between=a.between,
            vmaf_series=a.vmaf,
        ))
    opts.sort(key=lambda o: (o.bitrate_kbps, 0 if o.is_base else 1,
                             o.track_id if o.is_base else o.between[0]))
    return SegmentOptions(segment_index=seg_idx, duration=dur, options=tuple(opts))


def _collect_lookahead(first: "int", supply_len: int, get_options, video: VideoMeta,
                       index: VideoIndex, tail_fragment: int, base_index: int,
                       min_segments: int, min_seconds: float) -> tuple[SegmentOptions, ...]:
    out: list[SegmentOptions] = []
    covered = 0.0
    j = first
    while j < supply_len and (len(out) < min_segments or covered < min_seconds):
        seg = get_options(j)
        out.append(seg)
        covered += seg.duration
        j += 1
    # beyond the supplied run, undecided video continues as raw fragments
    frag = tail_fragment
    virtual = base_index + supply_len
    while frag < video.n_fragments and (len(out) < min_segments or covered < min_seconds):
        seg = _segment_options(index, Segment(frag, frag), virtual)
        out.append(seg)
        covered += seg.duration
        frag += 1
        virtual += 1
    return tuple(out)


class ChunkingSupply:
    """Supply over a complete chunking of a video."""

    def __init__(self, video: VideoMeta, chunking: Chunking, index: VideoIndex | None = None):
        self.video = video
        self.chunking = chunking
        self.index = index if index is not None else VideoIndex(video)
        self.first_index = 0
        self._cache: dict[int, SegmentOptions] = {}

    def __len__(self) -> int:
        return len(self.chunking.segments)

    @property
    def is_final(self) -> bool:
        return True

    def options(self, i: int) -> SegmentOptions:
        got = self._cache.get(i)
        if got is None:
            got = _segment_options(self.index, self.chunking.segments[i], i,
                                   self.chunking.augmentations_for(i))
            self._cache[i] = got
        return got

    def lookahead(self, i: int, min_segments: int, min_seconds: float) -> tuple[SegmentOptions, ...]:
        return _collect_lookahead(i, len(self), self.options, self.video, self.index,
                                  self.video.n_fragments, 0, min_segments, min_seconds)


class WindowSupply:
    """Supply used by the segmentation/augmentation searches: a short run of
    tentative segments, with policy lookahead falling back to raw fragments
    past the end of the run."""

    def __init__(self, video: VideoMeta, index: VideoIndex,
                 segments: Sequence[Segment], first_index: int,
                 augmentations: Sequence = ()):
        self.video = video
        self.index = index
        self.segments = list(segments)
        self.first_index = first_index  # global index of segments[0]
        self.augmentations = list(augmentations)
        self._tail_fragment = self.segments[-1].last + 1 if self.segments else 0

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def is_final(self) -> bool:
        return bool(self.segments) and self.segments[-1].last == self.video.n_fragments - 1

    def options(self, i: int) -> SegmentOptions:
        return _segment_options(self.index, self.segments[i], self.first_index + i,
                                self.augmentations)

    def lookahead(self, i: int, min_segments: int, min_seconds: float) -> tuple[SegmentOptions, ...]:
        return _collect_lookahead(i, len(self), self.options, self.video, self.index,
                                  self._tail_fragment, self.first_index,
                                  min_segments, min_seconds)


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

def _advance_during_download(st: PlayerState, dt: float) -> None:
    if st.started:
        if st.buffer >= dt:
            st.buffer -= dt
            st.position += dt
        else:
            stall = dt - st.buffer
            st.stalls.append((st.wall + st.buffer, stall))
            st.position += st.buffer
            st.buffer = 0.0
    st.wall += dt


def _wait_for_buffer_room(st: PlayerState, cfg: SimConfig, next_duration: float) -> None:
    if not st.started:
        return
    threshold = max(0.0, cfg.max_buffer - next_duration)
    while st.buffer > threshold + _EPS:
        step = min(IDLE_STEP_S, st.buffer - threshold)
        st.wall += step
        st.buffer -= step
        st.position += step


def run_segments(st: PlayerState, supply: SegmentSupply, abr, signal: TraceSignal,
                 cfg: SimConfig, decision_model: str = "uhd4k",
                 max_segments: int | None = None,
                 boundary_snapshots: list[PlayerState] | None = None) -> PlayerState:
    """Advance the player through ``supply`` starting at ``st.next_segment``
    (a global segment index). Mutates and returns ``st``. When
    ``boundary_snapshots`` is given, a snapshot is appended after each
    downloaded segment."""
    ladder_max_kbps = max(t.kbps for t in supply.video.ladder)
    end_local = len(supply)
    if max_segments is not None:
        end_local = min(end_local, st.next_segment - supply.first_index + max_segments)
    while st.next_segment - supply.first_index < end_local:
        local = st.next_segment - supply.first_index
        seg = supply.options(local)
        _wait_for_buffer_room(st, cfg, seg.duration)
        ctx = AbrContext(
            buffer_level=st.buffer,
            throughput_history=tuple(st.throughput_history),
            upcoming=supply.lookahead(local, abr.horizon_segments, abr.horizon_seconds),
            last_choice=st.last_choice,
            max_buffer=cfg.max_buffer,
            ladder_max_kbps=ladder_max_kbps,
            decision_model=decision_model,
        )
        choice = abr.select(ctx)
        start = st.wall
        dt = cfg.rtt + signal.time_to_deliver(st.wall + cfg.rtt, 8.0 * choice.bytes)
        _advance_during_download(st, dt)
        st.buffer += choice.duration
        tput = throughput_sample(choice.bytes, dt, cfg.rtt, cfg)
        st.throughput_history.append(tput)
        if len(st.throughput_history) > HISTORY_KEEP:
            del st.throughput_history[0]
        st.downloads.append(DownloadRecord(
            segment_index=st.next_segment, option=choice, start=start, end=st.wall,
            throughput_mbps=tput))
        st.last_choice = choice
        st.next_segment += 1
        if not st.started:
            is_last = supply.is_final and local == len(supply) - 1
            if st.buffer >= cfg.startup_buffer - _EPS or is_last:
                st.started = True
                st.startup_delay = st.wall
        if boundary_snapshots is not None:
            boundary_snapshots.append(st.copy())
    return st


# ---------------------------------------------------------------------------
# Outcome construction
# ---------------------------------------------------------------------------

def finalize(st: PlayerState, video: VideoMeta, index: VideoIndex,
             trace_id: str, abr_name: str) -> SimOutcome:
    """Turn an engine state into an outcome, letting any remaining buffer
    play out (no further stalls are possible once downloads stop). Works
    for partial runs too: the outcome then covers the downloaded prefix."""
    duration = st.position + st.buffer  # total playback seconds downloaded
    if not st.started:
        # playback never began: every wall second so far is startup delay
        return SimOutcome(
            video_id=video.video_id, trace_id=trace_id, abr=abr_name,
            startup_delay=st.wall, wall_time=st.wall, video_duration=duration,
            downloads=tuple(st.downloads), rebuffers=tuple(st.stalls),
            per_second=(), started=False)

    wall_end = st.wall + st.buffer
    total_stalls = sum(d for _, d in st.stalls)
    assert abs(wall_end - (st.startup_delay + duration + total_stalls)) < 1e-6, \
        "wall-clock decomposition violated"

    # playback position of each downloaded segment's first second
    seg_starts = np.concatenate([[0.0], np.cumsum([d.option.duration for d in st.downloads])])

    def vmaf_at(model: str, pos: float) -> float:
        i = int(np.searchsorted(seg_starts, pos + _EPS, side="right")) - 1
        i = min(max(i, 0), len(st.downloads) - 1)
        opt = st.downloads[i].option
        if opt.is_base:
            return index.value_at(opt.track_id, model, pos)
        series = opt.vmaf_series[model]
        local = int(pos - seg_starts[i])
        return float(series[min(local, len(series) - 1)])

    stalls = sorted(st.stalls)
    w0 = st.startup_delay
    n_slots = max(0, math.ceil(wall_end - w0 - _EPS))
    samples: list[SecondSample] = []
    stall_before = 0.0  # stalled time in [w0, current slot start)
    for k in range(n_slots):
        t0 = w0 + k
        t1 = min(t0 + 1.0, wall_end)
        stalled = 0.0
        for s_start, s_dur in stalls:
            lo = max(t0, s_start)
            hi = min(t1, s_start + s_dur)
            if hi > lo:
                stalled += hi - lo
        pos = (t0 - w0) - stall_before
        pos = min(max(pos, 0.0), max(duration - _EPS, 0.0))
        vm = {m: vmaf_at(m, pos) for m in VMAF_MODELS}
        samples.append(SecondSample(vmaf=vm, rebuffer_fraction=min(stalled, 1.0)))
        stall_before += stalled

    return SimOutcome(
        video_id=video.video_id, trace_id=trace_id, abr=abr_name,
        startup_delay=st.startup_delay, wall_time=wall_end, video_duration=duration,
        downloads=tuple(st.downloads), rebuffers=tuple(st.stalls),
        per_second=tuple(samples), started=True)


def simulate(video: VideoMeta, chunking: Chunking, abr, trace: NetworkTrace,
             cfg: SimConfig | None = None, decision_model: str = "uhd4k",
             index: VideoIndex | None = None) -> SimOutcome:
    """Simulate full playback of ``chunking`` over ``trace`` under ``abr``."""
    cfg = cfg or SimConfig()
    idx = index if index is not None else VideoIndex(video)
    supply = ChunkingSupply(video, chunking, idx)
    signal = TraceSignal(trace, cfg.trace_looping)
    st = PlayerState()
    run_segments(st, supply, abr, signal, cfg, decision_model=decision_model)
    return finalize(st, video, idx, trace.id, abr.name)
