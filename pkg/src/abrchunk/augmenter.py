"""Selective augmentation: add an extra bitrate option between two adjacent
ladder tracks for segments that are hard to stream.

Three threshold heuristics flag segments — VMAF drops below the track
median, bitrate peaks above the track average, or both combined — and a
simulation-guided pass scores the combined heuristic across a whole
threshold grid, committing only augmentations whose QoE gain per added
byte is positive.

Since there is no real encoder behind the primary artifact, an added
option's bytes follow its average bitrate exactly, and its VMAF series is
log-bitrate interpolated between the bracketing tracks: the monotonicity
the search relies on (more bitrate, quality between neighbors), nothing
more.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .media import Augmentation, Segment, VideoIndex, VideoMeta, VMAF_MODELS
from .qoe import QoeWeights, qoe
from .segmenter import SegmenterDeps
from .simulator import PlayerState, TraceSignal, WindowSupply, finalize, run_segments

log = logging.getLogger(__name__)

AUG_STRATEGIES = ("lambda_v", "lambda_b", "lambda_bv", "sigma_bv")

GRID_V = tuple(range(5, 15))       # VMAF-gap thresholds, points
GRID_B = (5.0, 10.0, 15.0)         # bitrate-excess thresholds, percent


@dataclass(frozen=True)
class AugConfig:
    strategy: str = "lambda_bv"
    vmaf_drop_threshold: float = 8.0    # lambda_v: points below the track median
    bitrate_excess_pct: float = 10.0    # B: percent above the track average
    vmaf_gap_threshold: float = 10.0    # V: inter-track VMAF gap, points
    grid_v: tuple[float, ...] = GRID_V
    grid_b: tuple[float, ...] = GRID_B
    lookahead_segments: int = 5         # sigma window length
    decision_model: str = "uhd4k"

    def __post_init__(self) -> None:
        if self.strategy not in AUG_STRATEGIES:
            raise ValueError(f"unknown augmentation strategy {self.strategy!r}")
        if not self.grid_v or not self.grid_b:
            raise ValueError("threshold grid must be nonempty")


def synthesize_augmentation(index: VideoIndex, segments: Sequence[Segment],
                            seg_idx: int, kbps: float,
                            between: tuple[int, int]) -> Augmentation | None:
    """Model the encode of an extra option at ``kbps`` for one segment.

    Bytes follow the average bitrate exactly; per-second VMAF interpolates
    the bracketing tracks at the log-bitrate position. Returns None (with a
    warning) when ``kbps`` does not strictly bracket, since such an option
    would add nothing the ladder lacks."""
    seg = segments[seg_idx]
    lo, hi = between
    lo_kbps = index.segment_bitrate_kbps(seg.first, seg.last, lo)
    hi_kbps = index.segment_bitrate_kbps(seg.first, seg.last, hi)
    if not (lo_kbps < kbps < hi_kbps):
        log.warning("dropping augmentation for segment %d: %.0f kbps not inside "
                    "track %d..%d (%.0f..%.0f kbps)", seg_idx, kbps, lo, hi, lo_kbps, hi_kbps)
        return None
    w = (math.log(kbps) - math.log(lo_kbps)) / (math.log(hi_kbps) - math.log(lo_kbps))
    dur = index.segment_duration(seg.first, seg.last)
    vmaf = {}
    for model in VMAF_MODELS:
        lo_series = index.segment_second_series(seg.first, seg.last, lo, model)
        hi_series = index.segment_second_series(seg.first, seg.last, hi, model)
        vmaf[model] = tuple(float(v) for v in (1.0 - w) * lo_series + w * hi_series)
    return Augmentation(
        segment_index=seg_idx,
        kbps=kbps,
        bytes=max(1, round(kbps * dur * 125.0)),
        vmaf=vmaf,
        between=between,
    )


# ---------------------------------------------------------------------------
# Threshold heuristics
# ---------------------------------------------------------------------------

def _track_medians(index: VideoIndex, segments: Sequence[Segment], model: str) -> list[float]:
    return [float(np.median([index.segment_mean_vmaf(s.first, s.last, j, model) for s in segments]))
            for j in range(index.video.n_tracks)]


def _track_averages_kbps(index: VideoIndex) -> list[float]:
    video = index.video
    n = video.n_fragments
    return [index.segment_bitrate_kbps(0, n - 1, j) for j in range(video.n_tracks)]


def lambda_v(video: VideoMeta, segments: Sequence[Segment], cfg: AugConfig,
             index: VideoIndex | None = None) -> tuple[Augmentation, ...]:
    """Augment segments whose VMAF falls at least the threshold below their
    track's median, at the mean of the bracketing bitrates (track j and
    j+1); the top track has no upstairs neighbor and is skipped."""
    idx = index if index is not None else VideoIndex(video)
    medians = _track_medians(idx, segments, cfg.decision_model)
    out: list[Augmentation] = []
    for i, s in enumerate(segments):
        for j in range(video.n_tracks - 1):
            v = idx.segment_mean_vmaf(s.first, s.last, j, cfg.decision_model)
            if medians[j] - v >= cfg.vmaf_drop_threshold:
                kbps = (idx.segment_bitrate_kbps(s.first, s.last, j)
                        + idx.segment_bitrate_kbps(s.first, s.last, j + 1)) / 2.0
                aug = synthesize_augmentation(idx, segments, i, kbps, (j, j + 1))
                if aug is not None:
                    out.append(aug)
    return _dedupe(out)


def lambda_b(video: VideoMeta, segments: Sequence[Segment], cfg: AugConfig,
             index: VideoIndex | None = None) -> tuple[Augmentation, ...]:
    """Augment bitrate peaks: segments whose instantaneous bitrate exceeds
    the track average by at least B percent get an option at the track
    average, between tracks j-1 and j."""
    idx = index if index is not None else VideoIndex(video)
    averages = _track_averages_kbps(idx)
    factor = 1.0 + cfg.bitrate_excess_pct / 100.0
    out: list[Augmentation] = []
    for i, s in enumerate(segments):
        for j in range(1, video.n_tracks):
            if idx.segment_bitrate_kbps(s.first, s.last, j) >= factor * averages[j]:
                aug = synthesize_augmentation(idx, segments, i, averages[j], (j - 1, j))
                if aug is not None:
                    out.append(aug)
    return _dedupe(out)


def lambda_bv(video: VideoMeta, segments: Sequence[Segment], v_threshold: float,
              b_threshold_pct: float, cfg: AugConfig | None = None,
              index: VideoIndex | None = None) -> tuple[Augmentation, ...]:
    """Bitrate-peak condition AND a substantial VMAF gap to the track below:
    only peaks whose quality actually suffers at track j-1 are augmented."""
    cfg = cfg or AugConfig()
    idx = index if index is not None else VideoIndex(video)
    averages = _track_averages_kbps(idx)
    factor = 1.0 + b_threshold_pct / 100.0
    out: list[Augmentation] = []
    for i, s in enumerate(segments):
        for j in range(1, video.n_tracks):
            if idx.segment_bitrate_kbps(s.first, s.last, j) < factor * averages[j]:
                continue
            gap = (idx.segment_mean_vmaf(s.first, s.last, j, cfg.decision_model)
                   - idx.segment_mean_vmaf(s.first, s.last, j - 1, cfg.decision_model))
            if gap >= v_threshold:
                aug = synthesize_augmentation(idx, segments, i, averages[j], (j - 1, j))
                if aug is not None:
                    out.append(aug)
    return _dedupe(out)


def _dedupe(augs: Sequence[Augmentation]) -> tuple[Augmentation, ...]:
    seen = set()
    out = []
    for a in augs:
        key = (a.segment_index, a.between)
        if key in seen:
            continue
        seen.add(key)
        out.append(a)
    return tuple(out)


# ---------------------------------------------------------------------------
# Simulation-guided pass
# ---------------------------------------------------------------------------

def sigma_bv(video: VideoMeta, segments: Sequence[Segment], deps: SegmenterDeps,
             cfg: AugConfig | None = None,
             decision_log: list[dict] | None = None) -> tuple[Augmentation, ...]:
    """Walk the segmentation once; at each segment, try every threshold-grid
    plan over the next few segments, resume the cached per-trace playback
    under each, and commit this segment's augmentations from the plan with
    the best positive QoE-gain per added byte."""
    cfg = cfg or AugConfig(strategy="sigma_bv")
    if not deps.traces:
        raise ValueError("sigma_bv needs training traces")
    index = VideoIndex(video)
    segments = list(segments)
    n = len(segments)

    grid: list[tuple[float, float, tuple[Augmentation, ...]]] = []
    for v_thr in cfg.grid_v:
        for b_thr in cfg.grid_b:
            grid.append((v_thr, b_thr, lambda_bv(video, segments, v_thr, b_thr, cfg, index)))

    caches: dict[str, PlayerState] = {tr.id: PlayerState() for tr in deps.traces}
    signals = {tr.id: TraceSignal(tr, deps.sim.trace_looping) for tr in deps.traces}
    committed: list[Augmentation] = []

    def rollout(first: int, window: list[Segment], augs: Sequence[Augmentation]
                ) -> tuple[float, dict[str, list[PlayerState]]]:
        qoes = []
        snaps: dict[str, list[PlayerState]] = {}
        for tr in deps.traces:
            st = caches[tr.id].copy()
            supply = WindowSupply(video, index, window, first, augmentations=augs)
            snap_list: list[PlayerState] = []
            run_segments(st, supply, deps.abr, signals[tr.id], deps.sim,
                         decision_model=deps.decision_model, boundary_snapshots=snap_list)
            outcome = finalize(st, video, index, tr.id, getattr(deps.abr, "name", "abr"))
            qoes.append(qoe(outcome, deps.weights, deps.decision_model).total)
            snaps[tr.id] = snap_list
        return float(np.mean(qoes)), snaps

    for i in range(n):
        window = segments[i: min(n, i + cfg.lookahead_segments)]
        default_qoe, default_snaps = rollout(i, window, ())
        best = None  # (score, v, b, plan_augs, snaps)
        entries = []
        for v_thr, b_thr, plan in grid:
            window_augs = tuple(a for a in plan if i <= a.segment_index < i + len(window))
            added = sum(a.bytes for a in window_augs)
            if added == 0:
                continue  # identical to the default
            plan_qoe, snaps = rollout(i, window, window_augs)
            score = (plan_qoe - default_qoe) / added
            entries.append({"V": v_thr, "B": b_thr, "window_aug_bytes": added,
                            "qoe": plan_qoe, "score": score})
            if best is None or score > best[0]:
                best = (score, v_thr, b_thr, window_augs, snaps)

        committed_here: list[Augmentation] = []
        if best is not None and best[0] > 0:
            committed_here = [a for a in best[3] if a.segment_index == i]
            committed.extend(committed_here)
        # the cache must reflect only the committed reality: adopt the
        # winner's state when segment i actually gained an augmentation
        winner_snaps = best[4] if committed_here else default_snaps
        # action for segment i is now final: advance every cache past it
        for tr in deps.traces:
            caches[tr.id] = winner_snaps[tr.id][0]
        if decision_log is not None:
            decision_log.append({
                "segment": i, "default_qoe": default_qoe, "plans": entries,
                "committed": [{"kbps": a.kbps, "between": list(a.between), "bytes": a.bytes}
                              for a in committed_here],
            })
    return _dedupe(committed)


# ---------------------------------------------------------------------------
# Dispatcher
# ---------------------------------------------------------------------------

def augment(video: VideoMeta, segments: Sequence[Segment], cfg: AugConfig,
            deps: SegmenterDeps | None = None,
            decision_log: list[dict] | None = None) -> tuple[Augmentation, ...]:
    if cfg.strategy == "lambda_v":
        return lambda_v(video, segments, cfg)
    if cfg.strategy == "lambda_b":
        return lambda_b(video, segments, cfg)
    if cfg.strategy == "lambda_bv":
        return lambda_bv(video, segments, cfg.vmaf_gap_threshold, cfg.bitrate_excess_pct, cfg)
    if deps is None:
        raise ValueError("sigma_bv needs simulation deps (abr + traces)")
    return sigma_bv(video, segments, deps, cfg, decision_log)
