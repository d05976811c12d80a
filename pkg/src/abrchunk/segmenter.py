"""Segmentation strategies: fixed-length baselines, penalty heuristics over
a sliding window of merge decisions, and simulation-guided search.

The search strategies scan the video left to right. At each step the next
``k`` fragments form a window; every fragment carries one binary decision
(merge into the preceding segment or open a new one), so a window yields
2^k candidate continuations. Candidates are scored — by a target-deviation
penalty, or by resuming cached per-trace playback simulations through the
candidate — and a prefix of the winner's decisions is frozen before the
window slides on. A segment stays open across steps until some committed
decision closes it; the wide-lookahead variant prunes the candidate set
with the penalty heuristic before simulating and freezes several decisions
per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .media import Segment, VideoIndex, VideoMeta, constant_segmentation, per_fragment_segmentation
from .qoe import QoeWeights, qoe
from .simulator import PlayerState, SimConfig, TraceSignal, WindowSupply, finalize, run_segments
from .traces import NetworkTrace

STRATEGIES = ("constant", "per_fragment", "time", "bytes", "time_bytes", "sim", "wide_eye")
HEURISTIC_KINDS = ("time", "bytes", "time_bytes")


@dataclass(frozen=True)
class SegConfig:
    strategy: str = "constant"
    k: int = 5                     # window size in fragments
    commit_window: int = 1         # decisions frozen per step
    target_len: float = 5.0        # seconds
    penalty_rate: float = 0.2      # per second of deviation / per unit byte excess
    byte_target: float | None = None  # default: bytes of target_len s of the top track
    filter_width: int = 32         # candidates the wide strategy simulates
    aggregate: str = "mean"        # "mean" or "p<percentile>", e.g. "p5"
    symmetric_bytes: bool = False  # penalize byte deficit too, not only excess

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not (1 <= self.commit_window <= self.k):
            raise ValueError("commit_window must be in [1, k]")

    @staticmethod
    def for_strategy(strategy: str, **overrides) -> "SegConfig":
        defaults = {}
        if strategy == "wide_eye":
            defaults = {"k": 10, "commit_window": 5}
        defaults.update(overrides)
        return SegConfig(strategy=strategy, **defaults)


@dataclass(frozen=True)
class SegmenterDeps:
    """Simulation context for the sim/wide_eye strategies."""

    abr: object
    traces: tuple[NetworkTrace, ...]
    weights: QoeWeights = QoeWeights()
    sim: SimConfig = SimConfig()
    decision_model: str = "uhd4k"


@dataclass(frozen=True)
class CandidateSequence:
    """One window's merge pattern. ``bits[i]`` says whether window fragment
    ``i`` merges into the preceding segment; the induced window-local runs
    treat the first fragment as opening a run (its bit only matters when an
    open segment is carried in from previous steps)."""

    bits: tuple[bool, ...]
    runs: tuple[tuple[int, int], ...]  # window-local (first, last) fragment offsets

    @property
    def bits_int(self) -> int:
        out = 0
        for b in self.bits:
            out = (out << 1) | int(b)
        return out

    @property
    def bits_str(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


def enumerate_candidates(k: int) -> tuple[CandidateSequence, ...]:
    """All 2^k merge patterns of a k-fragment window, in binary-counter
    order (first fragment's bit most significant)."""
    if k <= 0:
        raise ValueError("window must be nonempty")
    out = []
    for code in range(2 ** k):
        bits = tuple(bool((code >> (k - 1 - i)) & 1) for i in range(k))
        runs = []
        start = 0
        for i in range(1, k):
            if not bits[i]:
                runs.append((start, i - 1))
                start = i
        runs.append((start, k - 1))
        out.append(CandidateSequence(bits=bits, runs=tuple(runs)))
    return tuple(out)


def induce_tentative(open_start: int | None, window_start: int,
                     bits: Sequence[bool]) -> list[Segment]:
    """Concrete segments covering the carried-in open run plus the window,
    under the window's merge bits. The final segment is still open (later
    windows may extend it); rollouts download it as-is."""
    segs: list[Segment] = []
    cur = open_start
    for i, merge in enumerate(bits):
        f = window_start + i
        if cur is None:
            cur = f
        elif merge:
            continue
        else:
            segs.append(Segment(cur, f - 1))
            cur = f
    segs.append(Segment(cur, window_start + len(bits) - 1))
    return segs


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def default_byte_target(index: VideoIndex, target_len: float) -> float:
    """Average bytes carried by target_len seconds of the top track."""
    video = index.video
    top = video.n_tracks - 1
    total = index.segment_bytes(0, video.n_fragments - 1, top)
    return total / video.total_duration * target_len


def heuristic_score(segments: Sequence[Segment], index: VideoIndex, cfg: SegConfig,
                    kind: str) -> float:
    """Mean per-segment penalty: linear deviation from the target length,
    and/or linear byte excess over the byte target on the top track."""
    if kind not in HEURISTIC_KINDS:
        raise ValueError(f"unknown heuristic {kind!r}")
    byte_target = cfg.byte_target if cfg.byte_target is not None \
        else default_byte_target(index, cfg.target_len)
    top = index.video.n_tracks - 1
    total = 0.0
    for s in segments:
        p = 0.0
        if kind in ("time", "time_bytes"):
            p += cfg.penalty_rate * abs(index.segment_duration(s.first, s.last) - cfg.target_len)
        if kind in ("bytes", "time_bytes"):
            ratio = index.segment_bytes(s.first, s.last, top) / byte_target
            excess = abs(ratio - 1.0) if cfg.symmetric_bytes else max(0.0, ratio - 1.0)
            p += cfg.penalty_rate * excess
        total += p
    return total / len(segments)


def make_aggregator(spec: str) -> Callable[[Sequence[float]], float]:
    if spec == "mean":
        return lambda xs: float(np.mean(xs))
    if spec.startswith("p"):
        pct = float(spec[1:])
        return lambda xs: float(np.percentile(xs, pct))  # linear interpolation
    raise ValueError(f"unknown aggregate {spec!r} (use 'mean' or 'p<percentile>')")


def sim_score(tentative: Sequence[Segment], first_index: int,
              caches: dict[str, PlayerState], signals: dict[str, TraceSignal],
              video: VideoMeta, index: VideoIndex, deps: SegmenterDeps,
              aggregate: Callable[[Sequence[float]], float],
              ) -> tuple[float, dict[str, list[PlayerState]]]:
    """Resume each trace's cached player through the tentative segments and
    aggregate full-prefix QoE. Returns the score and, per trace, the state
    snapshots after each tentative segment (for committing)."""
    qoes = []
    snaps: dict[str, list[PlayerState]] = {}
    for tr in deps.traces:
        st = caches[tr.id].copy()
        supply = WindowSupply(video, index, tentative, first_index)
        snap_list: list[PlayerState] = []
        run_segments(st, supply, deps.abr, signals[tr.id], deps.sim,
                     decision_model=deps.decision_model, boundary_snapshots=snap_list)
        outcome = finalize(st, video, index, tr.id, getattr(deps.abr, "name", "abr"))
        qoes.append(qoe(outcome, deps.weights, deps.decision_model).total)
        snaps[tr.id] = snap_list
    return aggregate(qoes), snaps


# ---------------------------------------------------------------------------
# Strategy drivers
# ---------------------------------------------------------------------------

def _heuristic_loop(video: VideoMeta, index: VideoIndex, cfg: SegConfig,
                    log: list[dict] | None) -> tuple[Segment, ...]:
    n = video.n_fragments
    committed: list[Segment] = []
    window_start = 0
    step = 0
    while window_start < n:
        k_eff = min(cfg.k, n - window_start)
        best = None  # (penalty, nseg, bits_int, candidate, segments)
        entries = []
        for cand in enumerate_candidates(k_eff):
            segs = induce_tentative(None, window_start, cand.bits)
            penalty = heuristic_score(segs, index, cfg, cfg.strategy)
            key = (penalty, len(segs), cand.bits_int)
            entries.append({"bits": cand.bits_str, "penalty": penalty, "n_segments": len(segs)})
            if best is None or key < best[:3]:
                best = (penalty, len(segs), cand.bits_int, cand, segs)
        first_seg = best[4][0]
        committed.append(first_seg)
        if log is not None:
            log.append({"step": step, "window_start": window_start, "k": k_eff,
                        "candidates": entries, "committed_bits": best[3].bits_str,
                        "committed_segments": [[first_seg.first, first_seg.last]]})
        window_start = first_seg.last + 1
        step += 1
    return tuple(committed)


def _sim_loop(video: VideoMeta, index: VideoIndex, cfg: SegConfig, deps: SegmenterDeps,
              log: list[dict] | None) -> tuple[Segment, ...]:
    if not deps.traces:
        raise ValueError(f"strategy {cfg.strategy!r} needs training traces")
    n = video.n_fragments
    aggregate = make_aggregator(cfg.aggregate)
    committed: list[Segment] = []
    open_start: int | None = None
    caches: dict[str, PlayerState] = {tr.id: PlayerState() for tr in deps.traces}
    signals = {tr.id: TraceSignal(tr, deps.sim.trace_looping) for tr in deps.traces}
    window_start = 0
    step = 0
    while window_start < n:
        k_eff = min(cfg.k, n - window_start)
        candidates = enumerate_candidates(k_eff)

        if cfg.strategy == "wide_eye":
            keyed = []
            for c in candidates:
                segs = induce_tentative(open_start, window_start, c.bits)
                keyed.append((heuristic_score(segs, index, cfg, "time_bytes"), len(segs), c.bits_int, c))
            keyed.sort(key=lambda e: e[:3])
            candidates = tuple(sorted((e[3] for e in keyed[: cfg.filter_width]),
                                      key=lambda c: c.bits_int))

        best = None  # (-score, nseg, bits_int, candidate, segments, snaps)
        entries = []
        for cand in candidates:
            segs = induce_tentative(open_start, window_start, cand.bits)
            score, snaps = sim_score(segs, len(committed), caches, signals,
                                     video, index, deps, aggregate)
            key = (-score, len(segs), cand.bits_int)
            entries.append({"bits": cand.bits_str, "score": score, "n_segments": len(segs)})
            if best is None or key < best[:3]:
                best = (-score, len(segs), cand.bits_int, cand, segs, snaps)

        commit = min(cfg.commit_window, k_eff)
        bits = best[3].bits[:commit]
        closed_now: list[Segment] = []
        for i, merge in enumerate(bits):
            f = window_start + i
            if open_start is None:
                open_start = f
            elif not merge:
                seg = Segment(open_start, f - 1)
                committed.append(seg)
                closed_now.append(seg)
                open_start = f
        if closed_now:
            winner_snaps = best[5]
            for tr in deps.traces:
                caches[tr.id] = winner_snaps[tr.id][len(closed_now) - 1]
        if log is not None:
            log.append({"step": step, "window_start": window_start, "k": k_eff,
                        "open_start": open_start, "candidates": entries,
                        "committed_bits": "".join("1" if b else "0" for b in bits),
                        "committed_segments": [[s.first, s.last] for s in closed_now]})
        window_start += commit
        step += 1

    if open_start is not None:
        committed.append(Segment(open_start, n - 1))
    return tuple(committed)


def segment(video: VideoMeta, cfg: SegConfig, deps: SegmenterDeps | None = None,
            decision_log: list[dict] | None = None) -> tuple[Segment, ...]:
    """Produce a segmentation of ``video`` under the configured strategy."""
    index = VideoIndex(video)
    if cfg.strategy == "constant":
        return constant_segmentation(video, cfg.target_len)
    if cfg.strategy == "per_fragment":
        return per_fragment_segmentation(video)
    if cfg.strategy in HEURISTIC_KINDS:
        return _heuristic_loop(video, index, cfg, decision_log)
    if deps is None:
        raise ValueError(f"strategy {cfg.strategy!r} needs simulation deps (abr + traces)")
    return _sim_loop(video, index, cfg, deps, decision_log)
