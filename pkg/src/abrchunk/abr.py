"""Rate adaptation policies: rate-based (RB), buffer-based (BB), and a
robust model-predictive planner (RMPC) in bitrate-oblivious and
VMAF-aware variants.

Policies are pure functions of an AbrContext plus immutable parameters;
the simulator owns all evolving state (buffer, throughput history, last
choice) and rebuilds the context every request, which keeps simulation
fan-out trivially parallel and snapshots cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

BANDWIDTH_SAMPLES = 5  # harmonic-mean window, also the error window for RMPC


@dataclass(frozen=True)
class Option:
    """One downloadable rendition of one segment: a base track or an
    augmentation."""

    segment_index: int
    duration: float
    bytes: int
    bitrate_kbps: float
    mean_vmaf: Mapping[str, float]
    track_id: int | None = None           # None for augmentations
    between: tuple[int, int] | None = None  # set for augmentations
    vmaf_series: Mapping[str, tuple[float, ...]] | None = None  # augmentations only

    @property
    def is_base(self) -> bool:
        return self.track_id is not None


@dataclass(frozen=True)
class SegmentOptions:
    """All options available for one segment, in canonical order
    (ascending bitrate, base tracks before augmentations on ties)."""

    segment_index: int
    duration: float
    options: tuple[Option, ...]

    @property
    def bases(self) -> tuple[Option, ...]:
        return tuple(sorted((o for o in self.options if o.is_base), key=lambda o: o.track_id))

    def aug_for_gap(self, low_track: int) -> Option | None:
        for o in self.options:
            if o.between == (low_track, low_track + 1):
                return o
        return None


@dataclass(frozen=True)
class AbrContext:
    """Everything a policy may look at when choosing the next download.

    ``upcoming[0]`` is the segment about to be requested; later entries
    extend as far as the caller can see (raw fragments stand in for
    undecided segments during segmentation search)."""

    buffer_level: float
    throughput_history: tuple[float, ...]  # Mbps, oldest -> newest
    upcoming: tuple[SegmentOptions, ...]
    last_choice: Option | None
    max_buffer: float
    ladder_max_kbps: float
    decision_model: str = "uhd4k"


def estimate_bandwidth(history: Sequence[float]) -> float | None:
    """Harmonic mean of the most recent throughput samples; None when no
    sample exists yet (callers then fall back to the lowest track)."""
    recent = list(history)[-BANDWIDTH_SAMPLES:]
    if not recent:
        return None
    return len(recent) / sum(1.0 / s for s in recent)


# ---------------------------------------------------------------------------
# Rate-based
# ---------------------------------------------------------------------------

class RateBased:
    name = "rb"
    horizon_segments = 1
    horizon_seconds = 0.0

    def select(self, ctx: AbrContext) -> Option:
        nxt = ctx.upcoming[0]
        est = estimate_bandwidth(ctx.throughput_history)
        if est is None:
            return nxt.bases[0]
        fitting = [o for o in nxt.options if o.bitrate_kbps <= est * 1000.0]
        if not fitting:
            return nxt.bases[0]
        return max(fitting, key=lambda o: o.bitrate_kbps)


# ---------------------------------------------------------------------------
# Buffer-based
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BbParams:
    cushion: float = 20.0
    min_reservoir: float = 8.0
    window_s: float = 20.0  # horizon used to size the dynamic reservoir


def dynamic_reservoir(ctx: AbrContext, params: BbParams) -> float:
    """Reservoir sized to the time needed to download the next stretch of
    lowest-track video at the current estimate, floored at 8 s to absorb
    variable-length segments."""
    est = estimate_bandwidth(ctx.throughput_history)
    if est is None:
        return params.min_reservoir
    need_bytes = 0.0
    covered = 0.0
    for seg in ctx.upcoming:
        lowest = seg.bases[0]
        take = min(seg.duration, params.window_s - covered)
        if take <= 0:
            break
        need_bytes += lowest.bytes * take / seg.duration
        covered += take
    if covered <= 0:
        return params.min_reservoir
    dl_time = 8.0 * need_bytes / (est * 1e6)
    raw = dl_time - covered
    return min(max(raw, params.min_reservoir), 0.5 * ctx.max_buffer)


class BufferBased:
    name = "bb"
    horizon_segments = 1

    def __init__(self, params: BbParams | None = None):
        self.params = params or BbParams()

    @property
    def horizon_seconds(self) -> float:
        return self.params.window_s

    def select(self, ctx: AbrContext) -> Option:
        nxt = ctx.upcoming[0]
        bases = nxt.bases
        r = dynamic_reservoir(ctx, self.params)
        c = self.params.cushion
        b = ctx.buffer_level
        if b < r or len(bases) == 1:
            return bases[0]
        if b >= r + c:
            return bases[-1]
        jf = (b - r) / c * (len(bases) - 1)
        j0 = min(int(math.floor(jf)), len(bases) - 2)
        frac = jf - j0
        aug = nxt.aug_for_gap(bases[j0].track_id)
        if aug is None:
            return bases[min(int(math.floor(jf + 0.5)), len(bases) - 1)]
        # split the mapped inter-track interval into thirds:
        # lower track, augmentation, upper track
        k = min(int(math.floor(frac * 3.0)), 2)
        return (bases[j0], aug, bases[j0 + 1])[k]


# ---------------------------------------------------------------------------
# Robust MPC
# ---------------------------------------------------------------------------

def _max_recent_error(history: Sequence[float]) -> float:
    """Largest relative error of the rolling harmonic-mean predictor over
    the last few samples; the robustness discount divides by (1 + this)."""
    hist = list(history)
    errors = []
    for i in range(max(1, len(hist) - BANDWIDTH_SAMPLES), len(hist)):
        pred = estimate_bandwidth(hist[:i])
        if pred is None or hist[i] <= 0:
            continue
        errors.append(abs(pred - hist[i]) / hist[i])
    return max(errors, default=0.0)


@dataclass(frozen=True)
class RmpcParams:
    horizon: int = 5
    reward: str = "aware"  # "aware" (VMAF) | "oblivious" (normalized bitrate)
    lambda_per_s: float = 0.25
    beta: float = 100.0
    gamma: float = 1.0


class RobustMpc:
    horizon_seconds = 0.0

    def __init__(self, params: RmpcParams | None = None):
        self.params = params or RmpcParams()
        if self.params.reward not in ("aware", "oblivious"):
            raise ValueError(f"unknown RMPC reward kind {self.params.reward!r}")
        self.name = "rmpc-a" if self.params.reward == "aware" else "rmpc-o"

    @property
    def horizon_segments(self) -> int:
        return self.params.horizon

    def _q(self, option: Option, ctx: AbrContext) -> float:
        if self.params.reward == "aware":
            return option.mean_vmaf[ctx.decision_model]
        return 100.0 * option.bitrate_kbps / ctx.ladder_max_kbps

    def select(self, ctx: AbrContext) -> Option:
        steps = ctx.upcoming[: self.params.horizon]
        est = estimate_bandwidth(ctx.throughput_history)
        if est is None:
            return steps[0].bases[0]
        robust_bps = est / (1.0 + _max_recent_error(ctx.throughput_history)) * 1e6

        p = self.params
        lam = 4.0 * p.lambda_per_s  # matches the per-second QoE weights at their defaults
        q_start = self._q(ctx.last_choice, ctx) if ctx.last_choice is not None else None

        # per-step precomputation: (download_s, duration, q) per option
        tables = []
        for seg in steps:
            tables.append([(8.0 * o.bytes / robust_bps, o.duration, self._q(o, ctx)) for o in seg.options])

        best_reward = -math.inf
        best_first = 0
        n_steps = len(tables)

        def dfs(depth: int, buf: float, q_prev: float | None, reward: float, first: int) -> None:
            nonlocal best_reward, best_first
            if depth == n_steps:
                if reward > best_reward:
                    best_reward = reward
                    best_first = first
                return
            for oi, (dl, dur, q) in enumerate(tables[depth]):
                rebuf = max(0.0, dl - buf)
                buf2 = min(max(buf - dl, 0.0) + dur, ctx.max_buffer)
                r2 = reward + lam * dur * q - p.beta * rebuf
                if q_prev is not None:
                    r2 -= p.gamma * abs(q - q_prev)
                dfs(depth + 1, buf2, q, r2, oi if depth == 0 else first)

        dfs(0, ctx.buffer_level, q_start, 0.0, 0)
        return steps[0].options[best_first]


# ---------------------------------------------------------------------------
# Factory
# ---------------------------------------------------------------------------

ABR_NAMES = ("rb", "bb", "rmpc-o", "rmpc-a")


def make_abr(name: str, **overrides):
    if name == "rb":
        return RateBased()
    if name == "bb":
        return BufferBased(BbParams(**overrides) if overrides else None)
    if name == "rmpc-o":
        return RobustMpc(RmpcParams(reward="oblivious", **overrides))
    if name == "rmpc-a":
        return RobustMpc(RmpcParams(reward="aware", **overrides))
    raise ValueError(f"unknown ABR policy {name!r}; expected one of {ABR_NAMES}")
