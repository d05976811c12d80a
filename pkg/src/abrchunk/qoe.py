"""Per-second QoE scoring of playback outcomes, plus the evaluation
metrics derived from it (rebuffer ratio, VMAF fluctuation, improvement
over a baseline, byte overhead).

QoE is a weighted sum at 1-second cadence:

    total = lambda_per_s * sum(v_t)  -  beta * rebuffer_seconds
            - gamma * sum(|v_t - v_{t-1}|)

Quality accrues only over seconds actually played; the switching sum runs
over the played-second subsequence (full-stall slots are skipped, so the
pair straddling a stall is still compared). Startup delay is charged as
rebuffering at the full beta, same as any mid-playback stall.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .media import Chunking, VideoMeta
from .simulator import SimOutcome

# bucket -> evaluation-time VMAF model
DEFAULT_EVAL_MODELS: Mapping[str, str] = {"SLOW": "mobile", "MEDIUM": "hdtv", "FAST": "uhd4k"}
DEFAULT_DECISION_MODEL = "uhd4k"


@dataclass(frozen=True)
class QoeWeights:
    lambda_per_s: float = 0.25
    beta: float = 100.0
    gamma: float = 1.0
    decision_model: str = DEFAULT_DECISION_MODEL
    eval_model: str = "uhd4k"

    def __post_init__(self) -> None:
        if self.lambda_per_s < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("QoE weights must be non-negative")


@dataclass(frozen=True)
class QoeBreakdown:
    quality_sum: float
    rebuffer_s: float
    switching_sum: float
    total: float
    rebuffer_ratio: float        # rebuffer seconds per minute of video
    vmaf_fluctuation_raw: float  # mean |dv| per second of video
    mean_vmaf: float


def qoe(outcome: SimOutcome, weights: QoeWeights | None = None,
        model: str | None = None) -> QoeBreakdown:
    """Score one playback outcome under the requested VMAF model."""
    w = weights or QoeWeights()
    m = model or w.eval_model
    duration = outcome.video_duration

    if outcome.per_second and m not in outcome.per_second[0].vmaf:
        raise ValueError(f"VMAF model {m!r} missing from outcome series")

    quality_sum = 0.0
    switching_sum = 0.0
    remaining = duration
    prev_v: float | None = None
    for sample in outcome.per_second:
        played = min(1.0 - sample.rebuffer_fraction, remaining)
        if played <= 0.0:
            continue
        v = sample.vmaf[m]
        quality_sum += v * played
        if prev_v is not None:
            switching_sum += abs(v - prev_v)
        prev_v = v
        remaining -= played

    rebuffer_s = outcome.total_rebuffer_s
    total = w.lambda_per_s * quality_sum - w.beta * rebuffer_s - w.gamma * switching_sum
    return QoeBreakdown(
        quality_sum=quality_sum,
        rebuffer_s=rebuffer_s,
        switching_sum=switching_sum,
        total=total,
        rebuffer_ratio=60.0 * rebuffer_s / duration if duration > 0 else 0.0,
        vmaf_fluctuation_raw=switching_sum / duration if duration > 0 else 0.0,
        mean_vmaf=quality_sum / duration if duration > 0 else 0.0,
    )


def qoe_max(playback_duration: float, weights: QoeWeights | None = None) -> float:
    """Highest achievable total: VMAF 100 throughout, no stalls, no switches."""
    w = weights or QoeWeights()
    return w.lambda_per_s * 100.0 * playback_duration


def qoe_improvement(q_new: float, q_baseline: float, q_max: float) -> float:
    """Improvement as a percentage of the maximum achievable QoE (comparing
    raw totals directly would only inflate the numbers)."""
    if q_max <= 0:
        raise ValueError(f"q_max must be positive, got {q_max}")
    return 100.0 * (q_new - q_baseline) / q_max


def rebuffer_ratio(outcome: SimOutcome) -> float:
    """Rebuffer seconds (startup included) per minute of video."""
    if outcome.video_duration <= 0:
        raise ValueError("outcome has no playback duration")
    return 60.0 * outcome.total_rebuffer_s / outcome.video_duration


def fluctuation_normalized(raw: float, baseline_raw: float) -> float:
    """Per-run mean |dv|/s normalized by the constant-chunking corpus mean."""
    if baseline_raw <= 0:
        raise ValueError(f"baseline fluctuation must be positive, got {baseline_raw}")
    return raw / baseline_raw


def byte_overhead(chunking: Chunking, video: VideoMeta,
                  baseline_chunking: Chunking | None = None) -> float:
    """Extra encoded bytes of the augmentations, as a percentage of all
    base-track bytes. With a baseline given, its augmentation bytes are
    subtracted (segmentation never changes base-track bytes)."""
    base_bytes = sum(td.bytes for f in video.fragments for td in f.tracks)
    aug_bytes = sum(a.bytes for a in chunking.augmentations)
    if baseline_chunking is not None:
        aug_bytes -= sum(a.bytes for a in baseline_chunking.augmentations)
    return 100.0 * aug_bytes / base_bytes
