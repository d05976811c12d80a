"""Network trace ingestion, bucketing, and train/test splitting.

Two on-disk formats are supported:

* cooked CSV: lines of ``t_seconds,mbps``. Bandwidth is piecewise-constant
  between samples; the final sample marks the end of the trace.
* mahimahi packet-delivery logs: one millisecond timestamp per delivery
  opportunity. These are converted to a piecewise-constant signal by
  counting opportunities in fixed windows.

Traces are immutable after load. The bandwidth signal extends past the last
sample by holding its value; looping (for videos that outlast the trace) is
applied by the callers that ask for it.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CORPUS_SCHEMA = "abrchunk/corpus/1"

SLOW, MEDIUM, FAST = "SLOW", "MEDIUM", "FAST"
BUCKETS = (SLOW, MEDIUM, FAST)

# mean-throughput boundaries in Mbps; values on a boundary go upward
SLOW_BELOW_MBPS = 1.5
FAST_AT_MBPS = 4.0

DEFAULT_MTU_BYTES = 1500
DEFAULT_WINDOW_MS = 500
DEFAULT_MIN_DURATION_S = 120.0


class TraceFormatError(ValueError):
    """Raised for unreadable or invariant-violating trace files."""


class StalledTraceError(RuntimeError):
    """Raised when a download can never finish because the trace delivers
    zero bandwidth forever."""


@dataclass(frozen=True)
class NetworkTrace:
    id: str
    samples: tuple[tuple[float, float], ...]  # (t seconds, Mbps)
    source: str = "cooked"  # "cooked" | "mahimahi"

    def __post_init__(self) -> None:
        if len(self.samples) < 2:
            raise TraceFormatError(f"trace {self.id}: needs at least 2 samples")
        if self.samples[0][0] != 0.0:
            raise TraceFormatError(f"trace {self.id}: time must start at 0")
        prev = -math.inf
        for t, bw in self.samples:
            if t <= prev:
                raise TraceFormatError(f"trace {self.id}: non-monotone time at t={t}")
            if bw < 0:
                raise TraceFormatError(f"trace {self.id}: negative bandwidth at t={t}")
            prev = t

    @property
    def duration(self) -> float:
        return self.samples[-1][0]

    def mean_throughput_mbps(self) -> float:
        """Time-weighted mean over [0, duration); the final sample is the
        end marker and carries no weight."""
        total = 0.0
        for (t0, bw), (t1, _) in zip(self.samples, self.samples[1:]):
            total += bw * (t1 - t0)
        return total / self.duration

    @property
    def bucket(self) -> str:
        return bucket_of(self.mean_throughput_mbps())

    def bandwidth_at(self, t: float, looping: bool = False) -> float:
        if looping and t >= self.duration:
            t = t % self.duration
        times = [s[0] for s in self.samples]
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(self.samples) - 1)
        return self.samples[i][1]


def bucket_of(mean_mbps: float) -> str:
    if mean_mbps < SLOW_BELOW_MBPS:
        return SLOW
    if mean_mbps < FAST_AT_MBPS:
        return MEDIUM
    return FAST


def bucket(trace: NetworkTrace) -> str:
    return trace.bucket


# ---------------------------------------------------------------------------
# Bandwidth integration (used by the playback simulator)
# ---------------------------------------------------------------------------

class TraceSignal:
    """Cumulative-bits view of a trace so delivery times can be inverted in
    O(log n). One instance per (trace, looping) pair; read-only."""

    def __init__(self, trace: NetworkTrace, looping: bool = True):
        self.trace = trace
        self.looping = looping
        self.times = np.array([s[0] for s in trace.samples])
        self.bps = np.array([s[1] for s in trace.samples]) * 1e6
        # prefix bits over one pass of the trace; the final sample only
        # matters past the end (non-looping extension)
        deltas = np.diff(self.times)
        self.prefix_bits = np.concatenate([[0.0], np.cumsum(self.bps[:-1] * deltas)])
        self.period = float(self.times[-1])
        self.period_bits = float(self.prefix_bits[-1])

    def _bits_within(self, x: float) -> float:
        i = int(np.searchsorted(self.times, x, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2)
        return float(self.prefix_bits[i] + self.bps[i] * (x - self.times[i]))

    def bits_until(self, t: float) -> float:
        """Bits delivered over [0, t]."""
        if t <= self.period:
            return self._bits_within(t)
        if self.looping:
            loops = math.floor(t / self.period)
            return loops * self.period_bits + self._bits_within(t - loops * self.period)
        return self.period_bits + float(self.bps[-1]) * (t - self.period)

    def time_to_deliver(self, start: float, bits: float) -> float:
        """Seconds after ``start`` until ``bits`` have been delivered."""
        if bits <= 0:
            return 0.0
        target = self.bits_until(start) + bits
        if self.looping:
            if self.period_bits <= 0:
                raise StalledTraceError(f"trace {self.trace.id}: stalled trace")
            loops = math.floor(target / self.period_bits)
            rem = target - loops * self.period_bits
            if rem == 0:  # exact multiple: finish within the previous pass
                loops -= 1
                rem = self.period_bits
            return loops * self.period + self._invert_within(rem) - start
        if target <= self.period_bits:
            return self._invert_within(target) - start
        if self.bps[-1] <= 0:
            raise StalledTraceError(f"trace {self.trace.id}: stalled trace")
        return self.period + (target - self.period_bits) / float(self.bps[-1]) - start

    def _invert_within(self, bits: float) -> float:
        """Earliest x in (0, period] where bits_until(x) >= bits, for
        0 < bits <= period_bits."""
        j = int(np.searchsorted(self.prefix_bits, bits, side="left"))
        if self.prefix_bits[j] == bits:
            return float(self.times[j])
        i = j - 1
        return float(self.times[i] + (bits - self.prefix_bits[i]) / self.bps[i])


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------

def load_cooked(path: str | Path) -> NetworkTrace:
    """Load a cooked CSV trace of ``t_seconds,mbps`` lines."""
    path = Path(path)
    samples: list[tuple[float, float]] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceFormatError(f"{path}:{lineno}: expected 't,mbps', got {line!r}")
        try:
            samples.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
    if not samples:
        raise TraceFormatError(f"{path}: empty trace file")
    return NetworkTrace(id=path.stem, samples=tuple(samples), source="cooked")


def load_mahimahi(path: str | Path, mtu_bytes: int = DEFAULT_MTU_BYTES,
                  window_ms: int = DEFAULT_WINDOW_MS) -> NetworkTrace:
    """Convert a mahimahi packet-delivery log into a bandwidth trace.

    Each line is a millisecond timestamp of one MTU-sized delivery
    opportunity; opportunities are counted in fixed windows and each window
    becomes one piecewise-constant bandwidth sample."""
    path = Path(path)
    stamps: list[int] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            stamps.append(int(line))
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: bad timestamp {line!r}") from exc
    if not stamps:
        raise TraceFormatError(f"{path}: empty mahimahi trace")
    max_t = max(stamps)
    n_windows = max(1, math.ceil(max_t / window_ms))
    counts = np.zeros(n_windows, dtype=np.int64)
    for t in stamps:
        counts[min(t // window_ms, n_windows - 1)] += 1
    window_s = window_ms / 1000.0
    bw = counts * mtu_bytes * 8.0 / window_s / 1e6  # Mbps per window
    samples = [(w * window_s, float(bw[w])) for w in range(n_windows)]
    samples.append((n_windows * window_s, float(bw[-1])))
    return NetworkTrace(id=path.stem, samples=tuple(samples), source="mahimahi")


def load_trace(path: str | Path, source: str) -> NetworkTrace:
    if source == "cooked":
        return load_cooked(path)
    if source == "mahimahi":
        return load_mahimahi(path)
    raise TraceFormatError(f"unknown trace format {source!r}")


# ---------------------------------------------------------------------------
# Corpus: bucketing manifest + train/test split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceCorpus:
    traces: tuple[NetworkTrace, ...]
    split: dict[str, str] = field(default_factory=dict)  # trace id -> "train" | "test"
    paths: dict[str, str] = field(default_factory=dict)  # trace id -> source file

    def subset(self, bucket_name: str | None = None, split: str | None = None) -> tuple[NetworkTrace, ...]:
        out = []
        for tr in self.traces:
            if bucket_name is not None and tr.bucket != bucket_name:
                continue
            if split is not None and self.split.get(tr.id) != split:
                continue
            out.append(tr)
        return tuple(out)


def split_corpus(traces: tuple[NetworkTrace, ...], train_fraction: float = 0.20,
                 seed: int = 0, paths: dict[str, str] | None = None) -> TraceCorpus:
    """Stratified-by-bucket deterministic split. Per bucket, round(fraction *
    count) traces go to train (round half up)."""
    split: dict[str, str] = {}
    rng = random.Random(seed)
    for b in BUCKETS:
        ids = sorted(tr.id for tr in traces if tr.bucket == b)
        rng.shuffle(ids)
        n_train = int(train_fraction * len(ids) + 0.5)
        for k, tid in enumerate(ids):
            split[tid] = "train" if k < n_train else "test"
    return TraceCorpus(traces=tuple(traces), split=split, paths=dict(paths or {}))


def build_corpus(paths: list[str | Path], source: str, train_fraction: float = 0.20,
                 seed: int = 0, min_duration_s: float = DEFAULT_MIN_DURATION_S) -> TraceCorpus:
    """Load, filter by minimum duration, and split a set of trace files."""
    traces = []
    path_map = {}
    for p in paths:
        tr = load_trace(p, source)
        if tr.duration < min_duration_s:
            continue
        traces.append(tr)
        path_map[tr.id] = str(p)
    return split_corpus(tuple(traces), train_fraction, seed, paths=path_map)


def corpus_to_manifest(corpus: TraceCorpus) -> dict:
    return {
        "schema": CORPUS_SCHEMA,
        "traces": [
            {
                "id": tr.id,
                "path": corpus.paths.get(tr.id, ""),
                "source": tr.source,
                "bucket": tr.bucket,
                "split": corpus.split.get(tr.id, "test"),
            }
            for tr in corpus.traces
        ],
    }


def save_manifest(corpus: TraceCorpus, path: str | Path) -> None:
    doc = corpus_to_manifest(corpus)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_corpus(manifest_path: str | Path) -> TraceCorpus:
    """Load a corpus manifest and every trace file it references. Relative
    paths resolve against the manifest's directory."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    if doc.get("schema") != CORPUS_SCHEMA:
        raise TraceFormatError(f"unsupported corpus schema {doc.get('schema')!r}")
    traces = []
    split = {}
    paths = {}
    for entry in doc["traces"]:
        p = Path(entry["path"])
        if not p.is_absolute():
            p = manifest_path.parent / p
        tr = load_trace(p, entry["source"])
        tr = NetworkTrace(id=entry["id"], samples=tr.samples, source=tr.source)
        traces.append(tr)
        split[tr.id] = entry["split"]
        paths[tr.id] = str(entry["path"])
    return TraceCorpus(traces=tuple(traces), split=split, paths=paths)
