"""Experiment orchestration: segment -> augment -> simulate -> evaluate
across a (video x segmentation x augmentation x ABR x trace-bucket) matrix,
with train traces driving decisions and held-out test traces driving every
reported number.

One chunking is produced per (video, segmentation, augmentation, ABR) from
the corpus-wide train split; each trace bucket then evaluates that chunking
on its own test traces under its own VMAF model. Improvements are paired
per trace against the constant-segmentation/no-augmentation baseline cell,
normalized by the maximum achievable QoE.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from . import report as report_mod
from .augmenter import AugConfig, augment
from .media import Chunking, VideoIndex, VideoMeta, load_video, save_chunking, validate_chunking
from .qoe import DEFAULT_EVAL_MODELS, QoeWeights, byte_overhead, qoe, qoe_improvement, qoe_max
from .segmenter import SegConfig, SegmenterDeps, segment
from .simulator import SimConfig, simulate
from .traces import BUCKETS, TraceCorpus, load_corpus

EXPERIMENT_SCHEMA = "abrchunk/experiment/1"

BASELINE_SEGMENTATION = "constant"
BASELINE_AUGMENTATION = "none"


@dataclass(frozen=True)
class ExperimentSpec:
    videos: tuple[str, ...]
    traces_manifest: str
    segmentations: tuple[str, ...]
    augmentations: tuple[str, ...]       # "none" or augmenter strategy names
    abrs: tuple[str, ...]
    buckets: tuple[str, ...] = BUCKETS
    weights: QoeWeights = QoeWeights()
    eval_models: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_EVAL_MODELS))
    sim: SimConfig = SimConfig()
    seg_options: Mapping[str, object] = field(default_factory=dict)
    aug_options: Mapping[str, object] = field(default_factory=dict)
    seed: int = 0
    jobs: int | None = None
    figures: bool = True

    def __post_init__(self) -> None:
        if not self.videos or not self.segmentations or not self.augmentations or not self.abrs:
            raise ValueError("experiment matrix must be nonempty")


def load_spec(path: str | Path) -> ExperimentSpec:
    doc = yaml.safe_load(Path(path).read_text())
    if doc.get("schema") != EXPERIMENT_SCHEMA:
        raise ValueError(f"unsupported experiment schema {doc.get('schema')!r}")
    base = Path(path).parent

    def resolve(p: str) -> str:
        q = Path(p)
        return str(q if q.is_absolute() else base / q)

    weights = QoeWeights(**doc.get("weights", {}))
    sim = SimConfig(**doc.get("sim", {}))
    matrix = doc.get("matrix", {})
    return ExperimentSpec(
        videos=tuple(resolve(v) for v in doc["videos"]),
        traces_manifest=resolve(doc["traces"]),
        segmentations=tuple(matrix.get("segmentation", ["constant"])),
        augmentations=tuple(matrix.get("augmentation", ["none"])),
        abrs=tuple(matrix.get("abr", ["bb"])),
        buckets=tuple(matrix.get("buckets", BUCKETS)),
        weights=weights,
        eval_models=doc.get("eval_models", dict(DEFAULT_EVAL_MODELS)),
        sim=sim,
        seg_options=doc.get("segmenter", {}),
        aug_options=doc.get("augmenter", {}),
        seed=int(doc.get("seed", 0)),
        jobs=doc.get("jobs"),
        figures=bool(doc.get("figures", True)),
    )


# ---------------------------------------------------------------------------
# Workers
# ---------------------------------------------------------------------------

def _make_abr(name: str):
    from .abr import make_abr
    return make_abr(name)


def build_chunking(video: VideoMeta, seg_name: str, aug_name: str, abr_name: str,
                   train_traces, spec: ExperimentSpec) -> Chunking:
    deps = SegmenterDeps(
        abr=_make_abr(abr_name),
        traces=tuple(train_traces),
        weights=spec.weights,
        sim=spec.sim,
        decision_model=spec.weights.decision_model,
    )
    seg_cfg = SegConfig.for_strategy(seg_name, **dict(spec.seg_options))
    segments = segment(video, seg_cfg, deps)
    augs = ()
    if aug_name != BASELINE_AUGMENTATION:
        aug_cfg = AugConfig(strategy=aug_name,
                            decision_model=spec.weights.decision_model,
                            **dict(spec.aug_options))
        augs = augment(video, segments, aug_cfg, deps)
    chunking = Chunking(segments=tuple(segments), augmentations=tuple(augs))
    validate_chunking(chunking, video)
    return chunking


def _chunking_worker(args) -> tuple[tuple, Chunking | None, str | None]:
    key, video, train_traces, spec = args
    try:
        _, seg_name, aug_name, abr_name = key
        return key, build_chunking(video, seg_name, aug_name, abr_name, train_traces, spec), None
    except Exception as exc:  # noqa: BLE001 — cell failures must not kill the run
        return key, None, f"{type(exc).__name__}: {exc}"


def evaluate_cell(video: VideoMeta, index: VideoIndex, chunking: Chunking, abr_name: str,
                  bucket: str, test_traces, spec: ExperimentSpec) -> list[dict]:
    """Per-trace metric rows for one matrix cell, on test traces only."""
    model = spec.eval_models[bucket]
    abr = _make_abr(abr_name)
    rows = []
    for tr in test_traces:
        outcome = simulate(video, chunking, abr, tr, spec.sim,
                           decision_model=spec.weights.decision_model, index=index)
        b = qoe(outcome, spec.weights, model)
        rows.append({
            "video_id": video.video_id,
            "trace_id": tr.id,
            "split": "test",
            "eval_model": model,
            "qoe_total": b.total,
            "quality_sum": b.quality_sum,
            "rebuffer_s": b.rebuffer_s,
            "switching_sum": b.switching_sum,
            "rebuffer_ratio": b.rebuffer_ratio,
            "fluctuation_raw": b.vmaf_fluctuation_raw,
            "mean_vmaf": b.mean_vmaf,
            "startup_delay_s": outcome.startup_delay,
            "wall_time_s": outcome.wall_time,
        })
    return rows


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    detail_rows: list[dict]
    rollup_rows: list[dict]
    failures: list[dict]
    outputs: list[Path]


def run_pipeline(spec: ExperimentSpec, output_dir: str | Path) -> PipelineResult:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(spec.traces_manifest)
    videos: dict[str, VideoMeta] = {}
    for p in spec.videos:
        v = load_video(p)
        if v.video_id in videos:
            raise ValueError(f"duplicate video_id {v.video_id!r} in experiment inputs")
        videos[v.video_id] = v
    indexes = {vid: VideoIndex(v) for vid, v in videos.items()}

    train = sorted(corpus.subset(split="train"), key=lambda t: t.id)
    failures: list[dict] = []

    # 1) chunkings: one per (video, segmentation, augmentation, abr);
    # baseline cells are always included as the comparison anchor
    combos = {(vid, s, a, ab)
              for vid in videos
              for s in spec.segmentations
              for a in spec.augmentations
              for ab in spec.abrs}
    combos |= {(vid, BASELINE_SEGMENTATION, BASELINE_AUGMENTATION, ab)
               for vid in videos for ab in spec.abrs}
    jobs = [((vid, s, a, ab), videos[vid], train, spec)
            for (vid, s, a, ab) in sorted(combos)]

    chunkings: dict[tuple, Chunking] = {}
    if spec.jobs is not None and spec.jobs <= 1:
        results = [_chunking_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_chunking_worker, jobs))
    for key, chunking, err in results:
        if err is not None:
            failures.append({"cell": "/".join(key), "stage": "chunking", "error": err})
        else:
            chunkings[key] = chunking
            vid, s, a, ab = key
            save_chunking(chunking, out / f"chunking_{vid}_{s}_{a}_{ab}.json")

    # 2) evaluation on each bucket's test traces
    detail_rows: list[dict] = []
    for key in sorted(chunkings):
        vid, s, a, ab = key
        for bucket in spec.buckets:
            test = sorted(corpus.subset(bucket_name=bucket, split="test"), key=lambda t: t.id)
            if not test:
                continue
            try:
                rows = evaluate_cell(videos[vid], indexes[vid], chunkings[key], ab,
                                     bucket, test, spec)
            except Exception as exc:  # noqa: BLE001
                failures.append({"cell": "/".join(key) + "/" + bucket,
                                 "stage": "evaluate", "error": f"{type(exc).__name__}: {exc}"})
                continue
            for r in rows:
                r.update({"segmentation": s, "augmentation": a, "abr": ab, "bucket": bucket})
            detail_rows.extend(rows)

    # 3) pair per-trace improvements against the baseline cell
    baseline_qoe: dict[tuple, float] = {}
    for r in detail_rows:
        if r["segmentation"] == BASELINE_SEGMENTATION and r["augmentation"] == BASELINE_AUGMENTATION:
            baseline_qoe[(r["video_id"], r["abr"], r["bucket"], r["trace_id"])] = r["qoe_total"]
    for r in detail_rows:
        base = baseline_qoe.get((r["video_id"], r["abr"], r["bucket"], r["trace_id"]))
        if base is None:
            r["improvement_pct"] = ""
            continue
        q_cap = qoe_max(videos[r["video_id"]].total_duration, spec.weights)
        r["improvement_pct"] = qoe_improvement(r["qoe_total"], base, q_cap)

    # corpus-wide constant-baseline fluctuation, the normalizer for stability
    baseline_flux = [r["fluctuation_raw"] for r in detail_rows
                     if r["segmentation"] == BASELINE_SEGMENTATION
                     and r["augmentation"] == BASELINE_AUGMENTATION]
    flux_norm = float(np.mean(baseline_flux)) if baseline_flux else 0.0

    # 4) roll up per cell
    rollup_rows: list[dict] = []
    cells = sorted({(r["video_id"], r["segmentation"], r["augmentation"], r["abr"], r["bucket"])
                    for r in detail_rows})
    for cell in cells:
        vid, s, a, ab, bucket = cell
        rows = [r for r in detail_rows
                if (r["video_id"], r["segmentation"], r["augmentation"], r["abr"], r["bucket"]) == cell]
        imps = [r["improvement_pct"] for r in rows if r["improvement_pct"] != ""]
        chunking = chunkings[(vid, s, a, ab)]
        flux_mean = float(np.mean([r["fluctuation_raw"] for r in rows]))
        rollup_rows.append({
            "video_id": vid, "segmentation": s, "augmentation": a, "abr": ab,
            "bucket": bucket, "eval_model": spec.eval_models[bucket],
            "n_traces": len(rows),
            "n_segments": len(chunking.segments),
            "n_augmentations": len(chunking.augmentations),
            "byte_overhead_pct": byte_overhead(chunking, videos[vid]),
            "qoe_mean": float(np.mean([r["qoe_total"] for r in rows])),
            "improvement_mean_pct": float(np.mean(imps)) if imps else "",
            "improvement_p5_pct": float(np.percentile(imps, 5)) if imps else "",
            "improvement_p95_pct": float(np.percentile(imps, 95)) if imps else "",
            "rebuffer_ratio_mean": float(np.mean([r["rebuffer_ratio"] for r in rows])),
            "fluctuation_raw_mean": flux_mean,
            "fluctuation_normalized": flux_mean / flux_norm if flux_norm > 0 else "",
            "mean_vmaf_mean": float(np.mean([r["mean_vmaf"] for r in rows])),
        })

    outputs = []
    outputs.append(report_mod.write_csv(out / "details.csv", report_mod.DETAIL_COLUMNS, detail_rows))
    outputs.append(report_mod.write_csv(out / "report.csv", report_mod.ROLLUP_COLUMNS, rollup_rows))
    if failures:
        outputs.append(report_mod.write_csv(out / "failures.csv",
                                            ("cell", "stage", "error"), failures))
    (out / "experiment.json").write_text(json.dumps({
        "schema": EXPERIMENT_SCHEMA,
        "videos": list(spec.videos),
        "traces": spec.traces_manifest,
        "segmentations": list(spec.segmentations),
        "augmentations": list(spec.augmentations),
        "abrs": list(spec.abrs),
        "buckets": list(spec.buckets),
        "seed": spec.seed,
    }, indent=2, sort_keys=True) + "\n")
    outputs.append(out / "experiment.json")
    if spec.figures:
        outputs.extend(report_mod.render_report_figures(rollup_rows, out))
    return PipelineResult(detail_rows=detail_rows, rollup_rows=rollup_rows,
                          failures=failures, outputs=outputs)


# ---------------------------------------------------------------------------
# Report comparison
# ---------------------------------------------------------------------------

CELL_KEY = ("video_id", "segmentation", "augmentation", "abr", "bucket")
DELTA_METRICS = ("improvement_mean_pct", "rebuffer_ratio_mean", "fluctuation_raw_mean",
                 "mean_vmaf_mean", "byte_overhead_pct")


def compare_reports(path_a: str | Path, path_b: str | Path) -> list[dict]:
    """Per-cell metric deltas (B minus A) between two rollup reports.
    Raises on cells of A missing from B."""
    rows_a = report_mod.read_csv(path_a)
    rows_b = report_mod.read_csv(path_b)
    by_key_b = {tuple(r[k] for k in CELL_KEY): r for r in rows_b}
    out = []
    for ra in rows_a:
        key = tuple(ra[k] for k in CELL_KEY)
        rb = by_key_b.get(key)
        if rb is None:
            raise ValueError(f"report B is missing cell {'/'.join(key)}")
        row = dict(zip(CELL_KEY, key))
        for metric in DELTA_METRICS:
            va, vb = ra.get(metric, ""), rb.get(metric, "")
            if va == "" or vb == "":
                row[f"delta_{metric}"] = ""
            else:
                row[f"delta_{metric}"] = float(vb) - float(va)
        out.append(row)
    return out
