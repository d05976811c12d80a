"""Command-line interface.

Subcommands cover the full workflow: ``synth`` (fixture videos), ``bucket``
(trace triage into a corpus manifest), ``segment`` and ``augment``
(chunking production), ``simulate`` (single playback run), ``evaluate``
(the full experiment matrix with CSV reports and figures), and ``compare``
(delta table between two reports).

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import media, report, traces
from .abr import ABR_NAMES, make_abr
from .augmenter import AUG_STRATEGIES, AugConfig, augment
from .media import Chunking, ParseError, ValidationError, load_chunking, load_video
from .pipeline import compare_reports, load_spec, run_pipeline
from .qoe import QoeWeights, qoe
from .segmenter import STRATEGIES, SegConfig, SegmenterDeps, segment
from .simulator import SimConfig, simulate
from .synth import SynthProfile, default_ladder, synth_video
from .traces import StalledTraceError, TraceFormatError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _add_sim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rtt", type=float, default=0.08, help="link RTT in seconds")
    p.add_argument("--max-buffer", type=float, default=60.0)
    p.add_argument("--startup-buffer", type=float, default=10.0)
    p.add_argument("--clean-throughput", action="store_true",
                   help="exclude the RTT from throughput samples (fixes the "
                        "small-segment underestimation quirk)")
    p.add_argument("--no-loop", action="store_true", help="do not loop short traces")


def _sim_config(args) -> SimConfig:
    return SimConfig(rtt=args.rtt, max_buffer=args.max_buffer,
                     startup_buffer=args.startup_buffer,
                     rtt_in_throughput_sample=not args.clean_throughput,
                     trace_looping=not args.no_loop)


def _add_weight_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda-per-s", type=float, default=0.25)
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--decision-model", default="uhd4k", choices=media.VMAF_MODELS)


def _weights(args, eval_model: str | None = None) -> QoeWeights:
    return QoeWeights(lambda_per_s=args.lambda_per_s, beta=args.beta, gamma=args.gamma,
                      decision_model=args.decision_model,
                      eval_model=eval_model or args.decision_model)


def _load_ladder(path: str | None):
    if path is None:
        return default_ladder()
    doc = json.loads(Path(path).read_text())
    entries = doc["ladder"] if isinstance(doc, dict) else doc
    return tuple(media.Track(id=int(t["id"]), kbps=float(t["kbps"]), label=str(t.get("label", "")))
                 for t in entries)


def _parse_complexity(text: str) -> tuple[tuple[float, float], ...]:
    points = []
    for part in text.split(","):
        t, c = part.split(":")
        points.append((float(t), float(c)))
    return tuple(points)


def _sim_deps(args, sim_cfg: SimConfig, weights: QoeWeights) -> SegmenterDeps | None:
    if not args.traces:
        return None
    corpus = traces.load_corpus(args.traces)
    train = tuple(sorted(corpus.subset(split="train"), key=lambda t: t.id))
    return SegmenterDeps(abr=make_abr(args.abr), traces=train, weights=weights,
                         sim=sim_cfg, decision_model=weights.decision_model)


def _write_decision_log(path: str | None, entries: list[dict]) -> None:
    if path is None:
        return
    with Path(path).open("w") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    interval = (tuple(float(x) for x in args.interval.split(":"))
                if ":" in args.interval else float(args.interval))
    profile = SynthProfile(duration_s=args.duration, keyframe_interval=interval,
                           complexity=_parse_complexity(args.complexity))
    video = synth_video(profile, _load_ladder(args.ladder), seed=args.seed,
                        video_id=args.video_id)
    media.save_video(video, args.out)
    print(f"wrote {args.out}: {video.n_fragments} fragments, "
          f"{video.total_duration:.1f}s, {video.n_tracks} tracks")
    return EXIT_OK


def cmd_bucket(args) -> int:
    corpus = traces.build_corpus(args.files, args.format, train_fraction=args.train_fraction,
                                 seed=args.seed, min_duration_s=args.min_duration)
    if not corpus.traces:
        print("no traces retained (check --min-duration)", file=sys.stderr)
        return EXIT_INVALID
    traces.save_manifest(corpus, args.out)
    counts = {b: len(corpus.subset(bucket_name=b)) for b in traces.BUCKETS}
    print(f"wrote {args.out}: {len(corpus.traces)} traces {counts}")
    return EXIT_OK


def cmd_segment(args) -> int:
    video = load_video(args.video)
    if args.validate_only:
        if args.chunking:
            media.load_chunking(args.chunking, video)
        print(f"{args.video}: valid ({video.n_fragments} fragments, {video.n_tracks} tracks)")
        return EXIT_OK
    cfg = SegConfig.for_strategy(args.strategy, **{
        k: v for k, v in {
            "k": args.k, "commit_window": args.commit_window,
            "target_len": args.target_len, "penalty_rate": args.penalty_rate,
            "byte_target": args.byte_target, "filter_width": args.filter_width,
            "aggregate": args.aggregate,
        }.items() if v is not None})
    sim_cfg = _sim_config(args)
    weights = _weights(args)
    deps = _sim_deps(args, sim_cfg, weights)
    log_entries: list[dict] = []
    segs = segment(video, cfg, deps, decision_log=log_entries)
    chunking = Chunking(segments=tuple(segs))
    media.save_chunking(chunking, args.out)
    _write_decision_log(args.decision_log, log_entries)
    print(f"wrote {args.out}: {len(segs)} segments ({args.strategy})")
    return EXIT_OK


def cmd_augment(args) -> int:
    video = load_video(args.video)
    chunking = load_chunking(args.chunking, video)
    cfg = AugConfig(strategy=args.strategy,
                    vmaf_drop_threshold=args.vmaf_drop,
                    bitrate_excess_pct=args.excess_pct,
                    vmaf_gap_threshold=args.vmaf_gap,
                    lookahead_segments=args.lookahead,
                    decision_model=args.decision_model)
    sim_cfg = _sim_config(args)
    weights = _weights(args)
    deps = _sim_deps(args, sim_cfg, weights)
    log_entries: list[dict] = []
    augs = augment(video, chunking.segments, cfg, deps, decision_log=log_entries)
    out = Chunking(segments=chunking.segments, augmentations=augs)
    media.validate_chunking(out, video)
    media.save_chunking(out, args.out)
    _write_decision_log(args.decision_log, log_entries)
    print(f"wrote {args.out}: {len(augs)} augmentations ({args.strategy})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    video = load_video(args.video)
    chunking = load_chunking(args.chunking, video)
    trace = traces.load_trace(args.trace, args.trace_format)
    sim_cfg = _sim_config(args)
    outcome = simulate(video, chunking, make_abr(args.abr), trace, sim_cfg,
                       decision_model=args.decision_model)
    Path(args.out).write_text(media.dumps_canonical(outcome.to_dict()))
    b = qoe(outcome, _weights(args, eval_model=args.eval_model))
    print(f"wrote {args.out}: qoe={b.total:.2f} rebuffer={b.rebuffer_s:.2f}s "
          f"switching={b.switching_sum:.1f} mean_vmaf={b.mean_vmaf:.1f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    spec = load_spec(args.spec)
    if args.jobs is not None:
        spec = dataclasses.replace(spec, jobs=args.jobs)
    if args.no_figures:
        spec = dataclasses.replace(spec, figures=False)
    result = run_pipeline(spec, args.out)
    print(f"wrote {len(result.outputs)} files to {args.out} "
          f"({len(result.rollup_rows)} cells, {len(result.detail_rows)} trace rows)")
    if result.failures:
        for f in result.failures:
            print(f"FAILED {f['cell']} [{f['stage']}]: {f['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_compare(args) -> int:
    deltas = compare_reports(args.report_a, args.report_b)
    columns = list(deltas[0].keys()) if deltas else []
    report.write_csv(args.out, columns, deltas)
    print(f"wrote {args.out}: {len(deltas)} cells")
    if args.figures:
        outdir = Path(args.out).parent
        report.render_compare_figure(deltas, outdir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abrchunk",
                                     description="adaptation-aware video chunking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic video metadata fixture")
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--interval", default="2",
                   help="keyframe interval seconds: fixed ('2') or a 'min:max' range")
    p.add_argument("--complexity", default="0:0.5",
                   help="piecewise-constant curve 't:c,t:c,...' with c in [0,1]")
    p.add_argument("--ladder", help="ladder JSON (default: built-in 5-rung ladder)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--video-id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bucket", help="triage trace files into a corpus manifest")
    p.add_argument("files", nargs="+")
    p.add_argument("--format", choices=("cooked", "mahimahi"), default="cooked")
    p.add_argument("--train-fraction", type=float, default=0.20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-duration", type=float, default=traces.DEFAULT_MIN_DURATION_S)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bucket)

    p = sub.add_parser("segment", help="produce a segmentation")
    p.add_argument("--video", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default="constant")
    p.add_argument("--traces", help="corpus manifest (train split feeds sim strategies)")
    p.add_argument("--abr", choices=ABR_NAMES, default="bb")
    p.add_argument("--k", type=int)
    p.add_argument("--commit-window", type=int)
    p.add_argument("--target-len", type=float)
    p.add_argument("--penalty-rate", type=float)
    p.add_argument("--byte-target", type=float)
    p.add_argument("--filter-width", type=int)
    p.add_argument("--aggregate")
    p.add_argument("--decision-log")
    p.add_argument("--validate-only", action="store_true",
                   help="validate the metadata (and --chunking, if given) and exit")
    p.add_argument("--chunking", help="chunking to validate with --validate-only")
    p.add_argument("--out", default="chunking.json")
    _add_sim_args(p)
    _add_weight_args(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("augment", help="add augmentations to a chunking")
    p.add_argument("--video", required=True)
    p.add_argument("--chunking", required=True)
    p.add_argument("--strategy", choices=AUG_STRATEGIES, default="lambda_bv")
    p.add_argument("--traces")
    p.add_argument("--abr", choices=ABR_NAMES, default="bb")
    p.add_argument("--vmaf-drop", type=float, default=8.0)
    p.add_argument("--excess-pct", type=float, default=10.0)
    p.add_argument("--vmaf-gap", type=float, default=10.0)
    p.add_argument("--lookahead", type=int, default=5)
    p.add_argument("--decision-log")
    p.add_argument("--out", required=True)
    _add_sim_args(p)
    _add_weight_args(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("simulate", help="simulate one playback and dump the outcome")
    p.add_argument("--video", required=True)
    p.add_argument("--chunking", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--trace-format", choices=("cooked", "mahimahi"), default="cooked")
    p.add_argument("--abr", choices=ABR_NAMES, default="bb")
    p.add_argument("--eval-model", choices=media.VMAF_MODELS, default="uhd4k")
    p.add_argument("--out", required=True)
    _add_sim_args(p)
    _add_weight_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="run an experiment spec end to end")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="delta table between two rollup reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ParseError, TraceFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StalledTraceError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 — CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
