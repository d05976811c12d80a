"""Adaptation-aware video chunking: variable-length segmentation, selective
bitrate augmentation, and a deterministic ABR playback simulator."""

from .abr import AbrContext, BbParams, BufferBased, Option, RateBased, RobustMpc, estimate_bandwidth, make_abr
from .augmenter import AugConfig, augment, lambda_b, lambda_bv, lambda_v, sigma_bv
from .media import (Augmentation, Chunking, Fragment, ParseError, Segment, Track,
                    ValidationError, VideoIndex, VideoMeta, load_chunking, load_video,
                    save_chunking, save_video, segment_stats)
from .qoe import QoeBreakdown, QoeWeights, byte_overhead, fluctuation_normalized, qoe, qoe_improvement, rebuffer_ratio
from .segmenter import SegConfig, SegmenterDeps, enumerate_candidates, segment
from .simulator import SimConfig, SimOutcome, download_time, simulate, throughput_sample
from .synth import SynthProfile, default_ladder, synth_video
from .traces import NetworkTrace, TraceCorpus, bucket_of, load_cooked, load_mahimahi, split_corpus

__version__ = "0.1.0"
