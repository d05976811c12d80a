"""Playback engine: download arithmetic, event loop, conservation."""

import math

import numpy as np
import pytest

from abrchunk.abr import make_abr
from abrchunk.media import Chunking, VideoIndex, constant_segmentation
from abrchunk.simulator import (ChunkingSupply, PlayerState, SimConfig, TraceSignal,
                                download_time, finalize, run_segments, simulate,
                                throughput_sample)
from abrchunk.traces import NetworkTrace, StalledTraceError
from fixture_lib import const_trace, make_video, noisy_trace, uniform_video


class TestDownloadTime:
    def test_constant_closed_form(self):
        tr = const_trace(2.0, duration=300.0)
        assert download_time(tr, 0.0, 1_000_000, 0.08) == pytest.approx(4.08, abs=1e-9)

    def test_zero_payload_is_rtt(self):
        tr = const_trace(2.0)
        assert download_time(tr, 0.0, 0, 0.08) == 0.08

    def test_piecewise_integration(self):
        tr = NetworkTrace(id="pw", samples=((0.0, 1.0), (4.0, 3.0), (300.0, 3.0)))
        assert download_time(tr, 0.0, 1_000_000, 0.0) == pytest.approx(4.0 + 4.0 / 3.0)

    def test_looping_short_trace(self):
        tr = const_trace(1.0, duration=5.0)
        # 12 Mbit over a 5 s loop of 1 Mbps: 12 s
        assert download_time(tr, 0.0, 1_500_000, 0.0) == pytest.approx(12.0)

    def test_stalled_trace_raises(self):
        tr = NetworkTrace(id="dead", samples=((0.0, 0.0), (5.0, 0.0)))
        with pytest.raises(StalledTraceError):
            download_time(tr, 0.0, 1000, 0.0)

    def test_exact_product_identity_rtt_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            bw = float(rng.uniform(0.2, 50.0))
            nbytes = int(rng.integers(10_000, 5_000_000))
            tr = const_trace(bw, duration=10_000.0)
            dt = download_time(tr, float(rng.uniform(0, 500)), nbytes, 0.0)
            assert dt * bw * 1e6 == pytest.approx(8.0 * nbytes, rel=1e-9)


class TestThroughputSample:
    def test_quirk_on(self):
        cfg = SimConfig(rtt=0.08, rtt_in_throughput_sample=True)
        assert throughput_sample(1_000_000, 4.08, 0.08, cfg) == pytest.approx(8.0 / 4.08)

    def test_quirk_off(self):
        cfg = SimConfig(rtt=0.08, rtt_in_throughput_sample=False)
        assert throughput_sample(1_000_000, 4.08, 0.08, cfg) == pytest.approx(2.0)

    def test_tiny_segment_underestimation(self):
        # 10 kB in 0.12 s (0.08 of it RTT): quirk reports 0.667 Mbps, truth is 2.0
        cfg_quirk = SimConfig(rtt=0.08, rtt_in_throughput_sample=True)
        cfg_clean = SimConfig(rtt=0.08, rtt_in_throughput_sample=False)
        assert throughput_sample(10_000, 0.12, 0.08, cfg_quirk) == pytest.approx(0.6667, rel=1e-3)
        assert throughput_sample(10_000, 0.12, 0.08, cfg_clean) == pytest.approx(2.0)


def single_track_video(n_segments=12, seg_duration=5.0, seg_bytes=1_250_000):
    durations = [seg_duration] * n_segments
    bytes_matrix = [[seg_bytes] for _ in range(n_segments)]
    vmaf_matrix = [[70.0] for _ in range(n_segments)]
    kbps = 8.0 * seg_bytes / 1000.0 / seg_duration
    return make_video(durations, bytes_matrix, vmaf_matrix, kbps_list=(kbps,))


class TestSimulate:
    def test_hand_rolled_schedule(self):
        video = single_track_video()
        chunking = Chunking(segments=constant_segmentation(video, 5.0))
        trace = const_trace(10.0, duration=600.0)
        cfg = SimConfig(rtt=0.0)
        out = simulate(video, chunking, make_abr("rb"), trace, cfg)
        # 1.25 MB at 10 Mbps: 1.0 s per download; startup after two segments
        for d in out.downloads:
            assert d.end - d.start == pytest.approx(1.0)
        assert out.startup_delay == pytest.approx(2.0)
        assert out.rebuffers == ()
        assert out.video_duration == pytest.approx(60.0)
        assert out.wall_time == pytest.approx(62.0)
        assert len(out.per_second) == 60

    def test_demand_exceeds_supply_rebuffers(self):
        video = single_track_video(n_segments=8, seg_bytes=250_000)  # 0.4 Mbps track
        chunking = Chunking(segments=constant_segmentation(video, 5.0))
        trace = const_trace(0.1, duration=3000.0)
        out = simulate(video, chunking, make_abr("rb"), trace, SimConfig())
        assert sum(d for _, d in out.rebuffers) > 0

    def test_determinism(self):
        video = uniform_video(20, duration=2.0)
        chunking = Chunking(segments=constant_segmentation(video, 5.0))
        trace = noisy_trace(2.0, seed=5)
        a = simulate(video, chunking, make_abr("rmpc-a"), trace, SimConfig())
        b = simulate(video, chunking, make_abr("rmpc-a"), trace, SimConfig())
        assert a.to_dict() == b.to_dict()

    def test_short_video_starts_at_last_segment(self):
        # total video shorter than the startup buffer: playback must begin
        video = single_track_video(n_segments=2, seg_duration=2.0, seg_bytes=500_000)
        chunking = Chunking(segments=constant_segmentation(video, 2.0))
        out = simulate(video, chunking, make_abr("rb"), const_trace(4.0), SimConfig(rtt=0.0))
        assert out.started
        assert out.video_duration == pytest.approx(4.0)

    def test_per_second_series_length_with_stalls(self):
        video = single_track_video(n_segments=6, seg_bytes=1_250_000)  # 2 Mbps track
        chunking = Chunking(segments=constant_segmentation(video, 5.0))
        out = simulate(video, chunking, make_abr("rb"), const_trace(1.0), SimConfig(rtt=0.0))
        stall_s = sum(d for _, d in out.rebuffers)
        assert len(out.per_second) == math.ceil(out.video_duration + stall_s - 1e-9)


class TestConservation:
    def check(self, out):
        stall_s = sum(d for _, d in out.rebuffers)
        assert abs(out.wall_time - (out.startup_delay + out.video_duration + stall_s)) < 1e-6

    @pytest.mark.parametrize("abr_name", ["rb", "bb", "rmpc-o", "rmpc-a"])
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_random_battery(self, abr_name, seed):
        video = uniform_video(15, duration=2.0)
        chunking = Chunking(segments=constant_segmentation(video, 4.0))
        trace = noisy_trace(1.5 + seed, seed=seed)
        out = simulate(video, chunking, make_abr(abr_name), trace, SimConfig())
        self.check(out)


class TestBufferInvariants:
    def test_buffer_bounded_at_request_instants(self):
        video = uniform_video(40, duration=2.0)
        chunking = Chunking(segments=constant_segmentation(video, 4.0))
        cfg = SimConfig(rtt=0.0, max_buffer=20.0, startup_buffer=10.0)
        out = simulate(video, chunking, make_abr("bb"), const_trace(50.0), cfg)
        # reconstruct the buffer level at each request instant
        stalls = list(out.rebuffers)
        for i, d in enumerate(out.downloads):
            downloaded = sum(x.option.duration for x in out.downloads[:i])
            if d.start >= out.startup_delay:
                stalled_before = sum(min(s + dur, d.start) - s for s, dur in stalls if s < d.start)
                played = (d.start - out.startup_delay) - stalled_before
            else:
                played = 0.0
            buffer_level = downloaded - played
            assert buffer_level <= cfg.max_buffer + 1e-6

    def test_monotone_bandwidth_never_hurts(self):
        # doubling bandwidth must not increase rebuffering for RB/BB
        video = uniform_video(25, duration=2.0)
        chunking = Chunking(segments=constant_segmentation(video, 4.0))
        for abr_name in ("rb", "bb"):
            for seed in range(6):
                base = noisy_trace(1.0, seed=seed, trace_id="base")
                doubled = NetworkTrace(id="doubled",
                                       samples=tuple((t, 2.0 * bw) for t, bw in base.samples))
                out1 = simulate(video, chunking, make_abr(abr_name), base, SimConfig())
                out2 = simulate(video, chunking, make_abr(abr_name), doubled, SimConfig())
                assert out2.total_rebuffer_s <= out1.total_rebuffer_s + 1e-9


class TestResumability:
    def test_snapshot_resume_is_bit_identical(self):
        video = uniform_video(12, duration=2.5)
        chunking = Chunking(segments=constant_segmentation(video, 5.0))
        idx = VideoIndex(video)
        supply = ChunkingSupply(video, chunking, idx)
        trace = noisy_trace(2.5, seed=9)
        signal = TraceSignal(trace, True)
        cfg = SimConfig()
        abr = make_abr("rmpc-a")

        full = PlayerState()
        run_segments(full, supply, abr, signal, cfg)

        part = PlayerState()
        run_segments(part, supply, abr, signal, cfg, max_segments=3)
        resumed = part.copy()
        run_segments(resumed, supply, abr, signal, cfg)

        a = finalize(full, video, idx, trace.id, abr.name)
        b = finalize(resumed, video, idx, trace.id, abr.name)
        assert a.to_dict() == b.to_dict()
