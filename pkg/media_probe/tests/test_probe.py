"""Pure probing arithmetic plus keyframe probing against the fake tools."""

import json

import pytest

from media_probe.probe import (Packet, bytes_per_span, check_aligned_keyframes,
                               fragment_spans, per_second_means, probe_keyframes,
                               probe_stream)
from media_probe.tools import ToolError


class TestFragmentSpans:
    def test_basic_cut(self):
        spans = fragment_spans([0.0, 2.0, 5.0], 9.0)
        assert spans == [(0.0, 2.0), (2.0, 5.0), (5.0, 9.0)]

    def test_single_keyframe(self):
        assert fragment_spans([0.0], 4.0) == [(0.0, 4.0)]

    def test_degenerate_tail_dropped(self):
        assert fragment_spans([0.0, 4.0], 4.0) == [(0.0, 4.0)]


class TestBytesPerSpan:
    def test_ownership_by_pts(self):
        packets = [Packet(0.0, 10), Packet(0.5, 10), Packet(2.0, 100), Packet(3.9, 100)]
        spans = [(0.0, 2.0), (2.0, 4.0)]
        assert bytes_per_span(packets, spans) == [20, 200]

    def test_boundary_packet_goes_right(self):
        packets = [Packet(0.0, 1), Packet(2.0, 5)]
        assert bytes_per_span(packets, [(0.0, 2.0), (2.0, 4.0)]) == [1, 5]


class TestPerSecondMeans:
    def test_collapses_by_fps(self):
        frames = [10.0] * 30 + [20.0] * 30
        assert per_second_means(frames, 30.0, 2.0) == [10.0, 20.0]

    def test_short_tail_repeats_last(self):
        frames = [50.0] * 30
        out = per_second_means(frames, 30.0, 2.5)
        assert len(out) == 3
        assert out == [50.0, 50.0, 50.0]


class TestAlignment:
    def test_matching_passes(self):
        check_aligned_keyframes([0.0, 2.0, 5.0], {"t0": [0.0, 2.001, 5.0]})

    def test_count_mismatch_raises(self):
        with pytest.raises(ToolError, match="keyframe mismatch"):
            check_aligned_keyframes([0.0, 2.0], {"t0": [0.0, 2.0, 4.0]})

    def test_offset_mismatch_lists_timestamps(self):
        with pytest.raises(ToolError, match="2.500s"):
            check_aligned_keyframes([0.0, 2.0], {"t0": [0.0, 2.5]})


class TestProbing:
    def test_forced_keyframe_round_trip(self, fake_tools, tmp_path):
        # ten forced keyframes on a 10 s clip come back exactly
        clip = tmp_path / "clip.mp4"
        clip.write_text(json.dumps({"duration": 10.0, "fps": 30.0,
                                    "keyframes": [float(t) for t in range(10)],
                                    "packets": [{"pts": 0.0, "size": 10}]}))
        assert probe_keyframes(clip) == [float(t) for t in range(10)]

    def test_single_keyframe_clip(self, fake_tools, tmp_path):
        clip = tmp_path / "still.mp4"
        clip.write_text(json.dumps({"duration": 3.0, "fps": 30.0, "keyframes": [0.0],
                                    "packets": [{"pts": 0.0, "size": 10}]}))
        assert probe_keyframes(clip) == [0.0]

    def test_corrupt_file_raises(self, fake_tools, tmp_path):
        bad = tmp_path / "corrupt.mp4"
        bad.write_bytes(b"\x00\x01garbage")
        with pytest.raises(ToolError):
            probe_keyframes(bad)

    def test_stream_info(self, fake_tools, tmp_path):
        clip = tmp_path / "clip.mp4"
        clip.write_text(json.dumps({"duration": 7.5, "fps": 25.0, "keyframes": [0.0],
                                    "packets": [{"pts": 0.0, "size": 10}]}))
        info = probe_stream(clip)
        assert info.duration == 7.5
        assert info.fps == 25.0
