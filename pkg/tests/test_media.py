"""Media model: validation, serialization, segment arithmetic."""

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abrchunk.media import (Chunking, Augmentation, ParseError, Segment, ValidationError,
                            VideoIndex, constant_segmentation, dumps_canonical,
                            load_video, per_fragment_segmentation, save_video,
                            segment_stats, validate_chunking, validate_segmentation,
                            validate_video, video_from_dict, video_to_dict, VMAF_MODELS)
from fixture_lib import flat_series, make_video, uniform_video


def minimal_doc():
    return {
        "schema": "abrchunk/meta/1",
        "video_id": "mini",
        "fps": 30.0,
        "ladder": [{"id": 0, "kbps": 500.0, "label": "240p"}],
        "fragments": [
            {"duration_s": 2.0,
             "tracks": [{"bytes": 100000,
                         "vmaf": {m: [50.0, 50.0] for m in VMAF_MODELS}}]}
        ],
    }


class TestLoadValidation:
    def test_minimal_video_loads(self):
        video = video_from_dict(minimal_doc())
        assert video.total_duration == 2.0
        assert video.n_fragments == 1

    def test_ladder_not_increasing_rejected(self):
        doc = minimal_doc()
        doc["ladder"] = [{"id": 0, "kbps": 900.0, "label": "a"},
                         {"id": 1, "kbps": 500.0, "label": "b"}]
        doc["fragments"][0]["tracks"].append(doc["fragments"][0]["tracks"][0])
        with pytest.raises(ValidationError, match="ladder not increasing"):
            video_from_dict(doc)

    def test_missing_track_entry_names_fragment(self):
        doc = minimal_doc()
        doc["ladder"].append({"id": 1, "kbps": 900.0, "label": "b"})
        doc["ladder"].append({"id": 2, "kbps": 1500.0, "label": "c"})
        frag = doc["fragments"][0]
        frag["tracks"] = frag["tracks"] * 2  # only 2 of 3 tracks
        for _ in range(7):
            doc["fragments"].append(json.loads(json.dumps(frag)))
        doc["fragments"][7]["tracks"] = doc["fragments"][7]["tracks"][:2]
        # make all other fragments complete
        for i, f in enumerate(doc["fragments"]):
            if i != 7:
                f["tracks"] = (f["tracks"] * 3)[:3]
        with pytest.raises(ValidationError, match="fragment 7"):
            video_from_dict(doc)

    def test_vmaf_out_of_range_rejected(self):
        doc = minimal_doc()
        doc["fragments"][0]["tracks"][0]["vmaf"]["hdtv"] = [50.0, 101.0]
        with pytest.raises(ValidationError, match="outside"):
            video_from_dict(doc)

    def test_series_length_must_match_duration(self):
        doc = minimal_doc()
        doc["fragments"][0]["duration_s"] = 2.5  # needs 3 samples
        with pytest.raises(ValidationError, match="series length"):
            video_from_dict(doc)

    def test_malformed_json_is_parse_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ParseError):
            load_video(p)

    def test_non_positive_duration_rejected(self):
        doc = minimal_doc()
        doc["fragments"][0]["duration_s"] = 0.0
        doc["fragments"][0]["tracks"][0]["vmaf"] = {m: [] for m in VMAF_MODELS}
        with pytest.raises(ValidationError, match="duration"):
            video_from_dict(doc)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        video = uniform_video(9, duration=2.25)
        p = tmp_path / "v.json"
        save_video(video, p)
        first = p.read_bytes()
        save_video(load_video(p), p)
        assert p.read_bytes() == first

    def test_dict_round_trip_preserves_values(self):
        video = uniform_video(4)
        again = video_from_dict(json.loads(dumps_canonical(video_to_dict(video))))
        assert again == video


class TestSegmentStats:
    def test_bitrate_from_bytes(self):
        # one 4 s fragment of 1,000,000 bytes -> 2000 kbps
        video = make_video([4.0], [[1_000_000]], [[80.0]], kbps_list=(2000,))
        stats = segment_stats(video, Segment(0, 0), 0)
        assert stats.bitrate_kbps == pytest.approx(2000.0)
        assert stats.duration == 4.0
        assert stats.bytes == 1_000_000

    def test_constant_series_mean(self):
        video = make_video([2.0, 3.0], [[10_000], [10_000]], [[80.0], [80.0]], kbps_list=(500,))
        stats = segment_stats(video, Segment(0, 1), 0)
        assert stats.mean_vmaf["hdtv"] == pytest.approx(80.0)

    def test_duration_weighted_mean(self):
        # 1 s @ 60 and 3 s @ 100 -> (60 + 300) / 4 = 90
        video = make_video([1.0, 3.0], [[5_000], [15_000]], [[60.0], [100.0]], kbps_list=(500,))
        stats = segment_stats(video, Segment(0, 1), 0)
        assert stats.mean_vmaf["mobile"] == pytest.approx(90.0)

    def test_fractional_duration_weighting(self):
        video = make_video([2.5], [[10_000]], kbps_list=(500,))
        idx = VideoIndex(video)
        # constant series: weighting must not distort the mean
        assert idx.segment_mean_vmaf(0, 0, 0, "hdtv") == pytest.approx(40.0)


class TestPartitions:
    def test_constant_segmentation_examples(self):
        video = uniform_video(60, duration=1.0)
        segs = constant_segmentation(video, 5.0)
        assert len(segs) == 12
        assert all(VideoIndex(video).segment_duration(s.first, s.last) == pytest.approx(5.0)
                   for s in segs)

    def test_per_fragment(self):
        video = uniform_video(7)
        assert len(per_fragment_segmentation(video)) == 7

    def test_rejects_gap(self):
        with pytest.raises(ValidationError, match="gap"):
            validate_segmentation([Segment(0, 1), Segment(3, 4)], 5)

    def test_rejects_wrong_end(self):
        with pytest.raises(ValidationError):
            validate_segmentation([Segment(0, 3)], 5)

    @given(st.integers(min_value=1, max_value=30), st.data())
    @settings(max_examples=60, deadline=None)
    def test_random_merge_patterns_partition(self, n, data):
        # any merge pattern must reproduce [0, n) exactly
        bits = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
        segs = []
        start = 0
        for i in range(1, n):
            if not bits[i]:
                segs.append(Segment(start, i - 1))
                start = i
        segs.append(Segment(start, n - 1))
        validate_segmentation(segs, n)
        covered = [f for s in segs for f in range(s.first, s.last + 1)]
        assert covered == list(range(n))

    @given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=10 ** 9))
    @settings(max_examples=40, deadline=None)
    def test_additivity(self, n, seed):
        import numpy as np
        rng = np.random.default_rng(seed)
        video = uniform_video(n)
        idx = VideoIndex(video)
        a = int(rng.integers(0, n))
        b = int(rng.integers(a, n))
        dur = sum(video.fragments[i].duration for i in range(a, b + 1))
        assert abs(idx.segment_duration(a, b) - dur) < 1e-9
        for j in range(video.n_tracks):
            nbytes = sum(video.fragments[i].tracks[j].bytes for i in range(a, b + 1))
            assert idx.segment_bytes(a, b, j) == nbytes


class TestChunkingValidation:
    def test_augmentation_must_bracket(self):
        video = uniform_video(4)
        segs = per_fragment_segmentation(video)
        idx = VideoIndex(video)
        lo = idx.segment_bitrate_kbps(0, 0, 0)
        bad = Augmentation(segment_index=0, kbps=lo * 0.5, bytes=1000,
                           vmaf={m: flat_series(50, 2.0) for m in VMAF_MODELS},
                           between=(0, 1))
        with pytest.raises(ValidationError, match="not strictly between"):
            validate_chunking(Chunking(segments=segs, augmentations=(bad,)), video)

    def test_duplicate_gap_rejected(self):
        video = uniform_video(4)
        segs = per_fragment_segmentation(video)
        idx = VideoIndex(video)
        mid = (idx.segment_bitrate_kbps(0, 0, 0) + idx.segment_bitrate_kbps(0, 0, 1)) / 2
        aug = Augmentation(segment_index=0, kbps=mid, bytes=1000,
                           vmaf={m: flat_series(50, 2.0) for m in VMAF_MODELS},
                           between=(0, 1))
        with pytest.raises(ValidationError, match="duplicate"):
            validate_chunking(Chunking(segments=segs, augmentations=(aug, aug)), video)

    def test_valid_chunking_passes(self):
        video = uniform_video(4)
        segs = constant_segmentation(video, 4.0)
        validate_chunking(Chunking(segments=segs), video)
