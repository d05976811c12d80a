"""Ladder encoding and metadata assembly over the fake tool harness."""

import json
from pathlib import Path

import pytest

from conftest import tool_invocations
from media_probe.encode import EncodeJob, LadderRung, encode_ladder
from media_probe.metadata import build_metadata, encode_augmentation, save_metadata, validate_with_primary
from media_probe.tools import ToolError

LADDER = (LadderRung(id=0, kbps=800.0, height=360, label="360p"),
          LadderRung(id=1, kbps=2400.0, height=720, label="720p"))


def make_job(source, tmp_path, **kw):
    return EncodeJob(source=Path(source), ladder=LADDER, workspace=tmp_path / "work",
                     fps=30.0, video_id="clip", **kw)


class TestEncodeCommands:
    def test_two_pass_with_bitrate_cap(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        encode_ladder(job)
        calls = tool_invocations(fake_tools["log"])
        encodes = [c for c in calls if "-b:v" in c]
        passes = {c[c.index("-pass") + 1] for c in encodes}
        assert passes == {"1", "2"}
        top = [c for c in encodes if "-b:v" in c and c[c.index("-b:v") + 1] == "2400k"]
        assert top, "top rung not encoded at its target bitrate"
        assert any(c[c.index("-maxrate") + 1] == f"{int(2400 * 1.75)}k" for c in top)

    def test_lower_rungs_forced_to_top_keyframes(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        paths = encode_ladder(job)
        calls = tool_invocations(fake_tools["log"])
        forced = [c for c in calls if "-force_key_frames" in c]
        assert forced, "aligned rungs must force keyframes"
        assert all("scenecut=0" in c[c.index("-x264-params") + 1] for c in forced)
        top_meta = json.loads(paths[1].read_text())
        low_meta = json.loads(paths[0].read_text())
        assert top_meta["keyframes"] == low_meta["keyframes"]

    def test_rejects_bad_factor(self, fake_source, tmp_path):
        with pytest.raises(ValueError, match="factor"):
            make_job(fake_source, tmp_path, max_bitrate_factor=1.0)


class TestBuildMetadata:
    def test_output_passes_primary_validation(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        doc = build_metadata(job)
        out = tmp_path / "meta.json"
        save_metadata(doc, out)
        validate_with_primary(out)  # raises on rejection

    def test_fragments_follow_top_keyframes(self, fake_tools, fake_source, tmp_path):
        # 12 s source, 5 s keyint grid + scene cuts at 3.2/7.4
        job = make_job(fake_source, tmp_path)
        doc = build_metadata(job)
        durations = [f["duration_s"] for f in doc["fragments"]]
        assert sum(durations) == pytest.approx(12.0)
        assert len(durations) == 5  # cuts at 0, 3.2, 5, 7.4, 10

    def test_bytes_scale_with_bitrate(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        doc = build_metadata(job)
        for frag in doc["fragments"]:
            assert frag["tracks"][1]["bytes"] > frag["tracks"][0]["bytes"]

    def test_byte_sums_match_container_payload(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        paths = encode_ladder(job)
        doc = build_metadata(job, track_paths=paths)
        for tid, rung in enumerate(LADDER):
            payload = sum(p["size"] for p in json.loads(paths[rung.id].read_text())["packets"])
            total = sum(f["tracks"][tid]["bytes"] for f in doc["fragments"])
            assert total == payload

    def test_all_models_present_per_fragment(self, fake_tools, fake_source, tmp_path):
        doc = build_metadata(make_job(fake_source, tmp_path))
        for frag in doc["fragments"]:
            for track in frag["tracks"]:
                assert set(track["vmaf"]) == {"mobile", "hdtv", "uhd4k"}
                n_sec = -(-frag["duration_s"] // 1)
                for series in track["vmaf"].values():
                    assert len(series) == int(n_sec)

    def test_keyframe_mismatch_is_hard_error(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        paths = encode_ladder(job)
        drifted = json.loads(paths[0].read_text())
        kf = drifted["keyframes"]
        drifted["keyframes"] = [kf[0]] + [t + 0.4 for t in kf[1:]]
        bad = tmp_path / "drifted.mp4"
        bad.write_text(json.dumps(drifted))
        paths[0] = bad
        with pytest.raises(ToolError, match="keyframe mismatch"):
            build_metadata(job, track_paths=paths)


class TestEncodeAugmentation:
    def test_bytes_track_requested_bitrate(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        record = encode_augmentation(job, 3.2, 7.2, 1500.0, (0, 1))
        expected = 1500.0 * 4.0 * 125.0
        assert record["bytes"] == pytest.approx(expected, rel=0.25)
        assert record["between"] == [0, 1]
        assert set(record["vmaf"]) == {"mobile", "hdtv", "uhd4k"}
        assert all(len(s) == 4 for s in record["vmaf"].values())

    def test_matching_track_bitrate_gives_matching_quality(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        doc = build_metadata(job)
        record = encode_augmentation(job, 0.0, float(doc["fragments"][0]["duration_s"]),
                                     2400.0, (0, 1))
        track_series = doc["fragments"][0]["tracks"][1]["vmaf"]["hdtv"]
        aug_series = record["vmaf"]["hdtv"]
        for a, b in zip(aug_series, track_series):
            assert abs(a - b) < 3.0

    def test_zero_length_range_rejected(self, fake_tools, fake_source, tmp_path):
        job = make_job(fake_source, tmp_path)
        with pytest.raises(ValueError, match="zero-length"):
            encode_augmentation(job, 2.0, 2.0, 1000.0, (0, 1))


class TestValidatorBridge:
    def test_invalid_metadata_fails(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schema": "abrchunk/meta/1", "video_id": "x",
                                   "fps": 30.0, "ladder": [], "fragments": []}) + "\n")
        with pytest.raises(ToolError, match="validation failed"):
            validate_with_primary(bad)
