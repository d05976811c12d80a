"""Fake ffmpeg/ffprobe harness.

The stubs speak the exact argument surface our wrappers use and model
"encoded files" as JSON sidecars, so command construction, probing,
fragment cutting, byte accounting, and metadata assembly can be tested
deterministically without real media tools. Every invocation is appended
to a log file for assertions on the constructed commands.
"""

import json
import os
import stat
from pathlib import Path

import pytest

FAKE_FFMPEG = r'''#!/usr/bin/env python3
import json, math, os, sys

def arg(flag, default=None):
    return sys.argv[sys.argv.index(flag) + 1] if flag in sys.argv else default

def all_args(flag):
    return [sys.argv[i + 1] for i, a in enumerate(sys.argv) if a == flag]

log = os.environ.get("FAKE_TOOL_LOG")
if log:
    with open(log, "a") as fh:
        fh.write(json.dumps(sys.argv[1:]) + "\n")

def read_media(path):
    with open(path) as fh:
        return json.load(fh)

def frame_packets(kbps, fps, duration):
    n = int(round(duration * fps))
    out = []
    for k in range(n):
        size = max(1, round(kbps * 125.0 / fps * (1.0 + 0.25 * math.sin(0.7 * k))))
        out.append({"pts": k / fps, "size": size})
    return out

inputs = all_args("-i")
lavfi = arg("-lavfi")
if lavfi and "libvmaf" in lavfi:
    distorted = read_media(inputs[0])
    log_path = [p for p in lavfi.split(":") if p.startswith("log_path=")][0].split("=", 1)[1]
    model = "uhd4k" if "vmaf_4k" in lavfi else ("mobile" if "enable_transform" in lavfi else "hdtv")
    scale = {"mobile": 1.3, "hdtv": 1.0, "uhd4k": 0.75}[model]
    kbps = distorted.get("kbps", 20000.0)
    n = int(round(distorted["duration"] * distorted["fps"]))
    base = min(99.0, 100.0 * (1.0 - 0.85 * math.exp(-kbps * scale / 900.0)))
    frames = [{"metrics": {"vmaf": max(0.0, min(100.0, base + math.sin(k)))}} for k in range(n)]
    with open(log_path, "w") as fh:
        json.dump({"frames": frames}, fh)
    sys.exit(0)

if arg("-pass") == "1" or "-f" in sys.argv and arg("-f") == "null":
    sys.exit(0)

src = read_media(inputs[0])
out = sys.argv[-1]
fps = src["fps"]
ss, to = arg("-ss"), arg("-to")
start = float(ss) if ss else 0.0
end = float(to) if to else src["duration"]
duration = end - start

kbps_arg = arg("-b:v")
kbps = float(kbps_arg[:-1]) if kbps_arg else None

forced = arg("-force_key_frames")
x264 = arg("-x264-params", "")
if forced is not None:
    keyframes = sorted(float(t) for t in forced.split(","))
else:
    keyint = 125
    for part in x264.split(":"):
        if part.startswith("keyint="):
            keyint = int(part.split("=")[1])
    interval = keyint / fps
    grid = [i * interval for i in range(int(math.ceil(src["duration"] / interval)))]
    scenes = src.get("scene_keyframes", [])
    keyframes = sorted(set(round(t, 6) for t in ([0.0] + grid + scenes) if t < src["duration"]))

media = {"kind": "encoded", "duration": duration, "fps": fps, "kbps": kbps,
         "keyframes": keyframes,
         "packets": frame_packets(kbps if kbps else 20000.0, fps, duration)}
with open(out, "w") as fh:
    json.dump(media, fh)
'''

FAKE_FFPROBE = r'''#!/usr/bin/env python3
import json, os, sys

log = os.environ.get("FAKE_TOOL_LOG")
if log:
    with open(log, "a") as fh:
        fh.write(json.dumps(sys.argv[1:]) + "\n")

path = sys.argv[-1]
try:
    with open(path) as fh:
        media = json.load(fh)
except Exception:
    sys.stderr.write("undecodable input\n")
    sys.exit(1)

argv = sys.argv
if "-show_streams" in argv:
    num = int(round(media["fps"]))
    print(json.dumps({"streams": [{"avg_frame_rate": f"{num}/1",
                                   "duration": str(media["duration"])}]}))
elif "-show_format" in argv:
    print(json.dumps({"format": {"duration": str(media["duration"])}}))
elif "-show_frames" in argv:
    frames = [{"pts_time": str(t)} for t in media.get("keyframes", [0.0])]
    print(json.dumps({"frames": frames}))
elif "-show_packets" in argv:
    packets = [{"pts_time": str(p["pts"]), "size": str(p["size"])}
               for p in media.get("packets", [])]
    print(json.dumps({"packets": packets}))
else:
    print(json.dumps({}))
'''


@pytest.fixture
def fake_tools(tmp_path, monkeypatch):
    bin_dir = tmp_path / "bin"
    bin_dir.mkdir()
    for name, body in (("ffmpeg", FAKE_FFMPEG), ("ffprobe", FAKE_FFPROBE)):
        script = bin_dir / name
        script.write_text(body)
        script.chmod(script.stat().st_mode | stat.S_IEXEC)
    log = tmp_path / "tool_log.jsonl"
    monkeypatch.setenv("MEDIA_PROBE_FFMPEG", str(bin_dir / "ffmpeg"))
    monkeypatch.setenv("MEDIA_PROBE_FFPROBE", str(bin_dir / "ffprobe"))
    monkeypatch.setenv("FAKE_TOOL_LOG", str(log))
    return {"bin": bin_dir, "log": log}


@pytest.fixture
def fake_source(tmp_path):
    """A 12 s 30 fps 'raw' source with two scene-change keyframes."""
    src = tmp_path / "source.mp4"
    src.write_text(json.dumps({"kind": "source", "duration": 12.0, "fps": 30.0,
                               "scene_keyframes": [3.2, 7.4]}))
    return src


def tool_invocations(log_path: Path):
    if not Path(log_path).exists():
        return []
    return [json.loads(line) for line in Path(log_path).read_text().splitlines()]
