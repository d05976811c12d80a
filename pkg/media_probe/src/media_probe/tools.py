"""Thin subprocess layer over the external media tools.

Binary locations come from the environment (MEDIA_PROBE_FFMPEG,
MEDIA_PROBE_FFPROBE) or PATH. Everything returns parsed JSON or raises
ToolError with the captured stderr; no media parsing happens here.
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess


class ToolError(RuntimeError):
    """An external tool is missing or returned a failure."""


def find_tool(name: str) -> str | None:
    override = os.environ.get(f"MEDIA_PROBE_{name.upper()}")
    if override:
        return override
    return shutil.which(name)


def require_tool(name: str) -> str:
    path = find_tool(name)
    if path is None:
        raise ToolError(f"{name} not found on PATH (set MEDIA_PROBE_{name.upper()} to override)")
    return path


def tools_available() -> bool:
    return find_tool("ffmpeg") is not None and find_tool("ffprobe") is not None


def run(cmd: list[str]) -> str:
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ToolError(f"{cmd[0]} failed ({proc.returncode}): {proc.stderr.strip()[-2000:]}")
    return proc.stdout


def ffprobe_json(args: list[str]) -> dict:
    out = run([require_tool("ffprobe"), "-v", "error", "-of", "json", *args])
    try:
        return json.loads(out)
    except json.JSONDecodeError as exc:
        raise ToolError(f"ffprobe produced invalid JSON: {exc}") from exc


def ffmpeg(args: list[str]) -> None:
    run([require_tool("ffmpeg"), "-hide_banner", "-y", *args])
