"""Build chunking-toolkit metadata from real videos via ffmpeg/ffprobe."""

from .encode import EncodeJob, LadderRung, encode_ladder
from .metadata import build_metadata, encode_augmentation, validate_with_primary
from .probe import probe_keyframes, probe_packets, probe_stream

__version__ = "0.1.0"
