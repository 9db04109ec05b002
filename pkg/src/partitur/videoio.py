"""Video probing and fixed-rate frame sampling on top of OpenCV.

Timestamps are computed as round(frame_index * 1000 / fps) instead of
trusting the decoder's position reports, which keeps sampling deterministic
across container quirks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import cv2
from PIL import Image

from .errors import VideoError
from .model import Timestamp


@dataclass(frozen=True)
class VideoInfo:
    fps: float
    frame_count: int
    width: int
    height: int
    duration_ms: int


def probe_video(path) -> VideoInfo:
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise VideoError(f"cannot open video {path}")
        fps = cap.get(cv2.CAP_PROP_FPS)
        frame_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        width = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
        height = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
    finally:
        cap.release()
    if fps <= 0 or frame_count <= 0:
        raise VideoError(f"video {path} reports no decodable frames (fps={fps}, frames={frame_count})")
    return VideoInfo(
        fps=fps,
        frame_count=frame_count,
        width=width,
        height=height,
        duration_ms=round(frame_count * 1000 / fps),
    )


def frame_timestamp(index: int, fps: float) -> Timestamp:
    return Timestamp(round(index * 1000 / fps))


def sample_frames(path, rate_hz: float) -> Iterator[tuple[Timestamp, Image.Image]]:
    """Yield (timestamp, frame) pairs at a fixed interval of 1/rate_hz seconds.

    Frames are read sequentially and the scheduled indices are kept, so one
    pass over the file suffices regardless of the sampling rate.
    """
    if rate_hz <= 0:
        raise VideoError(f"sampling rate must be positive, got {rate_hz}")
    info = probe_video(path)
    wanted: set[int] = set()
    k = 0
    while True:
        idx = round(k * info.fps / rate_hz)
        if idx >= info.frame_count:
            break
        wanted.add(idx)
        k += 1
    last = max(wanted)
    cap = cv2.VideoCapture(str(path))
    try:
        index = 0
        last_good = Timestamp(0)
        while index <= last:
            ok, frame = cap.read()
            if not ok:
                raise VideoError(
                    f"decode failure in {path} at frame {index} (last good timestamp {last_good})")
            if index in wanted:
                ts = frame_timestamp(index, info.fps)
                yield ts, Image.fromarray(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
                last_good = ts
            index += 1
    finally:
        cap.release()
