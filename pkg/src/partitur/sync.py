"""Slide/video temporal alignment.

Frames are sampled at a fixed rate, fingerprinted, and matched against the
slide set by Hamming similarity. A transition is accepted once the same
slide wins `debounce_frames` consecutive samples at or above
`min_similarity`; the entry is stamped with the first frame of that run
and its confidence is the mean similarity over the debounce window.
Returning to a slide that is already on screen never creates a duplicate
entry, while revisits of earlier slides do.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from PIL import Image

from .errors import SyncError
from .fingerprint import Fingerprint, fingerprint_image, similarity
from .model import Timestamp, TransitionEntry, TransitionMap
from .videoio import probe_video, sample_frames

DEFAULT_RATE_HZ = 2.0
DEFAULT_MIN_SIMILARITY = 0.85
DEFAULT_DEBOUNCE_FRAMES = 3


@dataclass(frozen=True)
class RawMatch:
    timestamp: Timestamp
    slide_index: int
    similarity: float


def match_frames(frames: Iterable[tuple[Timestamp, Image.Image]],
                 slide_fingerprints: Sequence[Fingerprint]) -> list[RawMatch]:
    """Best slide per frame; ties break toward the lower slide index."""
    if not slide_fingerprints:
        raise SyncError("cannot match frames against an empty slide set")
    matches = []
    for ts, frame in frames:
        fp = fingerprint_image(frame)
        best_index = 0
        best_sim = -1.0
        for i, slide_fp in enumerate(slide_fingerprints):
            sim = similarity(fp, slide_fp)
            if sim > best_sim:
                best_index, best_sim = i, sim
        matches.append(RawMatch(ts, best_index + 1, best_sim))
    return matches


@dataclass
class _Run:
    slide: int
    start: Timestamp
    sims: list[float]


def detect_transitions(matches: Sequence[RawMatch], *,
                       min_similarity: float = DEFAULT_MIN_SIMILARITY,
                       debounce_frames: int = DEFAULT_DEBOUNCE_FRAMES,
                       n_slides: int,
                       video_duration: Timestamp,
                       presentation_id: str) -> TransitionMap:
    if debounce_frames < 1:
        raise SyncError(f"debounce_frames must be >= 1, got {debounce_frames}")
    last = None
    for m in matches:
        if last is not None and m.timestamp.millis < last:
            raise SyncError("raw matches must be temporally ordered")
        last = m.timestamp.millis

    detected: list[tuple[int, Timestamp, float]] = []
    on_screen: int | None = None
    run: _Run | None = None
    for m in matches:
        if m.similarity < min_similarity:
            run = None  # noise frame: breaks any pending run, keeps the confirmed slide
            continue
        if m.slide_index == on_screen:
            run = None  # still showing the confirmed slide
            continue
        if run is None or run.slide != m.slide_index:
            run = _Run(m.slide_index, m.timestamp, [])
        run.sims.append(m.similarity)
        if len(run.sims) >= debounce_frames:
            confidence = round(sum(run.sims[:debounce_frames]) / debounce_frames, 6)
            detected.append((run.slide, run.start, confidence))
            on_screen = run.slide
            run = None

    if not detected:
        raise SyncError(
            "no slide detected: no frame run ever matched the deck "
            f"(threshold {min_similarity}, debounce {debounce_frames})")
    entries = compute_durations(detected, video_duration)
    presented = {slide for slide, _, _ in detected}
    unpresented = tuple(i for i in range(1, n_slides + 1) if i not in presented)
    return TransitionMap(
        presentation_id=presentation_id,
        entries=entries,
        video_duration=video_duration,
        unpresented=unpresented,
    )


def compute_durations(detected: Sequence[tuple[int, Timestamp, float]],
                      video_duration: Timestamp) -> tuple[TransitionEntry, ...]:
    times = [ts.millis for _, ts, _ in detected]
    if times != sorted(times):
        raise SyncError("entries must be sorted by timestamp before computing durations")
    entries = []
    for i, (slide, ts, confidence) in enumerate(detected):
        next_ms = times[i + 1] if i + 1 < len(times) else video_duration.millis
        entries.append(TransitionEntry(
            slide_index=slide,
            timestamp=ts,
            confidence=confidence,
            duration_until_next=next_ms - ts.millis,
        ))
    return tuple(entries)


def build_transition_map(video_path, slide_images: Sequence[Image.Image], *,
                         presentation_id: str,
                         rate_hz: float = DEFAULT_RATE_HZ,
                         min_similarity: float = DEFAULT_MIN_SIMILARITY,
                         debounce_frames: int = DEFAULT_DEBOUNCE_FRAMES) -> TransitionMap:
    """Full alignment: sample, fingerprint, match, debounce."""
    info = probe_video(video_path)
    slide_fps = [fingerprint_image(img) for img in slide_images]
    matches = match_frames(sample_frames(video_path, rate_hz), slide_fps)
    return detect_transitions(
        matches,
        min_similarity=min_similarity,
        debounce_frames=debounce_frames,
        n_slides=len(slide_fps),
        video_duration=Timestamp(info.duration_ms),
        presentation_id=presentation_id,
    )
