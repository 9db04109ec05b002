"""Timestamped transcription, deterministic disfluency cleanup, and the
assignment of speech to slide intervals.

Cleanup is two independent passes over whitespace tokens:

1. strip_disfluencies removes filler words. "um"/"uh"/"er"/"ah" (plus any
   configured extras) go whenever they stand alone; "like" and the bigram
   "you know" go only when set off by commas, since both are usually real
   words. When a removed run sat between a comma and the next word, the
   comma survives if the next word is lowercase (mid-clause) and is dropped
   if it is capitalized (the filler bridged two sentences' worth of pause).
2. collapse_repetitions folds immediately repeated word groups ("we have,
   we have come" -> "we have come"), comparing case- and
   punctuation-insensitively and keeping the last copy.

Assignment uses the midpoint rule: a segment belongs to the transition
entry whose interval contains its midpoint, with segments that straddle a
boundary split word-proportionally at the boundary first. No words are
lost or duplicated.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from .errors import TranscriptError
from .gateway import Gateway
from .model import (
    PresentationManifest,
    Timestamp,
    TransitionMap,
    Transcript,
    TranscriptSegment,
)
from .videoio import probe_video

TEMPLATE = "transcribe_talk"

STANDALONE_FILLERS = frozenset({"um", "uh", "er", "ah"})
COMMA_FILLERS = frozenset({"like"})
COMMA_BIGRAMS = (("you", "know"),)

_EDGE_PUNCT = "\"'()[]{}.,;:!?"
_SENTENCE_END = (".", "!", "?")


def _core(token: str) -> str:
    return token.strip(_EDGE_PUNCT).lower()


def _filler_mask(tokens: list[str], extra: frozenset[str]) -> list[bool]:
    standalone = STANDALONE_FILLERS | extra
    mask = [False] * len(tokens)
    for i, token in enumerate(tokens):
        if _core(token) in standalone:
            mask[i] = True
    for i, token in enumerate(tokens):
        if _core(token) in COMMA_FILLERS and _comma_delimited(tokens, i, i):
            mask[i] = True
    for first, second in COMMA_BIGRAMS:
        for i in range(len(tokens) - 1):
            if (_core(tokens[i]) == first and _core(tokens[i + 1]) == second
                    and _comma_delimited(tokens, i, i + 1)):
                mask[i] = mask[i + 1] = True
    return mask


def _comma_delimited(tokens: list[str], start: int, end: int) -> bool:
    before_ok = start == 0 or tokens[start - 1].endswith(",")
    after_ok = tokens[end].endswith(",")
    return before_ok and after_ok


def strip_disfluencies(raw_text: str, extra_fillers: Iterable[str] = ()) -> str:
    tokens = raw_text.split()
    if not tokens:
        return ""
    mask = _filler_mask(tokens, frozenset(w.lower() for w in extra_fillers))
    out: list[str] = []
    i = 0
    while i < len(tokens):
        if not mask[i]:
            out.append(tokens[i])
            i += 1
            continue
        run_end = i
        while run_end + 1 < len(tokens) and mask[run_end + 1]:
            run_end += 1
        if out and out[-1].endswith(","):
            nxt = tokens[run_end + 1] if run_end + 1 < len(tokens) else None
            if nxt is None:
                final = tokens[run_end][-1] if tokens[run_end].endswith(_SENTENCE_END) else ""
                out[-1] = out[-1][:-1] + final
            elif nxt[:1].isupper():
                out[-1] = out[-1][:-1]
        i = run_end + 1
    return " ".join(out)


def collapse_repetitions(text: str, max_n: int = 5) -> str:
    tokens = text.split()
    norms = [_core(t) for t in tokens]
    i = 0
    while i < len(tokens):
        collapsed = False
        for n in range(min(max_n, (len(tokens) - i) // 2), 0, -1):
            if norms[i:i + n] and norms[i:i + n] == norms[i + n:i + 2 * n]:
                del tokens[i:i + n]
                del norms[i:i + n]
                collapsed = True
                break
        if not collapsed:
            i += 1
    return " ".join(tokens)


def clean_speech(raw_text: str, extra_fillers: Iterable[str] = ()) -> str:
    return collapse_repetitions(strip_disfluencies(raw_text, extra_fillers))


# -- transcription -------------------------------------------------------------


def transcribe(manifest: PresentationManifest, video_path: Path, gateway: Gateway,
               extra_fillers: Iterable[str] = ()) -> Transcript:
    info = probe_video(video_path)
    handle = gateway.cache_media(video_path)
    parsed = gateway.run(
        TEMPLATE,
        {"presentation_id": manifest.presentation_id, "duration_ms": info.duration_ms},
        media=[handle],
        context={"presentation_id": manifest.presentation_id,
                 "duration_ms": info.duration_ms},
    )
    rows = sorted(parsed["segments"], key=lambda s: (s["start_ms"], s["end_ms"]))
    segments = []
    for row in rows:
        if row["end_ms"] <= row["start_ms"]:
            raise TranscriptError(
                f"segment at {row['start_ms']} ms has non-positive length")
        if row["end_ms"] > info.duration_ms:
            raise TranscriptError(
                f"segment ending at {row['end_ms']} ms exceeds the video "
                f"({info.duration_ms} ms)")
        segments.append(TranscriptSegment(
            start=Timestamp(row["start_ms"]),
            end=Timestamp(row["end_ms"]),
            raw_text=row["text"],
            clean_text=clean_speech(row["text"], extra_fillers),
        ))
    return Transcript(presentation_id=manifest.presentation_id, segments=tuple(segments))


# -- assignment ----------------------------------------------------------------


def assign_speech(transcript: Transcript, transition_map: TransitionMap) -> tuple[str, ...]:
    """Concatenated clean speech per transition entry, in entry order.

    Speech heard before the first detected slide belongs to the first
    entry (the talk has begun even if detection starts late).
    """
    entries = transition_map.entries
    starts = [e.timestamp.millis for e in entries]
    duration = transition_map.video_duration.millis
    per_entry: list[list[str]] = [[] for _ in entries]
    for segment in transcript.segments:
        if segment.end.millis > duration:
            raise TranscriptError(
                f"segment ending at {segment.end.render()} lies outside the video "
                f"({transition_map.video_duration.render()})")
        for mid, words in _split_at_boundaries(segment, starts):
            per_entry[_entry_for(mid, starts)].append(words)
    return tuple(" ".join(w for w in chunks if w) for chunks in per_entry)


def _split_at_boundaries(segment: TranscriptSegment,
                         starts: Sequence[int]) -> list[tuple[float, str]]:
    s, e = segment.start.millis, segment.end.millis
    words = segment.clean_text.split()
    cuts = [b for b in starts if s < b < e]
    if not cuts:
        return [((s + e) / 2, " ".join(words))]
    pieces = []
    edges = [s, *cuts, e]
    word_marks = [round(len(words) * (edge - s) / (e - s)) for edge in edges]
    for left, right, w0, w1 in zip(edges, edges[1:], word_marks, word_marks[1:]):
        pieces.append(((left + right) / 2, " ".join(words[w0:w1])))
    return pieces


def _entry_for(midpoint: float, starts: Sequence[int]) -> int:
    index = 0
    for i, start in enumerate(starts):
        if midpoint >= start:
            index = i
    return index
