"""Shared domain types and canonical serialization for stage artifacts.

Every value crossing a stage boundary is a frozen dataclass with a strict
dict round-trip: ``to_dict`` emits a plain-JSON shape carrying a ``kind``
discriminator, ``from_dict`` rejects unknown and missing fields, and
``serialize_artifact`` / ``deserialize_artifact`` give the byte-stable
canonical encoding (UTF-8, sorted keys, two-space indent, trailing
newline) used for on-disk artifacts and digests.

Time is integer milliseconds throughout. A Timestamp renders as
zero-padded HH:MM:SS, extended with a ``.mmm`` suffix only when the value
is not second-aligned, so rendering stays lossless and round-trips.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, fields
from typing import Any, Iterable, Mapping

from .errors import SchemaValidationError

SLIDE_TYPES = frozenset({
    "technical_architecture", "conceptual", "data", "title", "agenda",
    "interactive", "transition", "references", "other",
})

SLIDE_ROLES = frozenset({
    "content", "overlay_step", "overlay_final", "transition",
    "special_title", "special_agenda", "special_thanks", "special_interactive",
})

SIGNIFICANCE_LEVELS = frozenset({"low", "medium", "high"})

TRANSFORMATION_TYPES = frozenset({"synthesis", "combination", "reorganization", "expansion"})

RIGOR_LEVELS = frozenset({"low", "medium", "high"})

DECISION_SOURCES = frozenset({"auto", "override"})

STAGE_ORDER = (
    "intake", "extract", "sync", "analyze", "curate",
    "transcribe", "storyboard", "synthesize", "render", "qa",
)

_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")
_TS_RE = re.compile(r"^(?:(\d{1,3}):)?(\d{1,2}):([0-5]\d)(?:\.(\d{1,3}))?$")
_SLIDE_FILE_RE = re.compile(r"^(?P<event>.+)_(?P<pid>[A-Za-z0-9_-]+?)_slide_(?P<num>\d{2,})\.png$")


def slide_filename(event_tag: str, presentation_id: str, index: int) -> str:
    return f"{event_tag}_{presentation_id}_slide_{index:02d}.png"


# ---------------------------------------------------------------------------
# dict-parsing helpers


def _take(data: Mapping[str, Any], key: str, ctx: str) -> Any:
    if key not in data:
        raise SchemaValidationError(f"{ctx}: missing field", [key])
    return data[key]

def _reject_unknown(data: Mapping[str, Any], allowed: Iterable[str], ctx: str) -> None:
    extra = sorted(set(data) - set(allowed))
    if extra:
        raise SchemaValidationError(f"{ctx}: unknown fields", extra)

def _as_str(value: Any, ctx: str, *, nonempty: bool = False) -> str:
    if not isinstance(value, str):
        raise SchemaValidationError(f"{ctx}: expected a string, got {type(value).__name__}")
    if nonempty and not value.strip():
        raise SchemaValidationError(f"{ctx}: must be non-empty")
    return value

def _as_int(value: Any, ctx: str, *, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaValidationError(f"{ctx}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise SchemaValidationError(f"{ctx}: must be >= {minimum}, got {value}")
    return value

def _as_fraction(value: Any, ctx: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaValidationError(f"{ctx}: expected a number, got {value!r}")
    f = float(value)
    if not 0.0 <= f <= 1.0:
        raise SchemaValidationError(f"{ctx}: must lie in [0, 1], got {f}")
    return f

def _as_bool(value: Any, ctx: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaValidationError(f"{ctx}: expected a boolean, got {value!r}")
    return value

def _as_vocab(value: Any, vocab: frozenset[str], ctx: str) -> str:
    text = _as_str(value, ctx)
    if text not in vocab:
        raise SchemaValidationError(f"{ctx}: {text!r} not in {sorted(vocab)}")
    return text

def _as_list(value: Any, ctx: str) -> list:
    if not isinstance(value, list):
        raise SchemaValidationError(f"{ctx}: expected a list, got {type(value).__name__}")
    return value

def _check_kind(data: Mapping[str, Any], expected: str) -> None:
    kind = data.get("kind")
    if kind != expected:
        raise SchemaValidationError(f"expected kind {expected!r}, got {kind!r}")


# ---------------------------------------------------------------------------
# time


@dataclass(frozen=True, order=True)
class Timestamp:
    """A point on the video timeline, in integer milliseconds."""

    millis: int

    def __post_init__(self):
        _as_int(self.millis, "Timestamp.millis", minimum=0)

    def render(self) -> str:
        seconds, ms = divmod(self.millis, 1000)
        h, rest = divmod(seconds, 3600)
        m, s = divmod(rest, 60)
        base = f"{h:02d}:{m:02d}:{s:02d}"
        return f"{base}.{ms:03d}" if ms else base

    def __str__(self) -> str:
        return self.render()

    def __add__(self, delta_ms: int) -> "Timestamp":
        return Timestamp(self.millis + int(delta_ms))

    def __sub__(self, other: "Timestamp") -> int:
        return self.millis - other.millis


def parse_timestamp(text: str) -> Timestamp:
    """Accepts MM:SS and HH:MM:SS (optionally with a .mmm fraction)."""
    if not isinstance(text, str):
        raise SchemaValidationError(f"not a timestamp string: {text!r}")
    match = _TS_RE.match(text.strip())
    if match is None:
        raise SchemaValidationError(f"malformed timestamp: {text!r}")
    hours, minutes, seconds, frac = match.groups()
    h = int(hours) if hours is not None else 0
    m = int(minutes)
    if hours is not None and m > 59:
        raise SchemaValidationError(f"malformed timestamp: {text!r}")
    total = (h * 3600 + m * 60 + int(seconds)) * 1000
    if frac:
        total += int(frac.ljust(3, "0"))
    return Timestamp(total)


def render_duration(millis: int) -> str:
    return Timestamp(millis).render()


# ---------------------------------------------------------------------------
# manifest and intake


@dataclass(frozen=True)
class PresentationManifest:
    presentation_id: str
    title: str
    author: str
    affiliation: str
    pdf_path: str
    video_path: str
    event_tag: str

    def __post_init__(self):
        if not _ID_RE.match(self.presentation_id):
            raise SchemaValidationError(
                f"presentation_id must match [A-Za-z0-9_-]+, got {self.presentation_id!r}")
        if self.pdf_path == self.video_path:
            raise SchemaValidationError("pdf_path and video_path must differ")

    def to_dict(self) -> dict:
        return {
            "presentation_id": self.presentation_id,
            "title": self.title,
            "author": self.author,
            "affiliation": self.affiliation,
            "pdf_path": self.pdf_path,
            "video_path": self.video_path,
            "event_tag": self.event_tag,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PresentationManifest":
        ctx = "manifest"
        _reject_unknown(data, [f.name for f in fields(cls)], ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            title=_as_str(_take(data, "title", ctx), f"{ctx}.title"),
            author=_as_str(_take(data, "author", ctx), f"{ctx}.author"),
            affiliation=_as_str(_take(data, "affiliation", ctx), f"{ctx}.affiliation"),
            pdf_path=_as_str(_take(data, "pdf_path", ctx), f"{ctx}.pdf_path", nonempty=True),
            video_path=_as_str(_take(data, "video_path", ctx), f"{ctx}.video_path", nonempty=True),
            event_tag=_as_str(_take(data, "event_tag", ctx), f"{ctx}.event_tag", nonempty=True),
        )


_CHECK_VOCABS = {
    "pdf_integrity": frozenset({"verified", "failed"}),
    "video_quality": frozenset({"sufficient", "insufficient"}),
    "metadata_completeness": frozenset({"confirmed", "incomplete"}),
    "author_information": frozenset({"complete", "incomplete"}),
}

_CHECK_PASS = {
    "pdf_integrity": "verified",
    "video_quality": "sufficient",
    "metadata_completeness": "confirmed",
    "author_information": "complete",
}


@dataclass(frozen=True)
class ValidationReport:
    presentation_id: str
    pdf_integrity: str
    video_quality: str
    metadata_completeness: str
    author_information: str
    processing_status: str
    failures: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        for name, vocab in _CHECK_VOCABS.items():
            _as_vocab(getattr(self, name), vocab, f"validation_report.{name}")
        all_pass = all(getattr(self, n) == ok for n, ok in _CHECK_PASS.items())
        expected = "READY" if all_pass else "BLOCKED"
        if self.processing_status != expected:
            raise SchemaValidationError(
                f"processing_status must be {expected} given the check results")
        if (self.processing_status == "BLOCKED") != bool(self.failures):
            raise SchemaValidationError("failures must be non-empty exactly when BLOCKED")

    @property
    def ready(self) -> bool:
        return self.processing_status == "READY"

    def to_dict(self) -> dict:
        return {
            "kind": "validation_report",
            "presentation_id": self.presentation_id,
            "pdf_integrity": self.pdf_integrity,
            "video_quality": self.video_quality,
            "metadata_completeness": self.metadata_completeness,
            "author_information": self.author_information,
            "processing_status": self.processing_status,
            "failures": [{"check": c, "detail": d} for c, d in self.failures],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ValidationReport":
        ctx = "validation_report"
        _check_kind(data, ctx)
        allowed = ["kind", "presentation_id", "pdf_integrity", "video_quality",
                   "metadata_completeness", "author_information", "processing_status", "failures"]
        _reject_unknown(data, allowed, ctx)
        failures = []
        for i, item in enumerate(_as_list(_take(data, "failures", ctx), f"{ctx}.failures")):
            _reject_unknown(item, ["check", "detail"], f"{ctx}.failures[{i}]")
            failures.append((
                _as_str(_take(item, "check", ctx), f"{ctx}.failures[{i}].check"),
                _as_str(_take(item, "detail", ctx), f"{ctx}.failures[{i}].detail"),
            ))
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            pdf_integrity=_take(data, "pdf_integrity", ctx),
            video_quality=_take(data, "video_quality", ctx),
            metadata_completeness=_take(data, "metadata_completeness", ctx),
            author_information=_take(data, "author_information", ctx),
            processing_status=_as_str(_take(data, "processing_status", ctx), f"{ctx}.processing_status"),
            failures=tuple(failures),
        )


# ---------------------------------------------------------------------------
# slides


@dataclass(frozen=True)
class SlideImage:
    index: int
    path: str
    width_px: int
    height_px: int
    dpi: int

    def __post_init__(self):
        _as_int(self.index, "slide.index", minimum=1)
        _as_int(self.width_px, "slide.width_px", minimum=1)
        _as_int(self.height_px, "slide.height_px", minimum=1)
        _as_int(self.dpi, "slide.dpi", minimum=1)
        name = self.path.rsplit("/", 1)[-1]
        if not _SLIDE_FILE_RE.match(name):
            raise SchemaValidationError(f"slide filename {name!r} does not follow the naming pattern")

    def to_dict(self) -> dict:
        return {"index": self.index, "path": self.path, "width_px": self.width_px,
                "height_px": self.height_px, "dpi": self.dpi}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SlideImage":
        ctx = "slide"
        _reject_unknown(data, ["index", "path", "width_px", "height_px", "dpi"], ctx)
        return cls(
            index=_as_int(_take(data, "index", ctx), f"{ctx}.index", minimum=1),
            path=_as_str(_take(data, "path", ctx), f"{ctx}.path", nonempty=True),
            width_px=_as_int(_take(data, "width_px", ctx), f"{ctx}.width_px", minimum=1),
            height_px=_as_int(_take(data, "height_px", ctx), f"{ctx}.height_px", minimum=1),
            dpi=_as_int(_take(data, "dpi", ctx), f"{ctx}.dpi", minimum=1),
        )


@dataclass(frozen=True)
class SlideSet:
    presentation_id: str
    event_tag: str
    slides: tuple[SlideImage, ...]
    source_pdf_hash: str

    def __post_init__(self):
        if not re.fullmatch(r"[0-9a-f]{64}", self.source_pdf_hash):
            raise SchemaValidationError("source_pdf_hash must be 64 lowercase hex digits")
        indices = [s.index for s in self.slides]
        if indices != list(range(1, len(self.slides) + 1)):
            raise SchemaValidationError(f"slide indices must be 1..N contiguous, got {indices}")
        if len({s.dpi for s in self.slides}) > 1:
            raise SchemaValidationError("all slides must share one dpi")
        for s in self.slides:
            expected = slide_filename(self.event_tag, self.presentation_id, s.index)
            if s.path.rsplit("/", 1)[-1] != expected:
                raise SchemaValidationError(f"slide {s.index} filename must be {expected!r}")

    def slide(self, index: int) -> SlideImage:
        return self.slides[index - 1]

    def to_dict(self) -> dict:
        return {
            "kind": "slide_set",
            "presentation_id": self.presentation_id,
            "event_tag": self.event_tag,
            "slides": [s.to_dict() for s in self.slides],
            "source_pdf_hash": self.source_pdf_hash,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SlideSet":
        ctx = "slide_set"
        _check_kind(data, ctx)
        _reject_unknown(data, ["kind", "presentation_id", "event_tag", "slides", "source_pdf_hash"], ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            event_tag=_as_str(_take(data, "event_tag", ctx), f"{ctx}.event_tag", nonempty=True),
            slides=tuple(SlideImage.from_dict(s) for s in _as_list(_take(data, "slides", ctx), f"{ctx}.slides")),
            source_pdf_hash=_as_str(_take(data, "source_pdf_hash", ctx), f"{ctx}.source_pdf_hash"),
        )


# ---------------------------------------------------------------------------
# timeline


@dataclass(frozen=True)
class TransitionEntry:
    slide_index: int
    timestamp: Timestamp
    confidence: float
    duration_until_next: int

    def __post_init__(self):
        _as_int(self.slide_index, "entry.slide_index", minimum=1)
        _as_fraction(self.confidence, "entry.confidence")
        _as_int(self.duration_until_next, "entry.duration_until_next", minimum=0)

    def to_dict(self) -> dict:
        return {
            "slide_index": self.slide_index,
            "timestamp": self.timestamp.render(),
            "confidence": self.confidence,
            "duration_until_next": render_duration(self.duration_until_next),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TransitionEntry":
        ctx = "transition_entry"
        _reject_unknown(data, ["slide_index", "timestamp", "confidence", "duration_until_next"], ctx)
        return cls(
            slide_index=_as_int(_take(data, "slide_index", ctx), f"{ctx}.slide_index", minimum=1),
            timestamp=parse_timestamp(_take(data, "timestamp", ctx)),
            confidence=_as_fraction(_take(data, "confidence", ctx), f"{ctx}.confidence"),
            duration_until_next=parse_timestamp(_take(data, "duration_until_next", ctx)).millis,
        )


@dataclass(frozen=True)
class TransitionMap:
    presentation_id: str
    entries: tuple[TransitionEntry, ...]
    video_duration: Timestamp
    unpresented: tuple[int, ...]

    def __post_init__(self):
        if not self.entries:
            raise SchemaValidationError("transition map must contain at least one entry")
        times = [e.timestamp.millis for e in self.entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise SchemaValidationError("entry timestamps must be strictly increasing")
        total = times[0] + sum(e.duration_until_next for e in self.entries)
        if total != self.video_duration.millis:
            raise SchemaValidationError(
                f"durations must tile the video exactly: first + sum = {total}, "
                f"video_duration = {self.video_duration.millis}")
        presented = {e.slide_index for e in self.entries}
        missing = set(self.unpresented)
        if presented & missing:
            raise SchemaValidationError(f"unpresented overlaps presented: {sorted(presented & missing)}")
        universe = presented | missing
        if universe != set(range(1, max(universe) + 1)):
            raise SchemaValidationError("presented and unpresented must partition 1..N")
        if list(self.unpresented) != sorted(missing):
            raise SchemaValidationError("unpresented must be sorted")

    @property
    def presented(self) -> tuple[int, ...]:
        return tuple(sorted({e.slide_index for e in self.entries}))

    def first_appearances(self) -> dict:
        """Per-slide summary keyed by first appearance (lossy under revisits)."""
        out: dict[str, dict] = {}
        for entry in self.entries:
            key = f"slide_{entry.slide_index:02d}"
            if key not in out:
                out[key] = {
                    "timestamp": entry.timestamp.render(),
                    "confidence": entry.confidence,
                    "duration_until_next": render_duration(entry.duration_until_next),
                }
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "transition_map",
            "presentation_id": self.presentation_id,
            "entries": [e.to_dict() for e in self.entries],
            "video_duration": self.video_duration.render(),
            "unpresented": list(self.unpresented),
            "slide_transitions": self.first_appearances(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TransitionMap":
        ctx = "transition_map"
        _check_kind(data, ctx)
        allowed = ["kind", "presentation_id", "entries", "video_duration", "unpresented", "slide_transitions"]
        _reject_unknown(data, allowed, ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            entries=tuple(TransitionEntry.from_dict(e)
                          for e in _as_list(_take(data, "entries", ctx), f"{ctx}.entries")),
            video_duration=parse_timestamp(_take(data, "video_duration", ctx)),
            unpresented=tuple(_as_int(v, f"{ctx}.unpresented[{i}]", minimum=1)
                              for i, v in enumerate(_as_list(_take(data, "unpresented", ctx), f"{ctx}.unpresented"))),
        )


# ---------------------------------------------------------------------------
# analysis


@dataclass(frozen=True)
class SlideAnalysis:
    slide_index: int
    slide_type: str
    content_summary: str
    comprehensive_analysis: str
    academic_significance: str

    def __post_init__(self):
        _as_int(self.slide_index, "analysis.slide_index", minimum=1)
        _as_vocab(self.slide_type, SLIDE_TYPES, "analysis.slide_type")
        _as_vocab(self.academic_significance, SIGNIFICANCE_LEVELS, "analysis.academic_significance")
        _as_str(self.content_summary, "analysis.content_summary", nonempty=True)
        _as_str(self.comprehensive_analysis, "analysis.comprehensive_analysis", nonempty=True)

    def to_dict(self) -> dict:
        return {
            "slide_index": self.slide_index,
            "slide_type": self.slide_type,
            "content_summary": self.content_summary,
            "comprehensive_analysis": self.comprehensive_analysis,
            "academic_significance": self.academic_significance,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SlideAnalysis":
        ctx = "analysis"
        allowed = ["slide_index", "slide_type", "content_summary",
                   "comprehensive_analysis", "academic_significance"]
        _reject_unknown(data, allowed, ctx)
        return cls(*(_take(data, k, ctx) for k in allowed))


@dataclass(frozen=True)
class SlideAnalysisSet:
    presentation_id: str
    analyses: tuple[SlideAnalysis, ...]

    def __post_init__(self):
        indices = [a.slide_index for a in self.analyses]
        if indices != sorted(set(indices)):
            raise SchemaValidationError("analyses must be sorted by slide_index without duplicates")

    def by_index(self) -> dict[int, SlideAnalysis]:
        return {a.slide_index: a for a in self.analyses}

    def to_dict(self) -> dict:
        return {
            "kind": "slide_analyses",
            "presentation_id": self.presentation_id,
            "analyses": [a.to_dict() for a in self.analyses],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SlideAnalysisSet":
        ctx = "slide_analyses"
        _check_kind(data, ctx)
        _reject_unknown(data, ["kind", "presentation_id", "analyses"], ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            analyses=tuple(SlideAnalysis.from_dict(a)
                           for a in _as_list(_take(data, "analyses", ctx), f"{ctx}.analyses")),
        )


# ---------------------------------------------------------------------------
# curation


@dataclass(frozen=True)
class CurationDecision:
    slide_index: int
    role: str
    include: bool
    reason: str
    source: str

    def __post_init__(self):
        _as_int(self.slide_index, "decision.slide_index", minimum=1)
        _as_vocab(self.role, SLIDE_ROLES, "decision.role")
        _as_vocab(self.source, DECISION_SOURCES, "decision.source")
        _as_str(self.reason, "decision.reason", nonempty=True)

    def to_dict(self) -> dict:
        return {"slide_index": self.slide_index, "role": self.role,
                "include": self.include, "reason": self.reason, "source": self.source}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CurationDecision":
        ctx = "decision"
        _reject_unknown(data, ["slide_index", "role", "include", "reason", "source"], ctx)
        return cls(
            slide_index=_as_int(_take(data, "slide_index", ctx), f"{ctx}.slide_index", minimum=1),
            role=_take(data, "role", ctx),
            include=_as_bool(_take(data, "include", ctx), f"{ctx}.include"),
            reason=_take(data, "reason", ctx),
            source=_take(data, "source", ctx),
        )


@dataclass(frozen=True)
class CurationPlan:
    presentation_id: str
    decisions: tuple[CurationDecision, ...]
    overlay_chains: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        indices = [d.slide_index for d in self.decisions]
        if indices != sorted(set(indices)):
            raise SchemaValidationError("exactly one decision per slide, sorted by index")
        seen: set[int] = set()
        for chain in self.overlay_chains:
            if len(chain) < 2:
                raise SchemaValidationError(f"overlay chain too short: {chain}")
            if list(chain) != sorted(chain):
                raise SchemaValidationError(f"overlay chain must be ascending: {chain}")
            if seen & set(chain):
                raise SchemaValidationError("a slide may belong to at most one overlay chain")
            seen.update(chain)
        by_index = {d.slide_index: d for d in self.decisions}
        for chain in self.overlay_chains:
            for idx in chain[:-1]:
                d = by_index.get(idx)
                if d is not None and d.include and d.source != "override":
                    raise SchemaValidationError(
                        f"non-final overlay slide {idx} may be included only by override")

    def decision(self, index: int) -> CurationDecision:
        for d in self.decisions:
            if d.slide_index == index:
                return d
        raise SchemaValidationError(f"no curation decision for slide {index}")

    def included_indices(self) -> tuple[int, ...]:
        return tuple(d.slide_index for d in self.decisions if d.include)

    def to_dict(self) -> dict:
        return {
            "kind": "curation_plan",
            "presentation_id": self.presentation_id,
            "decisions": [d.to_dict() for d in self.decisions],
            "overlay_chains": [list(c) for c in self.overlay_chains],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CurationPlan":
        ctx = "curation_plan"
        _check_kind(data, ctx)
        _reject_unknown(data, ["kind", "presentation_id", "decisions", "overlay_chains"], ctx)
        chains = []
        for i, chain in enumerate(_as_list(_take(data, "overlay_chains", ctx), f"{ctx}.overlay_chains")):
            chains.append(tuple(_as_int(v, f"{ctx}.overlay_chains[{i}]", minimum=1)
                                for v in _as_list(chain, f"{ctx}.overlay_chains[{i}]")))
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            decisions=tuple(CurationDecision.from_dict(d)
                            for d in _as_list(_take(data, "decisions", ctx), f"{ctx}.decisions")),
            overlay_chains=tuple(chains),
        )


# ---------------------------------------------------------------------------
# transcript


@dataclass(frozen=True)
class TranscriptSegment:
    start: Timestamp
    end: Timestamp
    raw_text: str
    clean_text: str

    def __post_init__(self):
        if not self.start < self.end:
            raise SchemaValidationError(
                f"segment start must precede end ({self.start} >= {self.end})")

    def to_dict(self) -> dict:
        return {"start": self.start.render(), "end": self.end.render(),
                "raw_text": self.raw_text, "clean_text": self.clean_text}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TranscriptSegment":
        ctx = "segment"
        _reject_unknown(data, ["start", "end", "raw_text", "clean_text"], ctx)
        return cls(
            start=parse_timestamp(_take(data, "start", ctx)),
            end=parse_timestamp(_take(data, "end", ctx)),
            raw_text=_as_str(_take(data, "raw_text", ctx), f"{ctx}.raw_text"),
            clean_text=_as_str(_take(data, "clean_text", ctx), f"{ctx}.clean_text"),
        )


@dataclass(frozen=True)
class Transcript:
    presentation_id: str
    segments: tuple[TranscriptSegment, ...]

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if b.start < a.end:
                raise SchemaValidationError(
                    f"segments must be time-ordered and non-overlapping ({a.end} > {b.start})")

    def to_dict(self) -> dict:
        return {
            "kind": "transcript",
            "presentation_id": self.presentation_id,
            "segments": [s.to_dict() for s in self.segments],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Transcript":
        ctx = "transcript"
        _check_kind(data, ctx)
        _reject_unknown(data, ["kind", "presentation_id", "segments"], ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            segments=tuple(TranscriptSegment.from_dict(s)
                           for s in _as_list(_take(data, "segments", ctx), f"{ctx}.segments")),
        )


# ---------------------------------------------------------------------------
# storyboard


@dataclass(frozen=True)
class StoryboardBlock:
    block: int
    slide_file: str
    slide_timestamp: Timestamp
    speech: str
    included_in_publication: bool

    def __post_init__(self):
        _as_int(self.block, "block.number", minimum=1)
        _as_str(self.slide_file, "block.slide_file", nonempty=True)

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "slide": {"file": self.slide_file, "timestamp": self.slide_timestamp.render()},
            "speech": self.speech,
            "included_in_publication": self.included_in_publication,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StoryboardBlock":
        ctx = "storyboard_block"
        _reject_unknown(data, ["block", "slide", "speech", "included_in_publication"], ctx)
        slide = _take(data, "slide", ctx)
        _reject_unknown(slide, ["file", "timestamp"], f"{ctx}.slide")
        return cls(
            block=_as_int(_take(data, "block", ctx), f"{ctx}.block", minimum=1),
            slide_file=_as_str(_take(slide, "file", ctx), f"{ctx}.slide.file", nonempty=True),
            slide_timestamp=parse_timestamp(_take(slide, "timestamp", ctx)),
            speech=_as_str(_take(data, "speech", ctx), f"{ctx}.speech"),
            included_in_publication=_as_bool(_take(data, "included_in_publication", ctx),
                                             f"{ctx}.included_in_publication"),
        )


@dataclass(frozen=True)
class Storyboard:
    presentation_id: str
    blocks: tuple[StoryboardBlock, ...]

    def __post_init__(self):
        numbers = [b.block for b in self.blocks]
        if numbers != list(range(1, len(self.blocks) + 1)):
            raise SchemaValidationError(f"block numbers must be 1..N contiguous, got {numbers}")
        times = [b.slide_timestamp.millis for b in self.blocks]
        if times != sorted(times) or len(set(times)) != len(times):
            raise SchemaValidationError("blocks must be strictly ordered by timestamp")

    def to_dict(self) -> dict:
        return {
            "kind": "storyboard",
            "presentation_id": self.presentation_id,
            "blocks": [b.to_dict() for b in self.blocks],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Storyboard":
        ctx = "storyboard"
        _check_kind(data, ctx)
        _reject_unknown(data, ["kind", "presentation_id", "blocks"], ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            blocks=tuple(StoryboardBlock.from_dict(b)
                         for b in _as_list(_take(data, "blocks", ctx), f"{ctx}.blocks")),
        )


# ---------------------------------------------------------------------------
# synthesis


@dataclass(frozen=True)
class ContentSection:
    number: int
    title: str
    outline: tuple[str, ...]
    text: str
    source_blocks: tuple[int, ...]
    transformation_type: str

    def __post_init__(self):
        _as_int(self.number, "section.number", minimum=1)
        _as_str(self.title, "section.title", nonempty=True)
        _as_vocab(self.transformation_type, TRANSFORMATION_TYPES, "section.transformation_type")
        if not self.source_blocks:
            raise SchemaValidationError(f"section {self.number} must cite source blocks")

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "title": self.title,
            "outline": list(self.outline),
            "text": self.text,
            "source_blocks": list(self.source_blocks),
            "transformation_type": self.transformation_type,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ContentSection":
        ctx = "section"
        allowed = ["number", "title", "outline", "text", "source_blocks", "transformation_type"]
        _reject_unknown(data, allowed, ctx)
        return cls(
            number=_as_int(_take(data, "number", ctx), f"{ctx}.number", minimum=1),
            title=_take(data, "title", ctx),
            outline=tuple(_as_str(v, f"{ctx}.outline[{i}]")
                          for i, v in enumerate(_as_list(_take(data, "outline", ctx), f"{ctx}.outline"))),
            text=_as_str(_take(data, "text", ctx), f"{ctx}.text"),
            source_blocks=tuple(_as_int(v, f"{ctx}.source_blocks[{i}]", minimum=1)
                                for i, v in enumerate(_as_list(_take(data, "source_blocks", ctx), f"{ctx}.source_blocks"))),
            transformation_type=_take(data, "transformation_type", ctx),
        )


@dataclass(frozen=True)
class CoverageEntry:
    """Where one storyboard block landed: section numbers, or dropped with a reason."""

    block: int
    sections: tuple[int, ...] = ()
    dropped: str | None = None

    def __post_init__(self):
        _as_int(self.block, "coverage.block", minimum=1)
        if bool(self.sections) == (self.dropped is not None):
            raise SchemaValidationError(
                f"coverage for block {self.block} must list sections or carry a dropped reason")

    def to_dict(self) -> dict:
        if self.dropped is not None:
            return {"block": self.block, "dropped": self.dropped}
        return {"block": self.block, "sections": list(self.sections)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CoverageEntry":
        ctx = "coverage"
        _reject_unknown(data, ["block", "sections", "dropped"], ctx)
        block = _as_int(_take(data, "block", ctx), f"{ctx}.block", minimum=1)
        if "dropped" in data:
            return cls(block=block, dropped=_as_str(data["dropped"], f"{ctx}.dropped", nonempty=True))
        sections = tuple(_as_int(v, f"{ctx}.sections[{i}]", minimum=1)
                         for i, v in enumerate(_as_list(_take(data, "sections", ctx), f"{ctx}.sections")))
        return cls(block=block, sections=sections)


@dataclass(frozen=True)
class ContentReport:
    presentation_id: str
    overview: str
    sections: tuple[ContentSection, ...]
    block_coverage: tuple[CoverageEntry, ...]

    def __post_init__(self):
        _as_str(self.overview, "report.overview", nonempty=True)
        blocks = [c.block for c in self.block_coverage]
        if blocks != sorted(set(blocks)):
            raise SchemaValidationError("block_coverage must be sorted by block without duplicates")

    def coverage_by_block(self) -> dict[int, CoverageEntry]:
        return {c.block: c for c in self.block_coverage}

    def to_dict(self) -> dict:
        return {
            "kind": "content_report",
            "presentation_id": self.presentation_id,
            "overview": self.overview,
            "sections": [s.to_dict() for s in self.sections],
            "block_coverage": [c.to_dict() for c in self.block_coverage],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ContentReport":
        ctx = "content_report"
        _check_kind(data, ctx)
        _reject_unknown(data, ["kind", "presentation_id", "overview", "sections", "block_coverage"], ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            overview=_take(data, "overview", ctx),
            sections=tuple(ContentSection.from_dict(s)
                           for s in _as_list(_take(data, "sections", ctx), f"{ctx}.sections")),
            block_coverage=tuple(CoverageEntry.from_dict(c)
                                 for c in _as_list(_take(data, "block_coverage", ctx), f"{ctx}.block_coverage")),
        )


@dataclass(frozen=True)
class CoverageVerdict:
    uncovered_blocks: tuple[int, ...]
    empty_text_sections: tuple[int, ...]
    numbering_issues: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not (self.uncovered_blocks or self.empty_text_sections or self.numbering_issues)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "uncovered_blocks": list(self.uncovered_blocks),
            "empty_text_sections": list(self.empty_text_sections),
            "numbering_issues": list(self.numbering_issues),
        }


# ---------------------------------------------------------------------------
# quality and run bookkeeping


@dataclass(frozen=True)
class QualityMetricsReport:
    presentation_id: str
    evaluator_id: str
    content_completeness: float | None = None
    academic_rigor: str | None = None
    technical_precision: float | None = None
    narrative_coherence: float | None = None

    def __post_init__(self):
        _as_str(self.evaluator_id, "quality.evaluator_id", nonempty=True)
        for name in ("content_completeness", "technical_precision", "narrative_coherence"):
            value = getattr(self, name)
            if value is not None:
                _as_fraction(value, f"quality.{name}")
        if self.academic_rigor is not None:
            _as_vocab(self.academic_rigor, RIGOR_LEVELS, "quality.academic_rigor")

    def to_dict(self) -> dict:
        return {
            "kind": "quality_metrics",
            "presentation_id": self.presentation_id,
            "evaluator_id": self.evaluator_id,
            "content_completeness": self.content_completeness,
            "academic_rigor": self.academic_rigor,
            "technical_precision": self.technical_precision,
            "narrative_coherence": self.narrative_coherence,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QualityMetricsReport":
        ctx = "quality_metrics"
        _check_kind(data, ctx)
        allowed = ["kind", "presentation_id", "evaluator_id", "content_completeness",
                   "academic_rigor", "technical_precision", "narrative_coherence"]
        _reject_unknown(data, allowed, ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            evaluator_id=_take(data, "evaluator_id", ctx),
            content_completeness=_take(data, "content_completeness", ctx),
            academic_rigor=_take(data, "academic_rigor", ctx),
            technical_precision=_take(data, "technical_precision", ctx),
            narrative_coherence=_take(data, "narrative_coherence", ctx),
        )


@dataclass(frozen=True)
class PipelineResult:
    presentation_id: str
    status: str
    failed_stage: str | None
    stage_timings: tuple[tuple[str, int], ...]
    artifact_digests: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if self.status not in ("COMPLETE", "FAILED"):
            raise SchemaValidationError(f"status must be COMPLETE or FAILED, got {self.status!r}")
        if (self.status == "FAILED") != (self.failed_stage is not None):
            raise SchemaValidationError("failed_stage must be set exactly when FAILED")
        for stage, _ in self.stage_timings:
            if stage not in STAGE_ORDER:
                raise SchemaValidationError(f"unknown stage in timings: {stage!r}")

    def timings_dict(self) -> dict[str, int]:
        return dict(self.stage_timings)

    def to_dict(self) -> dict:
        return {
            "kind": "run_result",
            "presentation_id": self.presentation_id,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "stage_timings": {stage: ms for stage, ms in self.stage_timings},
            "artifact_digests": {name: digest for name, digest in self.artifact_digests},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineResult":
        ctx = "run_result"
        _check_kind(data, ctx)
        allowed = ["kind", "presentation_id", "status", "failed_stage",
                   "stage_timings", "artifact_digests"]
        _reject_unknown(data, allowed, ctx)
        timings = _take(data, "stage_timings", ctx)
        if not isinstance(timings, dict):
            raise SchemaValidationError(f"{ctx}.stage_timings must be an object")
        ordered = tuple((stage, _as_int(timings[stage], f"{ctx}.stage_timings.{stage}", minimum=0))
                        for stage in STAGE_ORDER if stage in timings)
        if len(ordered) != len(timings):
            unknown = sorted(set(timings) - set(STAGE_ORDER))
            raise SchemaValidationError(f"{ctx}.stage_timings has unknown stages", unknown)
        digests = _take(data, "artifact_digests", ctx)
        if not isinstance(digests, dict):
            raise SchemaValidationError(f"{ctx}.artifact_digests must be an object")
        failed_stage = _take(data, "failed_stage", ctx)
        return cls(
            presentation_id=_as_str(_take(data, "presentation_id", ctx), f"{ctx}.presentation_id", nonempty=True),
            status=_as_str(_take(data, "status", ctx), f"{ctx}.status"),
            failed_stage=None if failed_stage is None else _as_str(failed_stage, f"{ctx}.failed_stage"),
            stage_timings=ordered,
            artifact_digests=tuple(sorted((k, _as_str(v, f"{ctx}.artifact_digests.{k}"))
                                          for k, v in digests.items())),
        )


# ---------------------------------------------------------------------------
# canonical bytes


ARTIFACT_TYPES = {
    "validation_report": ValidationReport,
    "slide_set": SlideSet,
    "transition_map": TransitionMap,
    "slide_analyses": SlideAnalysisSet,
    "curation_plan": CurationPlan,
    "transcript": Transcript,
    "storyboard": Storyboard,
    "content_report": ContentReport,
    "quality_metrics": QualityMetricsReport,
    "run_result": PipelineResult,
}

ARTIFACT_FILES = {
    "validation_report": "00_validation.json",
    "slide_set": "01_slide_set.json",
    "transition_map": "02_transition_map.json",
    "slide_analyses": "03_slide_analyses.json",
    "curation_plan": "04_curation_plan.json",
    "transcript": "06_transcript.json",
    "storyboard": "07_storyboard.json",
    "content_report": "08_content_report.json",
    "quality_metrics": "10_quality.json",
}

STAGE_ARTIFACTS = {
    "intake": "validation_report",
    "extract": "slide_set",
    "sync": "transition_map",
    "analyze": "slide_analyses",
    "curate": "curation_plan",
    "transcribe": "transcript",
    "storyboard": "storyboard",
    "synthesize": "content_report",
    "qa": "quality_metrics",
}


def canonical_json_bytes(payload: Any) -> bytes:
    text = json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2)
    return (text + "\n").encode("utf-8")


def serialize_artifact(artifact: Any) -> bytes:
    return canonical_json_bytes(artifact.to_dict())


def deserialize_artifact(data: bytes):
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaValidationError(f"artifact is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise SchemaValidationError("artifact must be a JSON object")
    kind = payload.get("kind")
    cls = ARTIFACT_TYPES.get(kind)
    if cls is None:
        raise SchemaValidationError(f"unknown artifact kind: {kind!r}")
    return cls.from_dict(payload)


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
