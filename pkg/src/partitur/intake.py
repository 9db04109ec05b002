"""Source-material validation: the gate every run must pass before work starts.

The report is a pure function of the manifest and the referenced file
contents, so repeated validation of unchanged inputs is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import pdfio, videoio
from .errors import ManifestError, PartiturError, PdfError, SchemaValidationError
from .model import PresentationManifest, ValidationReport

MIN_VIDEO_WIDTH = 640
MIN_VIDEO_HEIGHT = 360


def load_manifest(work_dir: Path) -> PresentationManifest:
    path = Path(work_dir) / "manifest.json"
    try:
        payload = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path} is not valid JSON: {exc}") from exc
    try:
        return PresentationManifest.from_dict(payload)
    except SchemaValidationError as exc:
        raise ManifestError(f"{path}: {exc}") from exc


def resolve_input(work_dir: Path, candidate: str) -> Path:
    path = Path(candidate)
    return path if path.is_absolute() else Path(work_dir) / path


def validate_inputs(manifest: PresentationManifest, work_dir: Path, *,
                    min_width: int = MIN_VIDEO_WIDTH,
                    min_height: int = MIN_VIDEO_HEIGHT) -> ValidationReport:
    failures: list[tuple[str, str]] = []

    pdf_path = resolve_input(work_dir, manifest.pdf_path)
    try:
        pages = pdfio.page_count(pdf_path)
        if pages < 1:
            raise PdfError("no pages")
        pdf_integrity = "verified"
    except PartiturError as exc:
        pdf_integrity = "failed"
        failures.append(("pdf_integrity", str(exc)))

    video_path = resolve_input(work_dir, manifest.video_path)
    try:
        info = videoio.probe_video(video_path)
        problems = []
        if info.duration_ms <= 0:
            problems.append("zero duration")
        if info.width < min_width or info.height < min_height:
            problems.append(
                f"resolution {info.width}x{info.height} below minimum {min_width}x{min_height}")
        if problems:
            raise PartiturError("; ".join(problems))
        video_quality = "sufficient"
    except PartiturError as exc:
        video_quality = "insufficient"
        failures.append(("video_quality", str(exc)))

    metadata_missing = [name for name in ("title", "event_tag")
                        if not getattr(manifest, name).strip()]
    if metadata_missing:
        metadata_completeness = "incomplete"
        failures.append(("metadata_completeness", f"empty fields: {', '.join(metadata_missing)}"))
    else:
        metadata_completeness = "confirmed"

    author_missing = [name for name in ("author", "affiliation")
                      if not getattr(manifest, name).strip()]
    if author_missing:
        author_information = "incomplete"
        failures.append(("author_information", f"empty fields: {', '.join(author_missing)}"))
    else:
        author_information = "complete"

    return ValidationReport(
        presentation_id=manifest.presentation_id,
        pdf_integrity=pdf_integrity,
        video_quality=video_quality,
        metadata_completeness=metadata_completeness,
        author_information=author_information,
        processing_status="READY" if not failures else "BLOCKED",
        failures=tuple(failures),
    )
