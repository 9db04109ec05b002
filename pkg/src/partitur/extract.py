"""Rasterize every PDF page into the slides/ directory with canonical names."""

from __future__ import annotations

from pathlib import Path

from .errors import PdfError
from .model import SlideImage, SlideSet, digest_file, slide_filename
from .pdfio import PdfDocument

DEFAULT_DPI = 300


def extract_slides(pdf_path: Path, work_dir: Path, *, dpi: int,
                   event_tag: str, presentation_id: str,
                   previous: SlideSet | None = None) -> SlideSet:
    """One PNG per page under work_dir/slides/.

    When `previous` matches the current PDF digest and all of its files are
    still present, nothing is written and `previous` is returned unchanged.
    Partial output from a failed run is removed before the error propagates.
    """
    if not 72 <= dpi <= 600:
        raise PdfError(f"dpi must lie in [72, 600], got {dpi}")
    pdf_hash = digest_file(pdf_path)
    slides_dir = Path(work_dir) / "slides"

    if previous is not None and previous.source_pdf_hash == pdf_hash and previous.slides:
        if (all((Path(work_dir) / s.path).is_file() for s in previous.slides)
                and previous.slides[0].dpi == dpi):
            return previous

    doc = PdfDocument.open(pdf_path)
    slides_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    slides: list[SlideImage] = []
    try:
        for page in range(1, doc.page_count + 1):
            try:
                image = doc.render_page(page, dpi=dpi)
            except PdfError as exc:
                raise PdfError(f"page {page}: {exc}") from exc
            name = slide_filename(event_tag, presentation_id, page)
            target = slides_dir / name
            image.save(target, format="PNG")
            written.append(target)
            slides.append(SlideImage(
                index=page,
                path=f"slides/{name}",
                width_px=image.width,
                height_px=image.height,
                dpi=dpi,
            ))
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return SlideSet(
        presentation_id=presentation_id,
        event_tag=event_tag,
        slides=tuple(slides),
        source_pdf_hash=pdf_hash,
    )
