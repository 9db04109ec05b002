"""Thematic reorganization of the storyboard into a content report.

One request carries the whole storyboard plus the per-slide analyses; the
model must return sections with explicit source_blocks and a block-by-block
coverage map, which validate_report audits afterwards. Structure is
verified here; prose quality never is.
"""

from __future__ import annotations

import json

from .errors import StageInputError
from .gateway import Gateway
from .model import (
    ContentReport,
    ContentSection,
    CoverageEntry,
    CoverageVerdict,
    PresentationManifest,
    SlideAnalysisSet,
    Storyboard,
)

TEMPLATE = "generate_content_report"


def generate_content_report(storyboard: Storyboard, analyses: SlideAnalysisSet,
                            manifest: PresentationManifest, gateway: Gateway) -> ContentReport:
    if storyboard.presentation_id != analyses.presentation_id:
        raise StageInputError(
            f"artifacts come from different presentations: storyboard="
            f"{storyboard.presentation_id}, analyses={analyses.presentation_id}")
    if not storyboard.blocks:
        raise StageInputError("cannot synthesize a report from an empty storyboard")
    storyboard_json = json.dumps([b.to_dict() for b in storyboard.blocks], indent=2)
    analyses_json = json.dumps([a.to_dict() for a in analyses.analyses], indent=2)
    parsed = gateway.run(
        TEMPLATE,
        {
            "title": manifest.title,
            "block_count": len(storyboard.blocks),
            "storyboard_json": storyboard_json,
            "analyses_json": analyses_json,
        },
        context={
            "title": manifest.title,
            "blocks": [{"block": b.block, "speech": b.speech,
                        "included": b.included_in_publication}
                       for b in storyboard.blocks],
        },
    )
    sections = tuple(
        ContentSection(
            number=s["number"],
            title=s["title"],
            outline=tuple(s["outline"]),
            text=s["text"],
            source_blocks=tuple(s["source_blocks"]),
            transformation_type=s["transformation_type"],
        )
        for s in parsed["sections"])
    coverage = tuple(
        CoverageEntry(
            block=c["block"],
            sections=tuple(c.get("sections", ())),
            dropped=c.get("dropped"),
        )
        for c in sorted(parsed["block_coverage"], key=lambda c: c["block"]))
    return ContentReport(
        presentation_id=storyboard.presentation_id,
        overview=parsed["overview"],
        sections=sections,
        block_coverage=coverage,
    )


def validate_report(report: ContentReport, storyboard: Storyboard) -> CoverageVerdict:
    covered = report.coverage_by_block()
    uncovered = tuple(b.block for b in storyboard.blocks if b.block not in covered)
    empty_text = tuple(s.number for s in report.sections if not s.text.strip())
    numbers = [s.number for s in report.sections]
    numbering = tuple(
        issue for issue in (
            None if numbers == sorted(numbers) else "sections out of order",
            None if numbers == list(range(1, len(numbers) + 1)) else
            f"expected 1..{len(numbers)}, got {numbers}",
        ) if issue is not None)
    known_sections = set(numbers)
    phantom = sorted({n for entry in covered.values() for n in entry.sections}
                     - known_sections)
    if phantom:
        numbering = numbering + (f"coverage cites unknown section(s) {phantom}",)
    return CoverageVerdict(
        uncovered_blocks=uncovered,
        empty_text_sections=empty_text,
        numbering_issues=numbering,
    )
