"""Publication document assembly: chapter.qmd plus copied figures.

The document is pandoc-flavored markdown with YAML front matter (title,
author, affiliation, abstract from the report overview), one top-level
section per ContentSection in report order, and each section's figures
drawn from its source blocks' slides, restricted to curation-included
slides. A slide cited by several sections is embedded once, at its first
reference; captions come from the per-slide content_summary. Rendering is
a pure function of its inputs, so unchanged inputs give byte-identical
output.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

from .errors import StageInputError
from .model import (
    ContentReport,
    CurationPlan,
    PresentationManifest,
    SlideAnalysisSet,
    SlideSet,
    Storyboard,
)

DOCUMENT_NAME = "chapter.qmd"
FIGURES_DIR = "figures"


@dataclass(frozen=True)
class DocumentBundle:
    document_path: Path
    figures: tuple[str, ...]
    front_matter: dict


def render_document(report: ContentReport, storyboard: Storyboard,
                    curation_plan: CurationPlan, slide_set: SlideSet,
                    analyses: SlideAnalysisSet, manifest: PresentationManifest,
                    *, work_dir: Path, out_dir: Path) -> DocumentBundle:
    _check_same_presentation(report, storyboard, curation_plan, slide_set,
                             analyses, manifest)
    out_dir = Path(out_dir)
    figures_dir = out_dir / FIGURES_DIR
    figures_dir.mkdir(parents=True, exist_ok=True)

    summaries = {a.slide_index: a.content_summary for a in analyses.analyses}
    front_matter = {
        "title": manifest.title,
        "author": manifest.author,
        "affiliation": manifest.affiliation,
        "abstract": report.overview,
    }

    lines = ["---"]
    for key, value in front_matter.items():
        lines.append(f"{key}: {json.dumps(value, ensure_ascii=False)}")
    lines.append("---")

    embedded: list[str] = []
    seen_slides: set[int] = set()
    for section in report.sections:
        lines.append("")
        lines.append(f"# {section.number}. {section.title}")
        lines.append("")
        lines.append(section.text)
        for block_number in section.source_blocks:
            if not 1 <= block_number <= len(storyboard.blocks):
                raise StageInputError(
                    f"section {section.number} cites block {block_number}, but the "
                    f"storyboard has {len(storyboard.blocks)} blocks")
            block = storyboard.blocks[block_number - 1]
            index = _slide_index_of(block.slide_file)
            if index in seen_slides or not curation_plan.decision(index).include:
                continue
            seen_slides.add(index)
            source = Path(work_dir) / slide_set.slide(index).path
            if not source.is_file():
                raise StageInputError(f"figure source missing: {source}")
            shutil.copyfile(source, figures_dir / block.slide_file)
            relative = f"{FIGURES_DIR}/{block.slide_file}"
            embedded.append(relative)
            caption = _escape_caption(summaries[index])
            lines.append("")
            lines.append(f"![{caption}]({relative})")
    lines.append("")

    document_path = out_dir / DOCUMENT_NAME
    document_path.write_text("\n".join(lines), encoding="utf-8")
    return DocumentBundle(document_path=document_path, figures=tuple(embedded),
                          front_matter=front_matter)


def _check_same_presentation(report, storyboard, curation_plan, slide_set,
                             analyses, manifest) -> None:
    ids = {
        "report": report.presentation_id,
        "storyboard": storyboard.presentation_id,
        "curation plan": curation_plan.presentation_id,
        "slide set": slide_set.presentation_id,
        "analyses": analyses.presentation_id,
        "manifest": manifest.presentation_id,
    }
    if len(set(ids.values())) != 1:
        detail = ", ".join(f"{k}={v}" for k, v in ids.items())
        raise StageInputError(f"artifacts come from different presentations: {detail}")


def _slide_index_of(slide_file: str) -> int:
    stem = slide_file.rsplit("_", 1)[-1].removesuffix(".png")
    return int(stem)


def _escape_caption(text: str) -> str:
    return text.replace("[", "\\[").replace("]", "\\]")
