"""Per-slide semantic annotation through the model gateway.

Each slide image is cached (so reruns upload nothing) and classified with
one request; requests fan out up to the gateway's concurrency bound and the
results are reassembled in slide order. Either every slide gets an analysis
or the stage fails as a whole.
"""

from __future__ import annotations

from pathlib import Path

from .gateway import Gateway
from .model import PresentationManifest, SlideAnalysis, SlideAnalysisSet, SlideSet

TEMPLATE = "classify_slide_type"


def deck_context(manifest: PresentationManifest, slide_set: SlideSet) -> str:
    return (f"{manifest.title!r} by {manifest.author} ({manifest.affiliation}), "
            f"{len(slide_set.slides)} slides")


def analyze_slides(slide_set: SlideSet, manifest: PresentationManifest,
                   gateway: Gateway, work_dir: Path) -> SlideAnalysisSet:
    context = deck_context(manifest, slide_set)
    requests = []
    for slide in slide_set.slides:
        handle = gateway.cache_media(Path(work_dir) / slide.path)
        requests.append(gateway.build_request(
            TEMPLATE,
            {"slide_index": slide.index, "deck_context": context},
            media=[handle],
            context={"slide_index": slide.index},
        ))
    responses = gateway.map_submit(requests)
    analyses = tuple(
        SlideAnalysis(
            slide_index=slide.index,
            slide_type=response.parsed["slide_type"],
            content_summary=response.parsed["content_summary"],
            comprehensive_analysis=response.parsed["comprehensive_analysis"],
            academic_significance=response.parsed["academic_significance"],
        )
        for slide, response in zip(slide_set.slides, responses)
    )
    return SlideAnalysisSet(presentation_id=slide_set.presentation_id, analyses=analyses)
