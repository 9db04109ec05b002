"""Slide annotation through the gateway, and storyboard assembly."""

import pytest

from builders import slide_image, talk_timeline

from partitur.analysis import analyze_slides
from partitur.curator import build_curation_plan, classify_roles, detect_overlay_chains
from partitur.errors import ProviderExhausted, StageInputError
from partitur.fingerprint import fingerprint_image
from partitur.gateway import Gateway, MockProvider
from partitur.model import (
    PresentationManifest,
    SlideAnalysis,
    SlideAnalysisSet,
    SlideImage,
    SlideSet,
    slide_filename,
)
from partitur.storyboard import build_storyboard
from partitur.transcript import assign_speech


def make_manifest(presentation_id="003"):
    return PresentationManifest(
        presentation_id=presentation_id, title="Attention in Practice",
        author="A. Researcher", affiliation="Example Lab",
        pdf_path="deck.pdf", video_path="talk.mp4", event_tag="ai-nepi")


def materialize_slides(tmp_path, n, presentation_id="003", event_tag="ai-nepi"):
    (tmp_path / "slides").mkdir(exist_ok=True)
    slides = []
    for i in range(1, n + 1):
        name = slide_filename(event_tag, presentation_id, i)
        img = slide_image(i)
        img.save(tmp_path / "slides" / name)
        slides.append(SlideImage(index=i, path=f"slides/{name}",
                                 width_px=img.width, height_px=img.height, dpi=72))
    return SlideSet(presentation_id=presentation_id, event_tag=event_tag,
                    slides=tuple(slides), source_pdf_hash="0" * 64)


class TestAnalyzeSlides:
    def test_every_slide_analyzed_in_order(self, tmp_path):
        slide_set = materialize_slides(tmp_path, 17)
        gw = Gateway(MockProvider(), tmp_path / "cache.json", sleeper=lambda s: None)
        analyses = analyze_slides(slide_set, make_manifest(), gw, tmp_path)
        assert [a.slide_index for a in analyses.analyses] == list(range(1, 18))
        assert analyses.analyses[0].slide_type == "title"
        assert all(a.content_summary for a in analyses.analyses)

    def test_rerun_uploads_nothing_new(self, tmp_path):
        slide_set = materialize_slides(tmp_path, 5)
        provider = MockProvider()
        gw = Gateway(provider, tmp_path / "cache.json", sleeper=lambda s: None)
        analyze_slides(slide_set, make_manifest(), gw, tmp_path)
        assert provider.uploads == 5
        analyze_slides(slide_set, make_manifest(), gw, tmp_path)
        assert provider.uploads == 5

    def test_deterministic_across_runs(self, tmp_path):
        slide_set = materialize_slides(tmp_path, 6)
        gw = Gateway(MockProvider(), tmp_path / "cache.json", sleeper=lambda s: None)
        first = analyze_slides(slide_set, make_manifest(), gw, tmp_path)
        second = analyze_slides(slide_set, make_manifest(), gw, tmp_path)
        assert first == second

    def test_provider_failure_fails_whole_stage(self, tmp_path):
        class DownProvider(MockProvider):
            def generate(self, request):
                raise ProviderExhausted("budget spent")

        slide_set = materialize_slides(tmp_path, 3)
        gw = Gateway(DownProvider(), tmp_path / "cache.json", sleeper=lambda s: None)
        with pytest.raises(ProviderExhausted):
            analyze_slides(slide_set, make_manifest(), gw, tmp_path)


def canned_analyses(types, presentation_id="003"):
    return SlideAnalysisSet(
        presentation_id=presentation_id,
        analyses=tuple(
            SlideAnalysis(slide_index=i, slide_type=t, content_summary=f"summary {i}",
                          comprehensive_analysis=f"analysis {i}",
                          academic_significance="medium")
            for i, t in enumerate(types, start=1)))


def talk_plan(slide_set, presentation_id="003"):
    types = ["title", "agenda"] + ["conceptual"] * 15
    roles = classify_roles(slide_set, canned_analyses(types, presentation_id))
    images = {s.index: slide_image(s.index) for s in slide_set.slides}
    fps = [fingerprint_image(images[s.index]) for s in slide_set.slides]
    chains = detect_overlay_chains(slide_set, fps)
    return build_curation_plan(presentation_id, roles, chains)


class TestBuildStoryboard:
    def test_paper_shaped_timeline(self, tmp_path):
        tm = talk_timeline()
        slide_set = materialize_slides(tmp_path, 17)
        plan = talk_plan(slide_set)
        speech = tuple(f"speech for block {i}" for i in range(1, 15))
        board = build_storyboard(tm, plan, speech, slide_set)
        assert len(board.blocks) == 14
        third = board.blocks[2]
        assert third.block == 3
        assert third.slide_file == "ai-nepi_003_slide_03.png"
        assert third.slide_timestamp.millis == 41_000
        assert third.speech == "speech for block 3"

    def test_unpresented_slides_absent(self, tmp_path):
        tm = talk_timeline()
        slide_set = materialize_slides(tmp_path, 17)
        board = build_storyboard(tm, talk_plan(slide_set),
                                 tuple("" for _ in range(14)), slide_set)
        mentioned = {b.slide_file for b in board.blocks}
        assert "ai-nepi_003_slide_15.png" not in mentioned
        assert len(mentioned) == 14

    def test_included_mirrors_curation(self, tmp_path):
        tm = talk_timeline()
        slide_set = materialize_slides(tmp_path, 17)
        plan = talk_plan(slide_set)
        board = build_storyboard(tm, plan, tuple("" for _ in range(14)), slide_set)
        for block in board.blocks:
            index = int(block.slide_file.rsplit("_", 1)[1].removesuffix(".png"))
            assert block.included_in_publication == plan.decision(index).include

    def test_speech_flows_from_assignment(self, tmp_path):
        from partitur.model import Timestamp, Transcript, TranscriptSegment

        tm = talk_timeline()
        slide_set = materialize_slides(tmp_path, 17)
        transcript = Transcript(presentation_id="003", segments=(
            TranscriptSegment(start=Timestamp(42_000), end=Timestamp(50_000),
                              raw_text="um, the model", clean_text="the model"),))
        board = build_storyboard(tm, talk_plan(slide_set),
                                 assign_speech(transcript, tm), slide_set)
        assert board.blocks[2].speech == "the model"

    def test_presentation_id_mismatch_rejected(self, tmp_path):
        tm = talk_timeline(presentation_id="777")
        slide_set = materialize_slides(tmp_path, 17)
        with pytest.raises(StageInputError, match="different presentations"):
            build_storyboard(tm, talk_plan(slide_set),
                             tuple("" for _ in range(14)), slide_set)

    def test_speech_span_count_must_match(self, tmp_path):
        tm = talk_timeline()
        slide_set = materialize_slides(tmp_path, 17)
        with pytest.raises(StageInputError, match="speech spans"):
            build_storyboard(tm, talk_plan(slide_set), ("only one",), slide_set)

    def test_revisited_slide_gets_two_blocks(self, tmp_path):
        from partitur.model import Timestamp, TransitionEntry, TransitionMap

        slide_set = materialize_slides(tmp_path, 2)
        entries = (
            TransitionEntry(slide_index=1, timestamp=Timestamp(0),
                            confidence=0.9, duration_until_next=10_000),
            TransitionEntry(slide_index=2, timestamp=Timestamp(10_000),
                            confidence=0.9, duration_until_next=10_000),
            TransitionEntry(slide_index=1, timestamp=Timestamp(20_000),
                            confidence=0.9, duration_until_next=10_000),
        )
        tm = TransitionMap(presentation_id="003", entries=entries,
                           video_duration=Timestamp(30_000), unpresented=())
        types = ["title", "conceptual"]
        roles = classify_roles(slide_set, canned_analyses(types))
        plan = build_curation_plan("003", roles, ())
        board = build_storyboard(tm, plan, ("a", "b", "c"), slide_set)
        assert [b.slide_file.rsplit("_", 1)[1] for b in board.blocks] == [
            "01.png", "02.png", "01.png"]
        assert [b.block for b in board.blocks] == [1, 2, 3]
