"""Document assembly: front matter, section structure, figure closure,
and byte-level determinism."""

import pytest

from builders import slide_image, talk_report_response, talk_timeline

from partitur.curator import build_curation_plan, classify_roles
from partitur.errors import StageInputError
from partitur.gateway import Gateway, MockProvider
from partitur.model import (
    ContentReport,
    ContentSection,
    CoverageEntry,
    PresentationManifest,
    SlideAnalysis,
    SlideAnalysisSet,
    SlideImage,
    SlideSet,
    Storyboard,
    StoryboardBlock,
    Timestamp,
    slide_filename,
)
from partitur.render import render_document
from partitur.synthesis import generate_content_report


def make_manifest(presentation_id="003"):
    return PresentationManifest(
        presentation_id=presentation_id, title='Attention "in" Practice',
        author="A. Researcher", affiliation="Example Lab",
        pdf_path="deck.pdf", video_path="talk.mp4", event_tag="ai-nepi")


def materialize_slides(work_dir, n, presentation_id="003", event_tag="ai-nepi"):
    (work_dir / "slides").mkdir(exist_ok=True, parents=True)
    slides = []
    for i in range(1, n + 1):
        name = slide_filename(event_tag, presentation_id, i)
        img = slide_image(i)
        img.save(work_dir / "slides" / name)
        slides.append(SlideImage(index=i, path=f"slides/{name}",
                                 width_px=img.width, height_px=img.height, dpi=72))
    return SlideSet(presentation_id=presentation_id, event_tag=event_tag,
                    slides=tuple(slides), source_pdf_hash="0" * 64)


def make_analyses(n, presentation_id="003", types=None):
    types = types or (["title", "agenda"] + ["conceptual"] * (n - 2))
    return SlideAnalysisSet(
        presentation_id=presentation_id,
        analyses=tuple(
            SlideAnalysis(slide_index=i, slide_type=types[i - 1],
                          content_summary=f"What slide {i} shows",
                          comprehensive_analysis=f"analysis {i}",
                          academic_significance="medium")
            for i in range(1, n + 1)))


def make_storyboard(n_blocks, presentation_id="003"):
    blocks = tuple(
        StoryboardBlock(
            block=i,
            slide_file=slide_filename("ai-nepi", presentation_id, i),
            slide_timestamp=Timestamp((i - 1) * 10_000),
            speech=f"speech {i}",
            included_in_publication=True,
        )
        for i in range(1, n_blocks + 1))
    return Storyboard(presentation_id=presentation_id, blocks=blocks)


def talk_fixture(work_dir):
    """17-slide talk: 14 blocks, paper-shaped 13-section report."""
    slide_set = materialize_slides(work_dir, 17)
    analyses = make_analyses(17)
    plan = build_curation_plan("003", classify_roles(slide_set, analyses), ())
    board = make_storyboard(14)
    provider = MockProvider()
    provider.register("generate_content_report", talk_report_response())
    gw = Gateway(provider, work_dir / "cache.json", sleeper=lambda s: None)
    report = generate_content_report(board, analyses, make_manifest(), gw)
    return report, board, plan, slide_set, analyses


class TestRenderDocument:
    def test_thirteen_sections_and_abstract(self, tmp_path):
        report, board, plan, slide_set, analyses = talk_fixture(tmp_path)
        bundle = render_document(report, board, plan, slide_set, analyses,
                                 make_manifest(), work_dir=tmp_path,
                                 out_dir=tmp_path / "out")
        text = bundle.document_path.read_text("utf-8")
        assert text.count("\n# ") == 13
        assert bundle.front_matter["abstract"] == report.overview
        assert text.startswith("---\n")
        assert 'title: "Attention \\"in\\" Practice"' in text

    def test_figure_closure(self, tmp_path):
        report, board, plan, slide_set, analyses = talk_fixture(tmp_path)
        out = tmp_path / "out"
        bundle = render_document(report, board, plan, slide_set, analyses,
                                 make_manifest(), work_dir=tmp_path, out_dir=out)
        text = bundle.document_path.read_text("utf-8")
        referenced = {line.split("](")[1].rstrip(")")
                      for line in text.splitlines() if line.startswith("![")}
        assert referenced == set(bundle.figures)
        for figure in bundle.figures:
            assert (out / figure).is_file()
        # Exactly the curation-included slides among sourced blocks appear.
        sourced = {b for s in report.sections for b in s.source_blocks}
        expected = {board.blocks[b - 1].slide_file for b in sourced
                    if plan.decision(b).include}
        assert {f.rsplit("/", 1)[1] for f in bundle.figures} == expected

    def test_each_slide_embedded_once(self, tmp_path):
        report, board, plan, slide_set, analyses = talk_fixture(tmp_path)
        bundle = render_document(report, board, plan, slide_set, analyses,
                                 make_manifest(), work_dir=tmp_path,
                                 out_dir=tmp_path / "out")
        assert len(bundle.figures) == len(set(bundle.figures))

    def test_captions_from_content_summary(self, tmp_path):
        report, board, plan, slide_set, analyses = talk_fixture(tmp_path)
        bundle = render_document(report, board, plan, slide_set, analyses,
                                 make_manifest(), work_dir=tmp_path,
                                 out_dir=tmp_path / "out")
        text = bundle.document_path.read_text("utf-8")
        assert "![What slide 3 shows](figures/ai-nepi_003_slide_03.png)" in text

    def test_excluded_slides_never_embedded(self, tmp_path):
        report, board, plan, slide_set, analyses = talk_fixture(tmp_path)
        excluded = [d.slide_index for d in plan.decisions if not d.include]
        assert excluded, "fixture should exclude at least the agenda slide"
        bundle = render_document(report, board, plan, slide_set, analyses,
                                 make_manifest(), work_dir=tmp_path,
                                 out_dir=tmp_path / "out")
        names = {f.rsplit("/", 1)[1] for f in bundle.figures}
        for index in excluded:
            assert slide_filename("ai-nepi", "003", index) not in names

    def test_no_included_figures_is_text_only(self, tmp_path):
        slide_set = materialize_slides(tmp_path, 2)
        analyses = make_analyses(2, types=["agenda", "transition"])
        plan = build_curation_plan("003", classify_roles(slide_set, analyses), ())
        board = make_storyboard(2)
        report = ContentReport(
            presentation_id="003", overview="Short talk.",
            sections=(ContentSection(number=1, title="Only", outline=("a",),
                                     text="Prose.", source_blocks=(1, 2),
                                     transformation_type="synthesis"),),
            block_coverage=(CoverageEntry(block=1, sections=(1,)),
                            CoverageEntry(block=2, sections=(1,))))
        bundle = render_document(report, board, plan, slide_set, analyses,
                                 make_manifest(), work_dir=tmp_path,
                                 out_dir=tmp_path / "out")
        assert bundle.figures == ()
        assert "![" not in bundle.document_path.read_text("utf-8")

    def test_rerender_is_byte_identical(self, tmp_path):
        report, board, plan, slide_set, analyses = talk_fixture(tmp_path)
        a = tmp_path / "out_a"
        b = tmp_path / "out_b"
        for out in (a, b):
            render_document(report, board, plan, slide_set, analyses,
                            make_manifest(), work_dir=tmp_path, out_dir=out)
        assert (a / "chapter.qmd").read_bytes() == (b / "chapter.qmd").read_bytes()
        figures = sorted(p.name for p in (a / "figures").iterdir())
        assert figures == sorted(p.name for p in (b / "figures").iterdir())
        for name in figures:
            assert (a / "figures" / name).read_bytes() == (b / "figures" / name).read_bytes()

    def test_missing_figure_file_rejected(self, tmp_path):
        report, board, plan, slide_set, analyses = talk_fixture(tmp_path)
        (tmp_path / "slides" / "ai-nepi_003_slide_03.png").unlink()
        with pytest.raises(StageInputError, match="figure source missing"):
            render_document(report, board, plan, slide_set, analyses,
                            make_manifest(), work_dir=tmp_path,
                            out_dir=tmp_path / "out")

    def test_presentation_id_mismatch_rejected(self, tmp_path):
        report, board, plan, slide_set, analyses = talk_fixture(tmp_path)
        with pytest.raises(StageInputError, match="different presentations"):
            render_document(report, board, plan, slide_set, analyses,
                            make_manifest("777"), work_dir=tmp_path,
                            out_dir=tmp_path / "out")

    def test_section_citing_unknown_block_rejected(self, tmp_path):
        slide_set = materialize_slides(tmp_path, 2)
        analyses = make_analyses(2)
        plan = build_curation_plan("003", classify_roles(slide_set, analyses), ())
        board = make_storyboard(2)
        report = ContentReport(
            presentation_id="003", overview="Short talk.",
            sections=(ContentSection(number=1, title="Only", outline=("a",),
                                     text="Prose.", source_blocks=(9,),
                                     transformation_type="synthesis"),),
            block_coverage=(CoverageEntry(block=1, sections=(1,)),
                            CoverageEntry(block=2, sections=(1,))))
        with pytest.raises(StageInputError, match="cites block 9"):
            render_document(report, board, plan, slide_set, analyses,
                            make_manifest(), work_dir=tmp_path,
                            out_dir=tmp_path / "out")
