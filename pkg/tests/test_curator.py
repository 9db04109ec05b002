import pytest

from partitur.curator import (
    build_curation_plan,
    classify_roles,
    detect_overlay_chains,
    load_overrides,
    parse_overrides,
)
from partitur.errors import CurationError
from partitur.fingerprint import fingerprint_image
from partitur.model import SlideAnalysis, SlideAnalysisSet, SlideImage, SlideSet, slide_filename

from builders import overlay_step_image, slide_image


def make_slide_set(n, presentation_id="003", event_tag="ai-nepi"):
    slides = tuple(
        SlideImage(index=i, path=f"slides/{slide_filename(event_tag, presentation_id, i)}",
                   width_px=720, height_px=540, dpi=72)
        for i in range(1, n + 1))
    return SlideSet(presentation_id=presentation_id, event_tag=event_tag,
                    slides=slides, source_pdf_hash="0" * 64)


def make_analyses(types, presentation_id="003"):
    analyses = tuple(
        SlideAnalysis(slide_index=i, slide_type=t, content_summary=f"summary {i}",
                      comprehensive_analysis=f"analysis {i}", academic_significance="medium")
        for i, t in enumerate(types, start=1))
    return SlideAnalysisSet(presentation_id=presentation_id, analyses=analyses)


class TestChainDetection:
    def test_five_step_build_is_one_chain(self):
        images = [slide_image(1), slide_image(2)]
        images += [overlay_step_image(3, k) for k in range(1, 6)]
        images += [slide_image(8)]
        fps = [fingerprint_image(img) for img in images]
        chains = detect_overlay_chains(make_slide_set(8), fps)
        assert chains == ((3, 4, 5, 6, 7),)

    def test_distinct_deck_has_no_chains(self):
        fps = [fingerprint_image(slide_image(i)) for i in range(1, 6)]
        assert detect_overlay_chains(make_slide_set(5), fps) == ()

    def test_content_removal_breaks_chain(self):
        # steps 1..3 build up, then "step 4" drops back to a single block
        images = [overlay_step_image(9, k) for k in (1, 2, 3)] + [overlay_step_image(9, 1)]
        fps = [fingerprint_image(img) for img in images]
        chains = detect_overlay_chains(make_slide_set(4), fps)
        assert chains == ((1, 2, 3),)

    def test_fingerprint_count_must_match(self):
        with pytest.raises(CurationError, match="one fingerprint per slide"):
            detect_overlay_chains(make_slide_set(3), [])


class TestRoleClassification:
    def test_paper_style_types(self):
        analyses = make_analyses(["title", "agenda", "technical_architecture", "interactive"])
        roles = classify_roles(make_slide_set(4), analyses)
        assert roles == {1: "special_title", 2: "special_agenda",
                         3: "content", 4: "special_interactive"}

    def test_vague_opener_becomes_title(self):
        roles = classify_roles(make_slide_set(2), make_analyses(["other", "other"]))
        assert roles[1] == "special_title"
        assert roles[2] == "content"

    def test_references_map_to_thanks(self):
        roles = classify_roles(make_slide_set(1), make_analyses(["references"]))
        assert roles[1] == "special_thanks"

    def test_missing_analysis_is_an_error(self):
        with pytest.raises(CurationError, match="slide 2"):
            classify_roles(make_slide_set(2), make_analyses(["title"]))


class TestPlanBuilding:
    def test_chain_keeps_only_final(self):
        roles = {i: "content" for i in range(1, 8)}
        plan = build_curation_plan("003", roles, [(3, 4, 5, 6, 7)])
        included = plan.included_indices()
        assert 7 in included
        assert not any(i in included for i in (3, 4, 5, 6))
        assert plan.decision(7).role == "overlay_final"
        assert plan.decision(3).role == "overlay_step"

    def test_special_slides_excluded_except_title(self):
        roles = {1: "special_title", 2: "special_agenda", 3: "content",
                 4: "special_interactive", 5: "special_thanks", 6: "transition"}
        plan = build_curation_plan("003", roles, [])
        assert plan.included_indices() == (1, 3)

    def test_override_reincludes_transition(self):
        roles = {1: "content", 7: "transition"}
        plan = build_curation_plan("003", roles, [], {"include": [7]})
        decision = plan.decision(7)
        assert decision.include is True
        assert decision.source == "override"

    def test_override_is_idempotent(self):
        roles = {i: "content" for i in range(1, 6)}
        overrides = {"include": [2], "exclude": [4]}
        a = build_curation_plan("003", roles, [(1, 2, 3)], overrides)
        b = build_curation_plan("003", roles, [(1, 2, 3)], overrides)
        assert a == b

    def test_unknown_override_index_rejected(self):
        with pytest.raises(CurationError, match="unknown slide 9"):
            build_curation_plan("003", {1: "content"}, [], {"include": [9]})

    def test_empty_deck_gives_empty_plan(self):
        plan = build_curation_plan("003", {}, [])
        assert plan.decisions == ()
        assert plan.overlay_chains == ()


class TestOverrideParsing:
    def test_round_trip_from_file(self, tmp_path):
        path = tmp_path / "slides_for_production.json"
        path.write_text('{"include": [2, 7], "exclude": [5]}')
        assert load_overrides(path) == {"include": [2, 7], "exclude": [5]}

    def test_conflicting_lists_rejected(self):
        with pytest.raises(CurationError, match="both include and exclude"):
            parse_overrides({"include": [3], "exclude": [3]})

    def test_unknown_keys_rejected(self):
        with pytest.raises(CurationError, match="unknown keys"):
            parse_overrides({"keep": [1]})

    def test_non_integer_indices_rejected(self):
        with pytest.raises(CurationError, match="list of slide indices"):
            parse_overrides({"include": ["3"]})
