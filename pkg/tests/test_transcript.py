"""Disfluency stripping, repetition collapse, mock transcription, and the
midpoint assignment of speech to slide intervals."""

import pytest
from hypothesis import given, strategies as st

from builders import slide_image, talk_timeline, write_video

from partitur.errors import SchemaValidationError, TranscriptError
from partitur.gateway import Gateway, MockProvider
from partitur.model import (
    PresentationManifest,
    Timestamp,
    Transcript,
    TranscriptSegment,
    TransitionEntry,
    TransitionMap,
)
from partitur.transcript import (
    assign_speech,
    clean_speech,
    collapse_repetitions,
    strip_disfluencies,
    transcribe,
)


class TestStripDisfluencies:
    def test_fillers_between_commas(self):
        assert (strip_disfluencies("So, um, this is the famous, uh, Transformer architecture.")
                == "So, this is the famous Transformer architecture.")

    def test_empty_string(self):
        assert strip_disfluencies("") == ""

    def test_adjacent_fillers_collapse_to_one_comma(self):
        assert (strip_disfluencies("we have, um, uh, we have come up with four bins")
                == "we have, we have come up with four bins")

    def test_filler_at_sentence_start(self):
        assert strip_disfluencies("Um, so the result holds.") == "so the result holds."

    def test_filler_at_sentence_end_keeps_period(self):
        assert strip_disfluencies("That is the whole idea, um.") == "That is the whole idea."

    def test_like_removed_only_when_comma_delimited(self):
        assert (strip_disfluencies("It was, like, a huge improvement.")
                == "It was, a huge improvement.")
        assert (strip_disfluencies("People like this approach.")
                == "People like this approach.")

    def test_you_know_bigram(self):
        assert (strip_disfluencies("Now, you know, the model converges.")
                == "Now, the model converges.")
        assert (strip_disfluencies("Things you know already help here.")
                == "Things you know already help here.")

    def test_case_insensitive(self):
        assert strip_disfluencies("UM, Uh, the data agrees.") == "the data agrees."

    def test_extra_fillers_from_config(self):
        assert (strip_disfluencies("It is, basically, done.", extra_fillers=["basically"])
                == "It is, done.")

    def test_non_filler_words_survive_in_order(self):
        text = "The umbrella shader uhuh erases nothing."
        assert strip_disfluencies(text) == text


class TestCollapseRepetitions:
    def test_bigram_collapse(self):
        assert (collapse_repetitions("we have, we have come up with four bins")
                == "we have come up with four bins")

    def test_single_word_stutter(self):
        assert collapse_repetitions("the the model converges") == "the model converges"

    def test_triple_repeat(self):
        assert collapse_repetitions("so so so it begins") == "so it begins"

    def test_case_and_punctuation_insensitive(self):
        assert collapse_repetitions("We tried. we tried again") == "we tried again"

    def test_no_false_positive_on_distinct_text(self):
        text = "step one then step two"
        assert collapse_repetitions(text) == text

    def test_full_cleanup_of_quoted_example(self):
        assert (clean_speech("we have, um, uh, we have come up with four bins")
                == "we have come up with four bins")


def segment(start_ms, end_ms, text):
    return TranscriptSegment(start=Timestamp(start_ms), end=Timestamp(end_ms),
                             raw_text=text, clean_text=text)


def transcript_of(*segments, presentation_id="003"):
    return Transcript(presentation_id=presentation_id, segments=tuple(segments))


def small_map(times, duration_ms, presentation_id="003"):
    entries = tuple(
        TransitionEntry(
            slide_index=i + 1,
            timestamp=Timestamp(t),
            confidence=0.9,
            duration_until_next=(times[i + 1] if i + 1 < len(times) else duration_ms) - t,
        )
        for i, t in enumerate(times))
    return TransitionMap(presentation_id=presentation_id, entries=entries,
                         video_duration=Timestamp(duration_ms), unpresented=())


class TestAssignSpeech:
    def test_midpoint_rule(self):
        # Slide 3 holds [41 s, 156 s); a segment at 45-50 s lands there.
        tm = talk_timeline()
        speech = assign_speech(transcript_of(segment(45_000, 50_000, "inside slide three")), tm)
        assert speech[2] == "inside slide three"
        assert all(s == "" for i, s in enumerate(speech) if i != 2)

    def test_straddling_segment_splits_at_boundary(self):
        tm = talk_timeline()
        # 39-43 s straddles the 41 s boundary between slides 2 and 3.
        speech = assign_speech(
            transcript_of(segment(39_000, 43_000, "two words each side")), tm)
        assert speech[1] == "two words"
        assert speech[2] == "each side"

    def test_speech_before_first_entry_joins_first_block(self):
        tm = small_map([5_000, 20_000], 60_000)
        speech = assign_speech(transcript_of(segment(0, 4_000, "welcome everyone")), tm)
        assert speech == ("welcome everyone", "")

    def test_segment_beyond_video_rejected(self):
        tm = small_map([0], 30_000)
        with pytest.raises(TranscriptError, match="outside the video"):
            assign_speech(transcript_of(segment(29_000, 31_000, "late words")), tm)

    def test_multi_boundary_segment_spreads_in_order(self):
        tm = small_map([0, 10_000, 20_000], 30_000)
        text = "a b c d e f"
        speech = assign_speech(transcript_of(segment(5_000, 25_000, text)), tm)
        assert " ".join(speech).split() == text.split()
        assert all(speech)

    @given(st.data())
    def test_word_conservation(self, data):
        n_entries = data.draw(st.integers(min_value=1, max_value=6))
        starts = sorted(data.draw(st.lists(
            st.integers(min_value=0, max_value=100_000),
            min_size=n_entries, max_size=n_entries, unique=True)))
        duration = starts[-1] + data.draw(st.integers(min_value=1_000, max_value=60_000))
        tm = small_map(starts, duration)
        segments = []
        cursor = 0
        for k in range(data.draw(st.integers(min_value=0, max_value=8))):
            gap = data.draw(st.integers(min_value=0, max_value=5_000))
            length = data.draw(st.integers(min_value=500, max_value=20_000))
            if cursor + gap + length > duration:
                break
            n_words = data.draw(st.integers(min_value=0, max_value=8))
            text = " ".join(f"w{k}x{j}" for j in range(n_words))
            segments.append(TranscriptSegment(
                start=Timestamp(cursor + gap), end=Timestamp(cursor + gap + length),
                raw_text=text, clean_text=text))
            cursor += gap + length
        speech = assign_speech(transcript_of(*segments), tm)
        expected = [w for s in segments for w in s.clean_text.split()]
        assert " ".join(speech).split() == expected


def make_manifest(presentation_id="003"):
    return PresentationManifest(
        presentation_id=presentation_id, title="Attention in Practice",
        author="A. Researcher", affiliation="Example Lab",
        pdf_path="deck.pdf", video_path="talk.mp4", event_tag="ai-nepi")


def make_talk_video(path, duration_ms=12_000):
    write_video(path, {1: slide_image(1)}, [(1, 0)], duration_ms,
                fps=4.0, size=(320, 180))


class TestTranscribe:
    def test_mock_segments_fit_video(self, tmp_path):
        video = tmp_path / "talk.mp4"
        make_talk_video(video)
        gw = Gateway(MockProvider(), tmp_path / "cache.json", sleeper=lambda s: None)
        transcript = transcribe(make_manifest(), video, gw)
        assert transcript.presentation_id == "003"
        assert transcript.segments
        assert all(s.end.millis <= 12_000 for s in transcript.segments)
        assert all(s.clean_text == clean_speech(s.raw_text) for s in transcript.segments)

    def test_short_video_yields_empty_transcript(self, tmp_path):
        video = tmp_path / "talk.mp4"
        make_talk_video(video, duration_ms=2_000)
        gw = Gateway(MockProvider(), tmp_path / "cache.json", sleeper=lambda s: None)
        assert transcribe(make_manifest(), video, gw).segments == ()

    def test_unordered_provider_output_normalized(self, tmp_path):
        video = tmp_path / "talk.mp4"
        make_talk_video(video)
        provider = MockProvider()
        provider.register("transcribe_talk", {"segments": [
            {"start_ms": 6_000, "end_ms": 9_000, "text": "second"},
            {"start_ms": 0, "end_ms": 5_000, "text": "first"},
        ]})
        gw = Gateway(provider, tmp_path / "cache.json", sleeper=lambda s: None)
        transcript = transcribe(make_manifest(), video, gw)
        assert [s.raw_text for s in transcript.segments] == ["first", "second"]

    def test_segment_past_video_end_rejected(self, tmp_path):
        video = tmp_path / "talk.mp4"
        make_talk_video(video)
        provider = MockProvider()
        provider.register("transcribe_talk", {"segments": [
            {"start_ms": 0, "end_ms": 99_000, "text": "overlong"},
        ]})
        gw = Gateway(provider, tmp_path / "cache.json", sleeper=lambda s: None)
        with pytest.raises(TranscriptError, match="exceeds the video"):
            transcribe(make_manifest(), video, gw)

    def test_overlapping_segments_rejected(self, tmp_path):
        video = tmp_path / "talk.mp4"
        make_talk_video(video)
        provider = MockProvider()
        provider.register("transcribe_talk", {"segments": [
            {"start_ms": 0, "end_ms": 5_000, "text": "a"},
            {"start_ms": 4_000, "end_ms": 9_000, "text": "b"},
        ]})
        gw = Gateway(provider, tmp_path / "cache.json", sleeper=lambda s: None)
        with pytest.raises(SchemaValidationError, match="non-overlapping"):
            transcribe(make_manifest(), video, gw)
