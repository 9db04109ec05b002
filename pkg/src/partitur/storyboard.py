"""Fusion of timeline, curation, and speech into ordered narrative blocks.

One block per transition entry, numbered 1..K in chronological order. Each
block pairs the slide shown (file name plus the moment it appeared) with
the cleaned speech spoken over it; included_in_publication mirrors the
curation decision for that slide. Unpresented slides produce no block, and
a revisited slide produces one block per visit.
"""

from __future__ import annotations

from typing import Sequence

from .errors import StageInputError
from .model import CurationPlan, SlideSet, Storyboard, StoryboardBlock, TransitionMap


def build_storyboard(transition_map: TransitionMap, curation_plan: CurationPlan,
                     speech_by_entry: Sequence[str], slide_set: SlideSet) -> Storyboard:
    ids = {
        "transition map": transition_map.presentation_id,
        "curation plan": curation_plan.presentation_id,
        "slide set": slide_set.presentation_id,
    }
    if len(set(ids.values())) != 1:
        detail = ", ".join(f"{k}={v}" for k, v in ids.items())
        raise StageInputError(f"artifacts come from different presentations: {detail}")
    if len(speech_by_entry) != len(transition_map.entries):
        raise StageInputError(
            f"speech spans cover {len(speech_by_entry)} entries but the timeline "
            f"has {len(transition_map.entries)}")
    blocks = []
    for number, (entry, speech) in enumerate(zip(transition_map.entries, speech_by_entry),
                                             start=1):
        slide = slide_set.slide(entry.slide_index)
        blocks.append(StoryboardBlock(
            block=number,
            slide_file=slide.path.rsplit("/", 1)[-1],
            slide_timestamp=entry.timestamp,
            speech=speech,
            included_in_publication=curation_plan.decision(entry.slide_index).include,
        ))
    return Storyboard(presentation_id=transition_map.presentation_id, blocks=tuple(blocks))
