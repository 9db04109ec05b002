"""Slide curation: roles, progressive-reveal chains, include/exclude decisions.

Auto decisions come first (type-derived roles, then chain membership), and
the optional override file is applied strictly last; an override never
merges with an auto decision, it replaces the include flag and marks the
decision's provenance.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from .errors import CurationError, SchemaValidationError
from .fingerprint import Fingerprint, nonblank_cells, subset_score
from .model import CurationDecision, CurationPlan, SlideAnalysisSet, SlideSet

DEFAULT_THETA_SUB = 0.90

_TYPE_TO_ROLE = {
    "title": "special_title",
    "agenda": "special_agenda",
    "interactive": "special_interactive",
    "transition": "transition",
    "references": "special_thanks",
    "technical_architecture": "content",
    "conceptual": "content",
    "data": "content",
    "other": "content",
}

_INCLUDED_ROLES = frozenset({"content", "overlay_final", "special_title"})


def detect_overlay_chains(slide_set: SlideSet, fingerprints: Sequence[Fingerprint], *,
                          theta_sub: float = DEFAULT_THETA_SUB) -> tuple[tuple[int, ...], ...]:
    """Maximal runs of consecutive slides where each is a visual subset of the next."""
    if len(fingerprints) != len(slide_set.slides):
        raise CurationError(
            f"need one fingerprint per slide: {len(fingerprints)} != {len(slide_set.slides)}")
    chains: list[tuple[int, ...]] = []
    current: list[int] = []
    for i in range(len(fingerprints) - 1):
        a, b = fingerprints[i], fingerprints[i + 1]
        linked = (subset_score(a, b) >= theta_sub
                  and nonblank_cells(b) > nonblank_cells(a))
        if linked:
            if not current:
                current = [i + 1]
            current.append(i + 2)
        else:
            if len(current) >= 2:
                chains.append(tuple(current))
            current = []
    if len(current) >= 2:
        chains.append(tuple(current))
    return tuple(chains)


def classify_roles(slide_set: SlideSet, analyses: SlideAnalysisSet) -> dict[int, str]:
    by_index = analyses.by_index()
    roles: dict[int, str] = {}
    for slide in slide_set.slides:
        analysis = by_index.get(slide.index)
        if analysis is None:
            raise CurationError(f"no analysis for slide {slide.index}")
        role = _TYPE_TO_ROLE[analysis.slide_type]
        # Deck openers typed vaguely still act as the title slide.
        if slide.index == 1 and analysis.slide_type == "other":
            role = "special_title"
        roles[slide.index] = role
    return roles


def load_overrides(path: Path) -> dict:
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise CurationError(f"cannot read override file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CurationError(f"override file {path} is not valid JSON: {exc}") from exc
    return parse_overrides(payload)


def parse_overrides(payload) -> dict:
    if not isinstance(payload, dict):
        raise CurationError("override file must be a JSON object")
    unknown = sorted(set(payload) - {"include", "exclude"})
    if unknown:
        raise CurationError(f"override file has unknown keys: {unknown}")
    out = {"include": [], "exclude": []}
    for key in ("include", "exclude"):
        values = payload.get(key, [])
        if not isinstance(values, list) or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in values):
            raise CurationError(f"override {key!r} must be a list of slide indices")
        out[key] = sorted(set(values))
    both = set(out["include"]) & set(out["exclude"])
    if both:
        raise CurationError(f"slides listed as both include and exclude: {sorted(both)}")
    return out


def build_curation_plan(presentation_id: str, roles: Mapping[int, str],
                        chains: Sequence[Sequence[int]],
                        overrides: Mapping[str, Sequence[int]] | None = None) -> CurationPlan:
    decisions: dict[int, CurationDecision] = {}
    chain_position: dict[int, tuple[tuple[int, ...], bool]] = {}
    for chain in chains:
        for idx in chain:
            if idx not in roles:
                raise CurationError(f"overlay chain references unknown slide {idx}")
            chain_position[idx] = (tuple(chain), idx == chain[-1])

    for index in sorted(roles):
        role = roles[index]
        reason = f"slide type maps to role {role}"
        if index in chain_position:
            chain, is_final = chain_position[index]
            label = f"overlay chain {chain[0]}-{chain[-1]}"
            if is_final:
                role = "overlay_final"
                reason = f"final step of {label}: carries the complete build"
            else:
                role = "overlay_step"
                reason = f"intermediate step of {label}: superseded by slide {chain[-1]}"
        include = role in _INCLUDED_ROLES
        decisions[index] = CurationDecision(
            slide_index=index, role=role, include=include, reason=reason, source="auto")

    if overrides:
        for key, included in (("include", True), ("exclude", False)):
            for index in overrides.get(key, ()):
                if index not in decisions:
                    raise CurationError(f"override references unknown slide {index}")
                base = decisions[index]
                decisions[index] = CurationDecision(
                    slide_index=index,
                    role=base.role,
                    include=included,
                    reason=f"manual override: {key}",
                    source="override",
                )

    try:
        return CurationPlan(
            presentation_id=presentation_id,
            decisions=tuple(decisions[i] for i in sorted(decisions)),
            overlay_chains=tuple(tuple(c) for c in chains),
        )
    except SchemaValidationError as exc:
        raise CurationError(str(exc)) from exc
