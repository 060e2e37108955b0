"""Tolerant parsing of structured model output into named sections.

Parsing never raises on model text: malformed output degrades to
diagnostics plus a whole-text fallback answer, so batch evaluation cannot
crash on a bad generation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .prompts import (
    ANSWER_END_MARKER,
    STEPS,
    STEPS_BY_NAME,
    StepSet,
)

# Headings the answer section may arrive under; models frequently drop the
# ordinal or shorten the title.
ANSWER_ALIASES = ("Long-Form Answer", "Long Form Answer", "Answer")

_END_LINE = re.compile(r"^\s*#{0,6}\s*END[.:]?\s*$", re.IGNORECASE | re.MULTILINE)


def count_words(text: str) -> int:
    return len(text.split())


def count_tokens_approx(text: str) -> int:
    """Deterministic token proxy: ceil(words * 4/3)."""
    return math.ceil(count_words(text) * 4 / 3)


def truncate_to_tokens(text: str, limit_tokens: int) -> str:
    """Trim trailing words until the token proxy fits the budget."""
    if count_tokens_approx(text) <= limit_tokens:
        return text
    keep = (limit_tokens * 3) // 4
    return " ".join(text.split()[:keep])


@dataclass
class StructuredResponse:
    """Parsed sections plus the extracted long-form answer."""

    sections: dict[str, str] = field(default_factory=dict)
    long_form_answer: str = ""
    diagnostics: list[str] = field(default_factory=list)


def _heading_pattern(titles: tuple[str, ...]) -> re.Pattern:
    alts = []
    for title in titles:
        # Flexible internal whitespace and optional hyphen/space variants.
        esc = re.escape(title).replace(r"\ ", r"[\s-]*").replace(r"\-", r"[\s-]*")
        alts.append(esc)
    body = "|".join(alts)
    return re.compile(
        rf"^[ \t]*#{{0,6}}[ \t]*(?:\d+[ \t]*[.):]?[ \t]*)?(?:{body})(?![A-Za-z])"
        rf"[ \t]*(?::[ \t]*|(?=\r?\n|$))",
        re.IGNORECASE | re.MULTILINE,
    )


_STEP_PATTERNS = {s.name: _heading_pattern((s.title,)) for s in STEPS}
_STEP_PATTERNS["LongFormAnswer"] = _heading_pattern(ANSWER_ALIASES)


def parse_structured(
    raw: str,
    expected_steps: StepSet | tuple[str, ...] = (),
    markers_enabled: bool = True,
) -> StructuredResponse:
    """Split raw model text into per-step sections and the final answer.

    Heading matching is tolerant: "###" fences, ordinals, punctuation, and
    case all vary freely. Text after an end-of-output marker line is
    discarded. With markers enabled, the answer is cut at "ANSWER END".
    """
    resp = StructuredResponse()
    if raw is None:
        raw = ""
    expected = list(expected_steps) or [s.name for s in STEPS]
    if "LongFormAnswer" not in expected:
        expected = expected + ["LongFormAnswer"]

    end = _END_LINE.search(raw)
    body = raw[: end.start()] if end else raw
    if end:
        resp.diagnostics.append("truncated at end marker")

    # Locate every expected heading; ties go to expected order, first match.
    found: list[tuple[int, int, str]] = []  # (start, body_start, step name)
    claimed: set[int] = set()
    for name in expected:
        pattern = _STEP_PATTERNS.get(name)
        if pattern is None:
            resp.diagnostics.append(f"unknown expected step {name!r}")
            continue
        for m in pattern.finditer(body):
            if m.start() not in claimed:
                claimed.add(m.start())
                found.append((m.start(), m.end(), name))
                break
        else:
            resp.diagnostics.append(f"missing section: {name}")
    found.sort()

    for idx, (start, body_start, name) in enumerate(found):
        stop = found[idx + 1][0] if idx + 1 < len(found) else len(body)
        resp.sections[name] = body[body_start:stop].strip()

    answer = resp.sections.pop("LongFormAnswer", None)
    if answer is not None:
        resp.long_form_answer = answer
    elif found:
        # Fallback: everything after the last recognized heading.
        resp.long_form_answer = body[found[-1][1]:].strip()
        resp.diagnostics.append("answer section absent; used trailing text")
    else:
        resp.long_form_answer = body.strip()
        resp.diagnostics.append("no headings recognized; used full text")

    if markers_enabled and ANSWER_END_MARKER in resp.long_form_answer:
        cut = resp.long_form_answer.index(ANSWER_END_MARKER)
        resp.long_form_answer = resp.long_form_answer[:cut].strip()
        resp.diagnostics.append("answer truncated at answer marker")

    if raw.strip() and not resp.long_form_answer:
        # Totality guarantee: never return an empty answer for non-empty input.
        resp.long_form_answer = body.strip() or raw.strip()
        resp.diagnostics.append("empty answer section; used full text")
    return resp


def render_structured(resp: StructuredResponse) -> str:
    """Emit canonical numbered headings, the answer, then the end marker."""
    parts: list[str] = []
    for step in STEPS:
        if step.name == "LongFormAnswer":
            continue
        text = resp.sections.get(step.name)
        if text is not None:
            parts.append(f"{step.heading()}\n{text}")
    answer_step = STEPS_BY_NAME["LongFormAnswer"]
    if resp.long_form_answer:
        parts.append(f"{answer_step.heading()}\n{resp.long_form_answer}")
    parts.append("### END")
    return "\n\n".join(parts)
