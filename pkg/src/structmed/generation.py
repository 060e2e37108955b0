"""Executing a prompt plan against a provider.

Direct mode is a single call whose output is parsed into sections.
Stepwise mode issues one call per reasoning step — each prompt carrying the
question plus all prior cleaned step outputs — then a final summarization
call whose output becomes the long-form answer. Failed steps are recorded
and skipped rather than aborting the pair.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .dataset import QAPair
from .llm import CompletionParams, CompletionProvider, LLMError
from .parsing import (
    StructuredResponse,
    count_tokens_approx,
    parse_structured,
    truncate_to_tokens,
)
from .prompts import Mode, PromptPlan, STEPS_BY_NAME, guidance_lines, render_template


@dataclass
class StepOutput:
    name: str
    raw: str
    cleaned: str
    flags: tuple[str, ...] = ()
    failed: bool = False
    error: str = ""


@dataclass
class GenerationOutcome:
    question_id: str
    mode: Mode
    step_outputs: list[StepOutput]
    raw_final: str
    structured: StructuredResponse
    provider_calls: int
    failed: bool = False
    error: str = ""
    started_at: float | None = None
    finished_at: float | None = None

    def to_dict(self) -> dict:
        """Trace form. Timestamps are deliberately excluded so trace files
        are byte-identical for identical (deterministic) inputs."""
        return {
            "question_id": self.question_id,
            "mode": self.mode.value,
            "steps": [
                {
                    "name": s.name,
                    "raw": s.raw,
                    "cleaned": s.cleaned,
                    "flags": list(s.flags),
                    "failed": s.failed,
                    "error": s.error,
                }
                for s in self.step_outputs
            ],
            "raw_final": self.raw_final,
            "sections": self.structured.sections,
            "long_form_answer": self.structured.long_form_answer,
            "diagnostics": self.structured.diagnostics,
            "provider_calls": self.provider_calls,
            "failed": self.failed,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationOutcome":
        structured = StructuredResponse(
            sections=dict(data.get("sections", {})),
            long_form_answer=data.get("long_form_answer", ""),
            diagnostics=list(data.get("diagnostics", [])),
        )
        return cls(
            question_id=data["question_id"],
            mode=Mode(data["mode"]),
            step_outputs=[
                StepOutput(
                    name=s["name"],
                    raw=s["raw"],
                    cleaned=s["cleaned"],
                    flags=tuple(s.get("flags", [])),
                    failed=s.get("failed", False),
                    error=s.get("error", ""),
                )
                for s in data.get("steps", [])
            ],
            raw_final=data.get("raw_final", ""),
            structured=structured,
            provider_calls=data.get("provider_calls", 0),
            failed=data.get("failed", False),
            error=data.get("error", ""),
        )


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_HEADING_LINE = re.compile(r"^\s*#{1,6}\s")


def _normalize_line(line: str) -> str:
    return " ".join(line.split()).strip("- ").strip()


_GUIDANCE = {_normalize_line(g) for g in guidance_lines()}


def quality_check(raw: str, limit_words: int, question: str) -> tuple[str, tuple[str, ...]]:
    """Clean one step's output: drop template echo, collapse consecutive
    duplicate sentences, and truncate to the word budget (preferring a
    sentence boundary). Idempotent by construction."""
    if limit_words <= 0:
        raise ValueError("limit_words must be positive")
    flags: list[str] = []

    kept_lines = []
    question_norm = _normalize_line(question)
    for line in raw.splitlines():
        norm = _normalize_line(line)
        if norm and (norm in _GUIDANCE or norm == question_norm) or _HEADING_LINE.match(line):
            flags.append("off_format_stripped")
            continue
        kept_lines.append(line)
    text = "\n".join(kept_lines).strip()

    sentences = [s for s in _SENTENCE_SPLIT.split(text) if s.strip()]
    deduped: list[str] = []
    for sentence in sentences:
        if deduped and _normalize_line(deduped[-1]) == _normalize_line(sentence):
            flags.append("duplicate_removed")
            continue
        deduped.append(sentence)

    kept: list[str] = []
    total = 0
    truncated = False
    for sentence in deduped:
        n = len(sentence.split())
        if total + n > limit_words:
            truncated = True
            if not kept:
                # First sentence alone exceeds the budget: hard word cut.
                kept.append(" ".join(sentence.split()[:limit_words]))
            break
        kept.append(sentence)
        total += n
    if truncated:
        flags.append("over_length_truncated")
    cleaned = " ".join(kept).strip()

    seen: set[str] = set()
    ordered_flags = tuple(f for f in flags if not (f in seen or seen.add(f)))
    return cleaned, ordered_flags


def generate_direct(
    pair: QAPair,
    plan: PromptPlan,
    provider: CompletionProvider,
    params: CompletionParams,
) -> GenerationOutcome:
    """Single-call generation; the whole structured response arrives at once."""
    if plan.mode != Mode.DIRECT:
        raise ValueError("plan mode is not direct")
    started = time.time()
    call_params = replace(params, max_new_tokens=plan.features.stage1_token_limit)
    prompt = plan.render_direct(pair.question)
    try:
        raw = provider.complete(prompt, call_params)
    except LLMError as exc:
        raise LLMError(f"[{pair.id}] {exc}") from exc
    expected = tuple(plan.step_set) if plan.step_set else ()
    structured = parse_structured(raw, expected, plan.features.specialized_markers)
    return GenerationOutcome(
        question_id=pair.id,
        mode=Mode.DIRECT,
        step_outputs=[],
        raw_final=raw,
        structured=structured,
        provider_calls=1,
        started_at=started,
        finished_at=time.time(),
    )


def _format_context(outputs: Iterable[StepOutput]) -> str:
    parts = []
    for out in outputs:
        if out.failed or not out.cleaned:
            continue
        step = STEPS_BY_NAME[out.name]
        parts.append(f"{step.ordinal}. {step.title}: {out.cleaned}")
    return "\n".join(parts) if parts else "(none yet)"


def generate_stepwise(
    pair: QAPair,
    plan: PromptPlan,
    provider: CompletionProvider,
    params: CompletionParams,
) -> GenerationOutcome:
    """One call per step, then a summarization call over the concatenation."""
    if plan.mode != Mode.STEPWISE:
        raise ValueError("plan mode is not stepwise")
    started = time.time()
    features = plan.features
    calls = 0
    outputs: list[StepOutput] = []
    for name, template in plan.step_templates:
        prompt = render_template(
            template, question=pair.question, context=_format_context(outputs)
        )
        try:
            raw = provider.complete(prompt, params)
            calls += 1
        except LLMError as exc:
            calls += 1
            outputs.append(StepOutput(name=name, raw="", cleaned="", failed=True, error=str(exc)))
            continue
        cleaned, flags = quality_check(raw, features.step_word_limit, pair.question)
        if not cleaned:
            flags = flags + ("empty_after_cleaning",)
        outputs.append(StepOutput(name=name, raw=raw, cleaned=cleaned, flags=flags,
                                  failed=not cleaned))

    summary_prompt = render_template(
        plan.summary_template, question=pair.question, context=_format_context(outputs)
    )
    summary_params = replace(params, max_new_tokens=features.final_answer_token_limit)
    failed = False
    error = ""
    try:
        raw_final = provider.complete(summary_prompt, summary_params)
        calls += 1
    except LLMError as exc:
        calls += 1
        raw_final = ""
        failed = True
        error = str(exc)

    answer = parse_structured(raw_final, ("LongFormAnswer",),
                              features.specialized_markers).long_form_answer
    if count_tokens_approx(answer) > features.final_answer_token_limit:
        answer = truncate_to_tokens(answer, features.final_answer_token_limit)
    structured = StructuredResponse(
        sections={o.name: o.cleaned for o in outputs if not o.failed},
        long_form_answer=answer,
        diagnostics=[f"step failed: {o.name}" for o in outputs if o.failed],
    )
    return GenerationOutcome(
        question_id=pair.id,
        mode=Mode.STEPWISE,
        step_outputs=outputs,
        raw_final=raw_final,
        structured=structured,
        provider_calls=calls,
        failed=failed,
        error=error,
        started_at=started,
        finished_at=time.time(),
    )


def generate(pair, plan, provider, params) -> GenerationOutcome:
    if plan.mode == Mode.DIRECT:
        return generate_direct(pair, plan, provider, params)
    return generate_stepwise(pair, plan, provider, params)


def write_trace(outcomes: Iterable[GenerationOutcome], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_trace(path: str | Path) -> list[GenerationOutcome]:
    path = Path(path)
    outcomes = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                outcomes.append(GenerationOutcome.from_dict(json.loads(line)))
    return outcomes
