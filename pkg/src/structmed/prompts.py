"""Prompt construction for structured medical reasoning runs.

The canonical prompt text lives as versioned template assets under
``templates/v1`` and is recombined here: a general-instruction preamble
(part1), a numbered chain-of-thought block (part2, filtered to the active
step set), an optional worked example, and the question. Ablation
transforms rewrite the step set; feature flags toggle the example block,
instruction reinforcement, and the end-of-output markers.

Placeholders use double braces ({{question}}); any token left unresolved
after rendering is an error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from typing import Iterable, Sequence

TEMPLATE_VERSION = "v1"

END_MARKER = "### END"
ANSWER_END_MARKER = "ANSWER END"
REINFORCEMENT_LINE = (
    "- Structured Outputs: strictly follow the structured template, "
    "labeling every section with its numbered heading."
)
PLAIN_COT_INSTRUCTION = "Let's think step by step, then give a final long-form answer."
SUMMARY_INSTRUCTION = (
    "Combine the above reasoning to accurately and comprehensively answer the question."
)


class PromptError(Exception):
    """Raised on unknown steps, bad ablations, or unresolved placeholders."""


class Mode(str, Enum):
    DIRECT = "direct"
    STEPWISE = "stepwise"


class BaselineKind(str, Enum):
    ZERO_SHOT = "zero_shot"
    PLAIN_COT = "plain_cot"


@dataclass(frozen=True)
class ReasoningStep:
    """One numbered stage of the reasoning chain."""

    ordinal: int
    name: str
    title: str
    guidance: tuple[str, ...]

    def heading(self) -> str:
        # Stage 8 keeps its glued "8.Long-Form Answer" form from the
        # canonical template; the parser accepts both spellings.
        if self.ordinal == 8:
            return f"### {self.ordinal}.{self.title}:"
        return f"### {self.ordinal}. {self.title}:"

    def block(self) -> str:
        lines = [self.heading()] + [f"- {g}" for g in self.guidance]
        return "\n".join(lines)


def _load_asset(filename: str) -> str:
    ref = resources.files("structmed") / "templates" / TEMPLATE_VERSION / filename
    return ref.read_text(encoding="utf-8").rstrip("\n")


def _parse_step_blocks(part2: str) -> list[ReasoningStep]:
    steps: list[ReasoningStep] = []
    pattern = re.compile(r"^### (\d+)\.\s*(.+?):\s*$")
    current: tuple[int, str] | None = None
    guidance: list[str] = []
    for line in part2.splitlines():
        m = pattern.match(line)
        if m:
            if current:
                steps.append(_make_step(current[0], current[1], guidance))
            current = (int(m.group(1)), m.group(2))
            guidance = []
        elif line.startswith("- ") and current:
            guidance.append(line[2:])
    if current:
        steps.append(_make_step(current[0], current[1], guidance))
    return steps


_STEP_NAMES = {
    1: "UnderstandQuestion",
    2: "RecallKnowledge",
    3: "AnalyzeInformation",
    4: "AssessImpacts",
    5: "AdditionalInformation",
    6: "FollowUpSteps",
    7: "ReferenceSources",
    8: "LongFormAnswer",
}


def _make_step(ordinal: int, title: str, guidance: list[str]) -> ReasoningStep:
    return ReasoningStep(ordinal, _STEP_NAMES[ordinal], title, tuple(guidance))


_PART1 = _load_asset("part1.txt")
_PART2 = _load_asset("part2.txt")
_ONE_SHOT = _load_asset("one_shot.txt")

STEPS: tuple[ReasoningStep, ...] = tuple(_parse_step_blocks(_PART2))
STEPS_BY_NAME = {s.name: s for s in STEPS}
STEPS_BY_ORDINAL = {s.ordinal: s for s in STEPS}

FULL_STEP_SET: tuple[str, ...] = tuple(s.name for s in STEPS)
REASONING_STEP_NAMES: tuple[str, ...] = tuple(s.name for s in STEPS if s.ordinal < 8)


def guidance_lines() -> frozenset[str]:
    """All per-step guidance lines, used by generation-time echo stripping."""
    return frozenset(g for s in STEPS for g in s.guidance)


@dataclass(frozen=True)
class PromptFeatures:
    one_shot_example: bool = True
    instruction_reinforcement: bool = True
    specialized_markers: bool = True
    step_word_limit: int = 200
    final_answer_token_limit: int = 512
    stage1_token_limit: int = 4096

    def __post_init__(self):
        for name in ("step_word_limit", "final_answer_token_limit", "stage1_token_limit"):
            if getattr(self, name) <= 0:
                raise PromptError(f"{name} must be positive")

    def without(self, feature: str) -> "PromptFeatures":
        """Copy with one optimization (or 'all_features') disabled."""
        if feature == "all_features":
            return replace(
                self,
                one_shot_example=False,
                instruction_reinforcement=False,
                specialized_markers=False,
            )
        if feature not in ("one_shot_example", "instruction_reinforcement", "specialized_markers"):
            raise PromptError(f"unknown feature {feature!r}")
        return replace(self, **{feature: False})


class StepSet(tuple):
    """Ordered, duplicate-free selection of step names."""

    def __new__(cls, names: Iterable[str]):
        names = tuple(names)
        if not names:
            raise PromptError("step set is empty")
        for name in names:
            if name not in STEPS_BY_NAME:
                raise PromptError(f"unknown step name {name!r}")
        if len(set(names)) != len(names):
            raise PromptError("duplicate step names in step set")
        if "LongFormAnswer" in names and names[-1] != "LongFormAnswer":
            raise PromptError("LongFormAnswer must be the last step when present")
        return super().__new__(cls, names)

    @classmethod
    def full(cls) -> "StepSet":
        return cls(FULL_STEP_SET)

    @classmethod
    def reasoning_only(cls) -> "StepSet":
        """The seven reasoning stages, without the final answer stage."""
        return cls(REASONING_STEP_NAMES)

    def steps(self) -> list[ReasoningStep]:
        return [STEPS_BY_NAME[n] for n in self]


# --- ablation transforms ----------------------------------------------------

@dataclass(frozen=True)
class RemoveStep:
    ordinal: int


@dataclass(frozen=True)
class RetainSteps:
    ordinals: tuple[int, ...]


@dataclass(frozen=True)
class SwapSteps:
    first: int
    second: int


def _name_for_ordinal(ordinal: int) -> str:
    if ordinal not in STEPS_BY_ORDINAL:
        raise PromptError(f"no step with ordinal {ordinal}")
    return STEPS_BY_ORDINAL[ordinal].name


def apply_ablation(step_set: StepSet, transform) -> StepSet:
    """Rewrite a step set for an ablation arm."""
    names = list(step_set)
    if isinstance(transform, RemoveStep):
        target = _name_for_ordinal(transform.ordinal)
        if target == "LongFormAnswer":
            raise PromptError("the long-form answer stage cannot be removed")
        if target not in names:
            raise PromptError(f"step {target} not in step set")
        names.remove(target)
    elif isinstance(transform, RetainSteps):
        keep = {_name_for_ordinal(o) for o in transform.ordinals}
        missing = keep - set(names)
        if missing:
            raise PromptError(f"steps not in step set: {sorted(missing)}")
        retained = [n for n in names if n in keep and n != "LongFormAnswer"]
        if "LongFormAnswer" in names:
            retained.append("LongFormAnswer")
        names = retained
    elif isinstance(transform, SwapSteps):
        a = _name_for_ordinal(transform.first)
        b = _name_for_ordinal(transform.second)
        if a not in names or b not in names:
            raise PromptError("both swapped steps must be in the step set")
        i, j = names.index(a), names.index(b)
        names[i], names[j] = names[j], names[i]
    else:
        raise PromptError(f"unknown ablation transform {transform!r}")
    return StepSet(names)


# --- plan construction ------------------------------------------------------

@dataclass(frozen=True)
class PromptPlan:
    """A renderable prompt: one template (direct) or per-step templates."""

    mode: Mode
    step_set: StepSet | None
    features: PromptFeatures
    direct_template: str | None = None
    step_templates: tuple[tuple[str, str], ...] = ()
    summary_template: str | None = None

    def render_direct(self, question: str) -> str:
        if self.direct_template is None:
            raise PromptError("plan has no direct template")
        return render_template(self.direct_template, question=question)


_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


def render_template(template: str, **values: str) -> str:
    """Substitute {{name}} tokens; unresolved tokens are errors."""
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in values:
            raise PromptError(f"unresolved placeholder {{{{{name}}}}}")
        return str(values[name])

    return _PLACEHOLDER.sub(sub, template)


def _chain_block(step_set: StepSet, features: PromptFeatures) -> str:
    lines = ["## Chain of Thought:"]
    if features.instruction_reinforcement:
        lines.append(REINFORCEMENT_LINE)
    for step in step_set.steps():
        lines.append("")
        lines.append(step.block())
        if step.name == "LongFormAnswer" and features.specialized_markers:
            lines.append(f'- End the long-form answer with "{ANSWER_END_MARKER}".')
    if features.specialized_markers:
        lines.append("")
        lines.append(END_MARKER)
        lines.append("- Please end the output here.")
    return "\n".join(lines)


def _one_shot_block(features: PromptFeatures) -> str:
    text = _ONE_SHOT
    if features.instruction_reinforcement:
        # The directive repeats inside the example, after its chain heading.
        text = text.replace(
            "Chain of Thought:\n",
            f"Chain of Thought:\n{REINFORCEMENT_LINE}\n",
            1,
        )
    return text


def _part1_block(features: PromptFeatures) -> str:
    return render_template(_PART1, step_word_limit=str(features.step_word_limit))


def build_med_socot_plan(
    step_set: StepSet,
    features: PromptFeatures,
    mode: Mode,
) -> PromptPlan:
    """Assemble the structured-reasoning prompt plan for one run arm."""
    if mode == Mode.DIRECT:
        blocks = [_part1_block(features), "", _chain_block(step_set, features)]
        if features.one_shot_example:
            blocks += ["", _one_shot_block(features)]
        # The question follows the chain block directly, with no blank line.
        body = "\n".join(blocks)
        tail = "Question: {{question}}"
        if features.instruction_reinforcement:
            tail += f"\n{REINFORCEMENT_LINE}"
        return PromptPlan(
            mode=mode,
            step_set=step_set,
            features=features,
            direct_template=body + "\n" + tail,
        )

    step_templates = []
    for step in step_set.steps():
        lines = [
            _part1_block(features),
            "",
            "Question: {{question}}",
            "",
            "Reasoning so far:",
            "{{context}}",
            "",
            "Produce only the following step of the chain of thought.",
            step.block(),
        ]
        if features.instruction_reinforcement:
            lines.append(REINFORCEMENT_LINE)
        if features.specialized_markers:
            lines.append(f'- Terminate the step with "{END_MARKER}".')
        step_templates.append((step.name, "\n".join(lines)))

    summary_lines = [
        "Question: {{question}}",
        "",
        "Chain of Thought:",
        "{{context}}",
        "",
        SUMMARY_INSTRUCTION,
    ]
    if features.specialized_markers:
        summary_lines.append(f'End the answer with "{ANSWER_END_MARKER}".')
    return PromptPlan(
        mode=mode,
        step_set=step_set,
        features=features,
        step_templates=tuple(step_templates),
        summary_template="\n".join(summary_lines),
    )


def build_baseline_plan(kind: BaselineKind, question: str) -> PromptPlan:
    """Bare-question and generic step-by-step baseline prompts."""
    features = PromptFeatures(
        one_shot_example=False,
        instruction_reinforcement=False,
        specialized_markers=False,
    )
    if kind == BaselineKind.ZERO_SHOT:
        text = question
    else:
        text = f"{PLAIN_COT_INSTRUCTION}\n{question}"
    return PromptPlan(
        mode=Mode.DIRECT,
        step_set=None,
        features=features,
        direct_template=text,
    )
