import re

import pytest

from structmed.prompts import (
    BaselineKind,
    Mode,
    PromptError,
    PromptFeatures,
    RemoveStep,
    RetainSteps,
    StepSet,
    SwapSteps,
    apply_ablation,
    build_baseline_plan,
    build_med_socot_plan,
    render_template,
    REINFORCEMENT_LINE,
    STEPS,
)

ALL_FEATURES = PromptFeatures()
NO_FEATURES = PromptFeatures(
    one_shot_example=False,
    instruction_reinforcement=False,
    specialized_markers=False,
)


def test_direct_full_plan_has_all_headings_in_order():
    plan = build_med_socot_plan(StepSet.full(), ALL_FEATURES, Mode.DIRECT)
    prompt = plan.render_direct("Q?")
    positions = []
    for step in STEPS:
        occurrences = [m.start() for m in re.finditer(re.escape(step.heading()), prompt)]
        assert len(occurrences) == 1, step.name
        positions.append(occurrences[0])
    assert positions == sorted(positions)


def test_direct_minimal_step_set_single_numbered_heading():
    plan = build_med_socot_plan(StepSet(["UnderstandQuestion"]), NO_FEATURES, Mode.DIRECT)
    prompt = plan.render_direct("Q?")
    headings = re.findall(r"^### \d+", prompt, re.MULTILINE)
    assert len(headings) == 1


def test_stepwise_plan_template_counts():
    plan = build_med_socot_plan(StepSet.full(), ALL_FEATURES, Mode.STEPWISE)
    assert len(plan.step_templates) == 8
    assert plan.summary_template is not None

    plan7 = build_med_socot_plan(StepSet.reasoning_only(), ALL_FEATURES, Mode.STEPWISE)
    assert len(plan7.step_templates) == 7


def test_rendering_is_pure():
    a = build_med_socot_plan(StepSet.full(), ALL_FEATURES, Mode.DIRECT).render_direct("Q?")
    b = build_med_socot_plan(StepSet.full(), ALL_FEATURES, Mode.DIRECT).render_direct("Q?")
    assert a == b


def test_disabling_one_shot_removes_only_the_example_block():
    with_example = build_med_socot_plan(StepSet.full(), ALL_FEATURES, Mode.DIRECT)
    without = build_med_socot_plan(
        StepSet.full(),
        PromptFeatures(one_shot_example=False),
        Mode.DIRECT,
    )
    lines_with = with_example.render_direct("Q?").splitlines()
    lines_without = without.render_direct("Q?").splitlines()
    # The smaller prompt's lines appear as prefix + suffix of the larger one:
    # the diff is one contiguous removed block.
    n_removed = len(lines_with) - len(lines_without)
    assert n_removed > 0
    for start in range(len(lines_with) - n_removed + 1):
        if lines_with[:start] + lines_with[start + n_removed:] == lines_without:
            break
    else:
        pytest.fail("one-shot example removal is not a contiguous block diff")


def test_question_immediately_after_chain_no_blank_line():
    plan = build_med_socot_plan(StepSet.full(), ALL_FEATURES, Mode.DIRECT)
    lines = plan.render_direct("Is X safe?").splitlines()
    idx = lines.index("Question: Is X safe?")
    assert lines[idx - 1].strip() != ""


def test_reinforcement_directive_appears_three_times():
    plan = build_med_socot_plan(StepSet.full(), ALL_FEATURES, Mode.DIRECT)
    prompt = plan.render_direct("Q?")
    assert prompt.count(REINFORCEMENT_LINE) == 3  # chain, example, tail

    bare = build_med_socot_plan(
        StepSet.full(), PromptFeatures(instruction_reinforcement=False), Mode.DIRECT
    ).render_direct("Q?")
    assert REINFORCEMENT_LINE not in bare


def test_markers_toggle():
    on = build_med_socot_plan(StepSet.full(), ALL_FEATURES, Mode.DIRECT).render_direct("Q?")
    assert "### END" in on
    assert "ANSWER END" in on
    off = build_med_socot_plan(
        StepSet.full(), PromptFeatures(specialized_markers=False), Mode.DIRECT
    ).render_direct("Q?")
    assert "### END" not in off


def test_step_word_limit_is_rendered():
    small = build_med_socot_plan(
        StepSet.full(), PromptFeatures(step_word_limit=120), Mode.DIRECT
    ).render_direct("Q?")
    assert "should not exceed 120 words" in small


def test_zero_shot_is_bare_question():
    plan = build_baseline_plan(BaselineKind.ZERO_SHOT, "Q?")
    assert plan.direct_template == "Q?"
    assert plan.mode == Mode.DIRECT
    assert plan.summary_template is None


def test_plain_cot_contains_instruction_and_question():
    plan = build_baseline_plan(BaselineKind.PLAIN_COT, "Q?")
    assert "step by step" in plan.direct_template
    assert "Q?" in plan.direct_template


def test_remove_step_3():
    out = apply_ablation(StepSet.full(), RemoveStep(3))
    assert len(out) == 7
    assert "AnalyzeInformation" not in out


def test_remove_answer_stage_rejected():
    with pytest.raises(PromptError):
        apply_ablation(StepSet.full(), RemoveStep(8))


def test_remove_absent_step_rejected():
    seven = apply_ablation(StepSet.full(), RemoveStep(3))
    with pytest.raises(PromptError):
        apply_ablation(seven, RemoveStep(3))


def test_swap_is_involution():
    once = apply_ablation(StepSet.full(), SwapSteps(3, 6))
    assert once != StepSet.full()
    twice = apply_ablation(once, SwapSteps(3, 6))
    assert twice == StepSet.full()


def test_retain_steps_keeps_answer_stage():
    out = apply_ablation(StepSet.full(), RetainSteps((1, 3, 6)))
    assert out == StepSet(
        ["UnderstandQuestion", "AnalyzeInformation", "FollowUpSteps", "LongFormAnswer"]
    )


def test_step_set_validation():
    with pytest.raises(PromptError):
        StepSet([])
    with pytest.raises(PromptError):
        StepSet(["NoSuchStep"])
    with pytest.raises(PromptError):
        StepSet(["UnderstandQuestion", "UnderstandQuestion"])
    with pytest.raises(PromptError):
        StepSet(["LongFormAnswer", "UnderstandQuestion"])


def test_unresolved_placeholder_is_an_error():
    with pytest.raises(PromptError, match="unresolved placeholder"):
        render_template("hello {{nope}}", question="q")
