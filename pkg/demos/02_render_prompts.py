"""Render the structured prompt in direct and stepwise form.

Run with: python3 demos/02_render_prompts.py
"""

from structmed.prompts import (
    Mode,
    PromptFeatures,
    RemoveStep,
    StepSet,
    apply_ablation,
    build_med_socot_plan,
    render_template,
)

QUESTION = "Does aspirin thin the blood?"


def main() -> None:
    plan = build_med_socot_plan(StepSet.full(), PromptFeatures(), Mode.DIRECT)
    direct = plan.render_direct(QUESTION)
    print("=== direct prompt (first 15 lines) ===")
    print("\n".join(direct.splitlines()[:15]))
    print(f"... ({len(direct.splitlines())} lines total)\n")

    stepwise = build_med_socot_plan(
        StepSet.reasoning_only(), PromptFeatures(one_shot_example=False), Mode.STEPWISE
    )
    name, template = stepwise.step_templates[0]
    print(f"=== stepwise template for {name} ===")
    print(render_template(template, question=QUESTION, context="(no prior steps)"))
    print()

    ablated = apply_ablation(StepSet.reasoning_only(), RemoveStep(4))
    print("=== step set with stage 4 removed ===")
    print(", ".join(ablated))


if __name__ == "__main__":
    main()
