import json

import pytest

from structmed.dataset import QAPair
from structmed.llm import CompletionParams
from structmed.prompts import SUMMARY_INSTRUCTION

# A realistic structured model response used as a parser fixture: headings
# in the loose style models actually emit (no ### fences, ordinal + colon,
# short "Answer:" alias).
STRUCTURED_TRACE = """\
1. Understand the Question:
Zyrtec is an antihistamine used to treat allergic reactions, while hydroxyzine is also an antihistamine but is often used for anxiety and itching. Both medications can cause drowsiness, so potential interactions matter.

2. Recall Relevant Medical Knowledge:
Hydroxyzine is a first-generation antihistamine with sedating effects. Cetirizine, the active ingredient in Zyrtec, is actually a metabolite of hydroxyzine, so the two drugs are closely related.

3. Analyze Medical Information:
Because cetirizine is derived from hydroxyzine, combining them duplicates the same pharmacologic action. The main clinical concern is additive sedation and anticholinergic burden rather than a dangerous interaction.

Answer:
Taking hydroxyzine together with Zyrtec combines two closely related antihistamines, which adds sedation without adding benefit. Most clinicians advise against routine combined use and recommend discussing the plan with a pharmacist or physician first.
"""


def scripted_answers() -> dict[str, str]:
    """Final answers keyed by question; entailment verdicts under the mock
    rules are hand-checkable from these texts."""
    return {
        "Does aspirin thin the blood?":
            "Aspirin thins the blood. Always take it with food to protect the stomach.",
        "Is drug X safe to take daily?":
            "Drug X is not safe. Daily use has been linked to liver problems.",
        "How do I recover from the flu?":
            "Rest helps recovery. Most people improve within a week without treatment.",
        "What should I know about vitamin C?":
            "Vitamin C is water soluble, and citrus contains vitamin C in useful amounts.",
        "Does this condition require surgery?":
            "Surgery is required in most confirmed cases. You should also see a specialist promptly.",
    }


@pytest.fixture
def fixture_pairs() -> list[QAPair]:
    """Five pairs whose factuality under the mock judges is hand-computed:
    100, 0, 75, 100, 25 (mean 60.0)."""
    return [
        QAPair(
            id="demo-1", dataset="demo",
            question="Does aspirin thin the blood?",
            reference_answer="Aspirin thins the blood and reduces clotting.",
            must_have=("Aspirin thins the blood",),
            nice_to_have=("Consult a pharmacist",),
        ),
        QAPair(
            id="demo-2", dataset="demo",
            question="Is drug X safe to take daily?",
            reference_answer="Drug X is safe at recommended doses.",
            must_have=("Drug X is safe",),
            nice_to_have=(),
        ),
        QAPair(
            id="demo-3", dataset="demo",
            question="How do I recover from the flu?",
            reference_answer="Rest helps recovery and hydration is important.",
            must_have=("Rest helps recovery", "Hydration is important"),
            nice_to_have=("Sleep eight hours",),
        ),
        QAPair(
            id="demo-4", dataset="demo",
            question="What should I know about vitamin C?",
            reference_answer="Vitamin C is water soluble and found in citrus.",
            must_have=("Vitamin C is water soluble",),
            nice_to_have=("Citrus contains vitamin C",),
        ),
        QAPair(
            id="demo-5", dataset="demo",
            question="Does this condition require surgery?",
            reference_answer="Surgery is never required for this condition.",
            must_have=("Surgery is never required",),
            nice_to_have=("See a specialist",),
        ),
    ]


EXPECTED_FACTUALITY = {
    "demo-1": 100.0,
    "demo-2": 0.0,
    "demo-3": 75.0,
    "demo-4": 100.0,
    "demo-5": 25.0,
}


def scripted_responder(prompt: str, params: CompletionParams) -> str:
    """Deterministic mock responses for both direct and stepwise prompts."""
    answers = scripted_answers()
    question = None
    for line in prompt.splitlines():
        if line.startswith("Question:"):
            question = line[len("Question:"):].strip()
    if question is None:
        question = prompt.strip().splitlines()[-1]
    answer = answers.get(question, f"No scripted answer for: {question}")

    if "Produce only the following step" in prompt:
        return f"Step reasoning about the question '{question}'."
    # The same sentence appears as a guidance bullet in direct prompts; only a
    # standalone line marks the stepwise summary call.
    if SUMMARY_INSTRUCTION in prompt.splitlines():
        return answer + "\nANSWER END"
    # Direct-mode structured response.
    return (
        "### 1. Understand the Question:\n"
        f"The question is about: {question}\n\n"
        "### 2. Recall Relevant Medical Knowledge:\n"
        f"Relevant knowledge for: {question}\n\n"
        "### 3. Analyze Medical Information:\n"
        f"Analysis for: {question}\n\n"
        "### 4. Assess Impacts and Considerations:\n"
        "Risks and patient factors were considered.\n\n"
        "### 5. Provide Additional Relevant Information:\n"
        "Additional context was provided.\n\n"
        "### 6. Suggest Follow-Up Steps or Actions:\n"
        "Follow up with a clinician as needed.\n\n"
        "### 7. Reference Reliable Sources:\n"
        "Based on standard clinical references.\n\n"
        "### 8. Long-Form Answer:\n"
        f"{answer} ANSWER END\n"
        "### END\n"
    )


def write_fixture_dataset(pairs, path) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({
                "id": p.id,
                "Question": p.question,
                "Free_form_answer": p.reference_answer,
                "Must_have": list(p.must_have),
                "Nice_to_have": list(p.nice_to_have),
            }) + "\n")
    return str(path)
