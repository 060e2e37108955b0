"""Full offline run: canned model, rule-based judge, markdown report.

Run with: python3 demos/03_mock_end_to_end.py
"""

import json
import tempfile
from pathlib import Path

from structmed.entailment import MockEntailmentProvider
from structmed.experiment import RunConfig, render_markdown_report, run
from structmed.llm import CannedStructuredProvider
from structmed.prompts import Mode

ROWS = [
    {
        "Question": "Does aspirin thin the blood?",
        "Free_form_answer": "Aspirin thins the blood and reduces clotting.",
        "Must_have": ["Aspirin thins the blood"],
        "Nice_to_have": ["Consult a pharmacist"],
    },
    {
        "Question": "Is drug X safe to take daily?",
        "Free_form_answer": "Drug X is safe at recommended doses.",
        "Must_have": ["Drug X is safe"],
        "Nice_to_have": [],
    },
]


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        data = Path(tmp) / "demo.jsonl"
        data.write_text("".join(json.dumps(r) + "\n" for r in ROWS), encoding="utf-8")

        config = RunConfig(
            method="med_socot",
            mode=Mode.DIRECT,
            model="canned",
            datasets=(("demo", str(data)),),
            output_dir=str(Path(tmp) / "runs"),
            workers=1,
        )
        result = run(config, CannedStructuredProvider(), MockEntailmentProvider())

        print(f"config digest: {result.config_digest}")
        print(render_markdown_report([result]))
        outdir = Path(tmp) / "runs" / result.config_digest
        print("artifacts written:")
        for path in sorted(outdir.iterdir()):
            print(f"  {path.name}")


if __name__ == "__main__":
    main()
