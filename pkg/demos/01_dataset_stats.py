"""Build a tiny JSONL dataset and print its summary statistics.

Run with: python3 demos/01_dataset_stats.py
"""

import json
import tempfile
from pathlib import Path

from structmed.dataset import compute_stats, load_dataset

ROWS = [
    {
        "Question": "Does aspirin thin the blood?",
        "Free_form_answer": "Aspirin thins the blood and reduces clotting.",
        "Must_have": ["Aspirin thins the blood"],
        "Nice_to_have": ["Consult a pharmacist"],
    },
    {
        "Question": "How do I recover from the flu?",
        "Free_form_answer": "Rest helps recovery and hydration is important.",
        "Must_have": ["Rest helps recovery", "Hydration is important"],
        "Nice_to_have": [],
    },
]


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "demo.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in ROWS), encoding="utf-8")
        pairs = load_dataset(path, "demo")
        stats = compute_stats(pairs)

    print(f"pairs:              {stats.qa_pair_count}")
    print(f"avg answer words:   {stats.avg_answer_length_words:.1f}")
    print(f"avg must-have:      {stats.avg_mh_count:.1f}")
    print(f"avg nice-to-have:   {stats.avg_nh_count:.1f}")
    for pair in pairs:
        print(f"  {pair.id}: {pair.question}")


if __name__ == "__main__":
    main()
