"""Loading, validation, and summary statistics for long-form medical QA data.

Input files are JSONL: one JSON object per line with fields "Question",
"Free_form_answer", "Must_have", "Nice_to_have", and an optional "id".
When "id" is absent it is auto-assigned as "<dataset>-<line#>".
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class DatasetError(Exception):
    """Raised on malformed input files or invalid records."""


# Default field vocabulary; a mapping can rename fields for other corpora.
DEFAULT_FIELD_MAP = {
    "question": "Question",
    "reference_answer": "Free_form_answer",
    "must_have": "Must_have",
    "nice_to_have": "Nice_to_have",
    "id": "id",
}


@dataclass(frozen=True)
class QAPair:
    """One QA item: question, reference answer, and annotated statements."""

    id: str
    dataset: str
    question: str
    reference_answer: str
    must_have: tuple[str, ...] = ()
    nice_to_have: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.question.strip():
            raise DatasetError(f"{self.dataset}/{self.id}: question is empty")
        for stmt in list(self.must_have) + list(self.nice_to_have):
            if not stmt.strip():
                raise DatasetError(f"{self.dataset}/{self.id}: empty statement")

    @property
    def all_statements(self) -> tuple[str, ...]:
        """Must-have followed by nice-to-have statements."""
        return self.must_have + self.nice_to_have


@dataclass(frozen=True)
class DatasetStats:
    qa_pair_count: int
    avg_answer_length_words: float
    avg_mh_count: float
    avg_nh_count: float


def _require(record: dict, key: str, line_no: int):
    if key not in record:
        raise DatasetError(f"line {line_no}: missing required field {key!r}")
    return record[key]


def _as_statement_list(value, key: str, line_no: int) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list):
        raise DatasetError(f"line {line_no}: field {key!r} must be a list of strings")
    flat = []
    for item in value:
        # Some corpora nest statement groups one level deep.
        if isinstance(item, list):
            flat.extend(str(x) for x in item)
        else:
            flat.append(str(item))
    return tuple(s for s in flat if s.strip())


def load_dataset(
    path: str | Path,
    name: str,
    field_map: dict[str, str] | None = None,
) -> list[QAPair]:
    """Load and validate a JSONL dataset, preserving record order."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    fm = dict(DEFAULT_FIELD_MAP)
    if field_map:
        fm.update(field_map)

    pairs: list[QAPair] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"line {line_no}: record is not a JSON object")
            question = _require(record, fm["question"], line_no)
            answer = _require(record, fm["reference_answer"], line_no)
            pair_id = str(record.get(fm["id"]) or f"{name}-{line_no}")
            if pair_id in seen_ids:
                raise DatasetError(f"line {line_no}: duplicate id {pair_id!r}")
            seen_ids.add(pair_id)
            try:
                pairs.append(
                    QAPair(
                        id=pair_id,
                        dataset=name,
                        question=str(question),
                        reference_answer=str(answer),
                        must_have=_as_statement_list(record.get(fm["must_have"]), fm["must_have"], line_no),
                        nice_to_have=_as_statement_list(record.get(fm["nice_to_have"]), fm["nice_to_have"], line_no),
                    )
                )
            except DatasetError as exc:
                raise DatasetError(f"line {line_no}: {exc}") from exc
    return pairs


def save_dataset(pairs: Iterable[QAPair], path: str | Path) -> None:
    """Write pairs back out as JSONL in the default field vocabulary."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "id": p.id,
                        "Question": p.question,
                        "Free_form_answer": p.reference_answer,
                        "Must_have": list(p.must_have),
                        "Nice_to_have": list(p.nice_to_have),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def word_count(text: str) -> int:
    """Unicode-whitespace word count; no stemming."""
    return len(text.split())


def compute_stats(pairs: Sequence[QAPair]) -> DatasetStats:
    """Arithmetic-mean summary over all pairs. Rounding is left to display."""
    if not pairs:
        raise DatasetError("cannot compute stats over an empty list")
    n = len(pairs)
    return DatasetStats(
        qa_pair_count=n,
        avg_answer_length_words=sum(word_count(p.reference_answer) for p in pairs) / n,
        avg_mh_count=sum(len(p.must_have) for p in pairs) / n,
        avg_nh_count=sum(len(p.nice_to_have) for p in pairs) / n,
    )


def sample(pairs: Sequence[QAPair], n: int, seed: int) -> list[QAPair]:
    """Deterministic subset of size n, keeping the input's relative order."""
    if not (0 < n <= len(pairs)):
        raise ValueError(f"sample size {n} out of range for {len(pairs)} pairs")
    rng = random.Random(seed)
    indices = sorted(rng.sample(range(len(pairs)), n))
    return [pairs[i] for i in indices]
