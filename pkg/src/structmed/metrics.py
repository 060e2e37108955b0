"""Lexical-overlap and statement-level factuality metrics.

All reported scores are percentages on a 0-100 scale: the set-ratio
scores are fractions scaled by 100 so the factuality combination
(comprehensiveness - hallucination + 100) / 2 is dimensionally consistent.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Iterable, Mapping, Sequence

from .entailment import EntailmentJudgment, EntailmentLabel


class MetricsError(Exception):
    """Raised on undefined denominators or out-of-range inputs."""


@dataclass(frozen=True)
class RougeTriple:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RougeScores:
    rouge1: RougeTriple
    rouge2: RougeTriple
    rougeL: RougeTriple


@dataclass(frozen=True)
class ScoreCard:
    """Per-answer metrics; aggregates reuse the same shape."""

    words_composition: float
    comprehensiveness: float
    hallucination: float
    factuality: float
    rouge: RougeScores | None = None
    dataset: str = ""
    pair_id: str = ""


def tokenize_for_rouge(text: str) -> list[str]:
    """Lowercase; split on non-alphanumeric runs; no stemming or stopwords."""
    tokens: list[str] = []
    current: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if (p + r) > 0 else 0.0


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(prediction: Sequence[str], reference: Sequence[str], n: int) -> RougeTriple:
    """Clipped n-gram overlap; empty n-gram sets yield zero components."""
    if n not in (1, 2):
        raise MetricsError(f"n must be 1 or 2, got {n}")
    pred_grams = _ngrams(prediction, n)
    ref_grams = _ngrams(reference, n)
    overlap = sum(min(c, ref_grams[g]) for g, c in pred_grams.items())
    p = overlap / sum(pred_grams.values()) if pred_grams else 0.0
    r = overlap / sum(ref_grams.values()) if ref_grams else 0.0
    return RougeTriple(p, r, _f1(p, r))


def _lcs_length(xs: Sequence[str], ys: Sequence[str]) -> int:
    # Rolling single-row LCS table.
    if not xs or not ys:
        return 0
    row = [0] * (len(ys) + 1)
    for x in xs:
        prev = 0
        for j, y in enumerate(ys, start=1):
            tmp = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = tmp
    return row[-1]


def rouge_l(prediction: Sequence[str], reference: Sequence[str]) -> RougeTriple:
    lcs = _lcs_length(prediction, reference)
    p = lcs / len(prediction) if prediction else 0.0
    r = lcs / len(reference) if reference else 0.0
    return RougeTriple(p, r, _f1(p, r))


def rouge_scores(prediction_text: str, reference_text: str) -> RougeScores:
    pred = tokenize_for_rouge(prediction_text)
    ref = tokenize_for_rouge(reference_text)
    return RougeScores(
        rouge1=rouge_n(pred, ref, 1),
        rouge2=rouge_n(pred, ref, 2),
        rougeL=rouge_l(pred, ref),
    )


def words_composition(rouge: RougeScores) -> float:
    """Mean of the three F1 values, reported on the 0-100 scale."""
    return 100.0 * (rouge.rouge1.f1 + rouge.rouge2.f1 + rouge.rougeL.f1) / 3.0


def hallucination_score(judgments: Sequence[EntailmentJudgment]) -> float:
    """Percent of all statements contradicted by the answer."""
    if not judgments:
        raise MetricsError("hallucination score undefined: no statements")
    contradicted = sum(1 for j in judgments if j.label == EntailmentLabel.CONTRADICTS)
    return 100.0 * contradicted / len(judgments)


def comprehensiveness_score(judgments: Sequence[EntailmentJudgment]) -> float:
    """Percent of must-have statements entailed; nice-to-have are ignored."""
    mh = [j for j in judgments if j.statement_class == "MH"]
    if not mh:
        raise MetricsError("comprehensiveness score undefined: no must-have statements")
    entailed = sum(1 for j in mh if j.label == EntailmentLabel.ENTAILS)
    return 100.0 * entailed / len(mh)


def factuality_score(comprehensiveness: float, hallucination: float) -> float:
    for name, value in (("comprehensiveness", comprehensiveness), ("hallucination", hallucination)):
        if not 0.0 <= value <= 100.0:
            raise MetricsError(f"{name} out of range: {value}")
    return (comprehensiveness - hallucination + 100.0) / 2.0


def score_answer(
    answer: str,
    reference_answer: str,
    judgments: Sequence[EntailmentJudgment],
    dataset: str = "",
    pair_id: str = "",
) -> ScoreCard:
    rouge = rouge_scores(answer, reference_answer)
    comp = comprehensiveness_score(judgments)
    hall = hallucination_score(judgments)
    return ScoreCard(
        words_composition=words_composition(rouge),
        comprehensiveness=comp,
        hallucination=hall,
        factuality=factuality_score(comp, hall),
        rouge=rouge,
        dataset=dataset,
        pair_id=pair_id,
    )


_MEAN_FIELDS = ("words_composition", "comprehensiveness", "hallucination", "factuality")


def _mean_card(cards: Sequence[ScoreCard], dataset: str) -> ScoreCard:
    if not cards:
        raise MetricsError(f"empty score group {dataset!r}")
    n = len(cards)
    means = {f: sum(getattr(c, f) for c in cards) / n for f in _MEAN_FIELDS}
    return ScoreCard(dataset=dataset, rouge=None, **means)


def aggregate(cards: Sequence[ScoreCard]) -> tuple[dict[str, ScoreCard], ScoreCard]:
    """Per-dataset means plus an unweighted overall mean of those means.

    The overall figure weights every dataset equally regardless of how many
    pairs it contains, matching the construction of a per-dataset average
    column.
    """
    if not cards:
        raise MetricsError("no score cards to aggregate")
    by_dataset: dict[str, list[ScoreCard]] = {}
    for card in cards:
        by_dataset.setdefault(card.dataset, []).append(card)
    per_dataset = {name: _mean_card(group, name) for name, group in by_dataset.items()}
    overall = _mean_card(list(per_dataset.values()), "overall")
    return per_dataset, overall


def display_round(value: float, places: int = 1) -> float:
    """Report-table rounding: quantize to 2 decimals, then to the target.

    Two-stage half-even quantization reproduces the reference tables'
    printed values (e.g. a computed 6.0518% displays as 6.0).
    """
    d = Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)
    q = Decimal(1).scaleb(-places)
    return float(d.quantize(q, rounding=ROUND_HALF_EVEN))
