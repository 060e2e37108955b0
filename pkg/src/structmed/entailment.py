"""Three-way entailment judging of (answer, statement) pairs.

Two providers: an HTTP client for a real NLI service, and a rule-based
mock. The mock is test scaffolding only — lexical substring and negation
rules, not a claim of NLI quality — but it is deterministic and its
verdicts are hand-checkable, which keeps the whole pipeline testable
offline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import requests

from .dataset import QAPair


class EntailmentError(Exception):
    """Remote judging failed; carries statement context."""


class EntailmentLabel(str, Enum):
    ENTAILS = "entailment"
    CONTRADICTS = "contradiction"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class EntailmentJudgment:
    statement: str
    statement_class: str  # "MH" or "NH"
    label: EntailmentLabel
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")


class EntailmentProvider(Protocol):
    def judge(self, answer: str, statement: str) -> tuple[EntailmentLabel, float]: ...


NEGATION_CUES = ("not", "no", "never", "cannot", "should not")

_PUNCT = re.compile(r"[^\w\s]")


def _normalize(text: str) -> str:
    return " ".join(_PUNCT.sub(" ", text.lower()).split())


def _strip_negations(normalized: str) -> tuple[str, bool]:
    """Remove negation cue words; report whether any were present."""
    tokens = normalized.split()
    kept = []
    i = 0
    negated = False
    while i < len(tokens):
        if tokens[i : i + 2] == ["should", "not"]:
            negated = True
            i += 2
            continue
        if tokens[i] in ("not", "no", "never", "cannot"):
            negated = True
            i += 1
            continue
        kept.append(tokens[i])
        i += 1
    return " ".join(kept), negated


class MockEntailmentProvider:
    """Deterministic lexical judge.

    Entails when the normalized statement appears verbatim in the
    normalized answer; contradicts when the negation-stripped forms match
    but polarity differs; neutral otherwise.
    """

    def judge(self, answer: str, statement: str) -> tuple[EntailmentLabel, float]:
        norm_a = _normalize(answer)
        norm_s = _normalize(statement)
        if norm_s and norm_s in norm_a:
            return EntailmentLabel.ENTAILS, 1.0
        strip_a, neg_a = _strip_negations(norm_a)
        strip_s, neg_s = _strip_negations(norm_s)
        if strip_s and strip_s in strip_a and neg_a != neg_s:
            return EntailmentLabel.CONTRADICTS, 1.0
        return EntailmentLabel.NEUTRAL, 1.0


class HttpEntailmentProvider:
    """Posts {premise, hypothesis} to an NLI endpoint returning a 3-way label."""

    def __init__(self, endpoint: str, timeout_seconds: float = 30.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.timeout_seconds = timeout_seconds
        self._session = session or requests.Session()

    def judge(self, answer: str, statement: str) -> tuple[EntailmentLabel, float]:
        try:
            resp = self._session.post(
                self.endpoint,
                json={"premise": answer, "hypothesis": statement},
                timeout=self.timeout_seconds,
            )
            resp.raise_for_status()
            body = resp.json()
            label = EntailmentLabel(body["label"])
            score = float(body.get("score", 1.0))
        except (requests.RequestException, ValueError, KeyError) as exc:
            raise EntailmentError(f"judging failed for statement {statement!r}: {exc}") from exc
        return label, max(0.0, min(1.0, score))


def judge_all(
    answer: str,
    pair: QAPair,
    provider: EntailmentProvider,
) -> list[EntailmentJudgment]:
    """One judgment per statement, must-have first then nice-to-have."""
    judgments: list[EntailmentJudgment] = []
    for cls, statements in (("MH", pair.must_have), ("NH", pair.nice_to_have)):
        for stmt in statements:
            if not answer.strip():
                judgments.append(EntailmentJudgment(stmt, cls, EntailmentLabel.NEUTRAL))
                continue
            try:
                label, confidence = provider.judge(answer, stmt)
            except EntailmentError:
                raise
            except Exception as exc:
                raise EntailmentError(
                    f"judging failed for {pair.id} statement {stmt!r}: {exc}"
                ) from exc
            judgments.append(EntailmentJudgment(stmt, cls, label, confidence))
    return judgments
