"""Run orchestration: method arms, ablation suites, and report emission.

A run walks the pipeline load -> plan -> generate -> judge -> score ->
aggregate for each configured dataset, persisting every intermediate under
``<outdir>/<config-digest>/`` so runs are auditable and resumable.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import dataset as ds
from . import prompts
from .entailment import EntailmentProvider, judge_all
from .generation import GenerationOutcome, generate, read_trace, write_trace
from .llm import CompletionParams, CompletionProvider
from .metrics import ScoreCard, aggregate, display_round, score_answer
from .parsing import render_structured
from .prompts import (
    BaselineKind,
    Mode,
    PromptFeatures,
    PromptPlan,
    RemoveStep,
    RetainSteps,
    StepSet,
    SwapSteps,
    apply_ablation,
    build_baseline_plan,
    build_med_socot_plan,
)

log = logging.getLogger(__name__)

# Above this per-dataset failure fraction the aggregate is flagged unreliable.
DEFAULT_FAILURE_THRESHOLD = 0.05


class ExperimentError(Exception):
    pass


@dataclass(frozen=True)
class AblationSpec:
    kind: str  # remove_step | retain_steps | swap_steps | disable_feature
    payload: tuple = ()

    _FEATURES = ("one_shot_example", "instruction_reinforcement",
                 "specialized_markers", "all_features")

    def __post_init__(self):
        if self.kind == "remove_step":
            if len(self.payload) != 1:
                raise ExperimentError("remove_step takes one step ordinal")
        elif self.kind == "retain_steps":
            if not self.payload:
                raise ExperimentError("retain_steps takes step ordinals")
        elif self.kind == "swap_steps":
            if len(self.payload) != 2:
                raise ExperimentError("swap_steps takes two step ordinals")
        elif self.kind == "disable_feature":
            if len(self.payload) != 1 or self.payload[0] not in self._FEATURES:
                raise ExperimentError(f"disable_feature takes one of {self._FEATURES}")
        else:
            raise ExperimentError(f"unknown ablation kind {self.kind!r}")

    def transform(self):
        if self.kind == "remove_step":
            return RemoveStep(int(self.payload[0]))
        if self.kind == "retain_steps":
            return RetainSteps(tuple(int(o) for o in self.payload))
        if self.kind == "swap_steps":
            return SwapSteps(int(self.payload[0]), int(self.payload[1]))
        return None


@dataclass(frozen=True)
class RunConfig:
    method: str  # zero_shot | plain_cot | med_socot
    mode: Mode = Mode.DIRECT
    model: str = "mock"
    datasets: tuple[tuple[str, str], ...] = ()  # (name, path)
    sample_n: int | None = None
    sample_seed: int = 0
    features: PromptFeatures = field(default_factory=PromptFeatures)
    ablation: AblationSpec | None = None
    output_dir: str = "runs"
    score_full_text: bool = False
    workers: int = 4
    resume: bool = False
    failure_threshold: float = DEFAULT_FAILURE_THRESHOLD

    def __post_init__(self):
        if self.method not in ("zero_shot", "plain_cot", "med_socot"):
            raise ExperimentError(f"unknown method {self.method!r}")
        if self.mode == Mode.STEPWISE and self.method != "med_socot":
            raise ExperimentError("stepwise mode requires the med_socot method")
        if self.ablation is not None and self.method != "med_socot":
            raise ExperimentError("ablation requires the med_socot method")

    def canonical(self) -> str:
        payload = {
            "method": self.method,
            "mode": self.mode.value,
            "model": self.model,
            "datasets": [list(d) for d in self.datasets],
            "sample_n": self.sample_n,
            "sample_seed": self.sample_seed,
            "features": {
                "one_shot_example": self.features.one_shot_example,
                "instruction_reinforcement": self.features.instruction_reinforcement,
                "specialized_markers": self.features.specialized_markers,
                "step_word_limit": self.features.step_word_limit,
                "final_answer_token_limit": self.features.final_answer_token_limit,
                "stage1_token_limit": self.features.stage1_token_limit,
            },
            "ablation": (
                {"kind": self.ablation.kind, "payload": list(self.ablation.payload)}
                if self.ablation
                else None
            ),
            "score_full_text": self.score_full_text,
        }
        return json.dumps(payload, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_json(cls, raw: dict) -> "RunConfig":
        features = PromptFeatures(**raw.get("features", {}))
        ablation = None
        if raw.get("ablation"):
            ablation = AblationSpec(raw["ablation"]["kind"], tuple(raw["ablation"]["payload"]))
        return cls(
            method=raw["method"],
            mode=Mode(raw.get("mode", "direct")),
            model=raw.get("model", "mock"),
            datasets=tuple((d["name"], d["path"]) for d in raw.get("datasets", [])),
            sample_n=raw.get("sample_n"),
            sample_seed=raw.get("sample_seed", 0),
            features=features,
            ablation=ablation,
            output_dir=raw.get("output_dir", "runs"),
            score_full_text=raw.get("score_full_text", False),
            workers=raw.get("workers", 4),
            resume=raw.get("resume", False),
            failure_threshold=raw.get("failure_threshold", DEFAULT_FAILURE_THRESHOLD),
        )


@dataclass
class RunResult:
    config_digest: str
    per_dataset: dict[str, ScoreCard]
    overall: ScoreCard
    trace_paths: dict[str, str]
    unreliable_datasets: list[str] = field(default_factory=list)
    duration_seconds: float = 0.0
    label: str = "run"


def _build_plan(config: RunConfig) -> PromptPlan | None:
    """Shared plan for the structured arm; baselines render per question."""
    if config.method != "med_socot":
        return None
    if config.mode == Mode.STEPWISE:
        step_set = StepSet.reasoning_only()
    else:
        step_set = StepSet.full()
    features = config.features
    if config.ablation is not None:
        transform = config.ablation.transform()
        if transform is not None:
            step_set = apply_ablation(step_set, transform)
        else:
            features = features.without(config.ablation.payload[0])
    return build_med_socot_plan(step_set, features, config.mode)


def _plan_for_pair(config: RunConfig, shared: PromptPlan | None, pair: ds.QAPair) -> PromptPlan:
    if shared is not None:
        return shared
    kind = BaselineKind.ZERO_SHOT if config.method == "zero_shot" else BaselineKind.PLAIN_COT
    return build_baseline_plan(kind, pair.question)


def _default_params(config: RunConfig) -> CompletionParams:
    return CompletionParams(
        max_new_tokens=config.features.final_answer_token_limit
        if config.mode == Mode.STEPWISE
        else config.features.stage1_token_limit,
        temperature=0.0,
    )


def _generate_dataset(
    config: RunConfig,
    pairs: Sequence[ds.QAPair],
    shared_plan: PromptPlan | None,
    provider: CompletionProvider,
    trace_path: Path,
) -> list[GenerationOutcome]:
    params = _default_params(config)
    done: dict[str, GenerationOutcome] = {}
    if config.resume and trace_path.exists():
        done = {o.question_id: o for o in read_trace(trace_path)}

    def work(pair: ds.QAPair) -> GenerationOutcome:
        if pair.id in done:
            return done[pair.id]
        plan = _plan_for_pair(config, shared_plan, pair)
        return generate(pair, plan, provider, params)

    # Question-level parallelism; output order follows input position.
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(work, pairs))
    else:
        outcomes = [work(p) for p in pairs]
    write_trace(outcomes, trace_path)
    return outcomes


def run(
    config: RunConfig,
    provider: CompletionProvider,
    entailment_provider: EntailmentProvider,
    label: str = "run",
) -> RunResult:
    """Execute one full arm over every configured dataset."""
    if not config.datasets:
        raise ExperimentError("no datasets configured")
    started = time.time()
    digest = config.digest()
    outdir = Path(config.output_dir) / digest
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(config.canonical() + "\n", encoding="utf-8")

    shared_plan = _build_plan(config)
    cards: list[ScoreCard] = []
    trace_paths: dict[str, str] = {}
    unreliable: list[str] = []
    for name, path in config.datasets:
        pairs = ds.load_dataset(path, name)
        if not pairs:
            raise ExperimentError(f"dataset {name} is empty")
        if config.sample_n:
            pairs = ds.sample(pairs, config.sample_n, config.sample_seed)
        trace_path = outdir / f"trace-{label}-{name}.jsonl"
        outcomes = _generate_dataset(config, pairs, shared_plan, provider, trace_path)
        trace_paths[name] = str(trace_path)

        failures = 0
        dataset_cards: list[ScoreCard] = []
        for pair, outcome in zip(pairs, outcomes):
            if outcome.failed:
                failures += 1
                continue
            answer = (
                render_structured(outcome.structured)
                if config.score_full_text
                else outcome.structured.long_form_answer
            )
            try:
                judgments = judge_all(answer, pair, entailment_provider)
                dataset_cards.append(
                    score_answer(answer, pair.reference_answer, judgments,
                                 dataset=name, pair_id=pair.id)
                )
            except Exception as exc:
                failures += 1
                log.warning("scoring failed for %s/%s: %s", name, pair.id, exc)
        if not dataset_cards:
            raise ExperimentError(f"dataset {name} fully failed")
        if failures / len(pairs) > config.failure_threshold:
            unreliable.append(name)
            log.warning("dataset %s exceeded the failure threshold (%d/%d)",
                        name, failures, len(pairs))
        cards.extend(dataset_cards)
        _write_scorecards(dataset_cards, outdir / f"scores-{label}-{name}.jsonl")

    per_dataset, overall = aggregate(cards)
    result = RunResult(
        config_digest=digest,
        per_dataset=per_dataset,
        overall=overall,
        trace_paths=trace_paths,
        unreliable_datasets=unreliable,
        duration_seconds=time.time() - started,
        label=label,
    )
    emit_report([result], outdir, formats=("markdown", "csv", "json"))
    return result


def _write_scorecards(cards: Sequence[ScoreCard], path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for card in cards:
            fh.write(
                json.dumps(
                    {
                        "dataset": card.dataset,
                        "id": card.pair_id,
                        "words_composition": card.words_composition,
                        "comprehensiveness": card.comprehensiveness,
                        "hallucination": card.hallucination,
                        "factuality": card.factuality,
                        "rouge1_f1": card.rouge.rouge1.f1 if card.rouge else None,
                        "rouge2_f1": card.rouge.rouge2.f1 if card.rouge else None,
                        "rougeL_f1": card.rouge.rougeL.f1 if card.rouge else None,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


# --- ablation suites ---------------------------------------------------------

SUITES = {
    "step_importance": [
        (f"remove_step_{k}", AblationSpec("remove_step", (k,))) for k in range(1, 8)
    ],
    "step_combinations": [
        ("retain_1_3_6", AblationSpec("retain_steps", (1, 3, 6))),
        ("retain_1_3", AblationSpec("retain_steps", (1, 3))),
        ("retain_2_4_5", AblationSpec("retain_steps", (2, 4, 5))),
    ],
    "step_order": [
        ("swap_3_6", AblationSpec("swap_steps", (3, 6))),
        ("swap_1_4", AblationSpec("swap_steps", (1, 4))),
        ("swap_5_7", AblationSpec("swap_steps", (5, 7))),
    ],
    "prompt_features": [
        ("no_one_shot", AblationSpec("disable_feature", ("one_shot_example",))),
        ("no_reinforcement", AblationSpec("disable_feature", ("instruction_reinforcement",))),
        ("no_markers", AblationSpec("disable_feature", ("specialized_markers",))),
        ("no_features", AblationSpec("disable_feature", ("all_features",))),
    ],
}


@dataclass(frozen=True)
class AblationRow:
    variant: str
    factuality: float
    delta: float
    delta_percent: float


def format_delta(baseline: float, variant: float) -> tuple[float, float]:
    """Delta in points and as a percent of baseline, display-rounded."""
    delta = baseline - variant
    percent = delta / baseline * 100.0 if baseline else 0.0
    return display_round(delta), display_round(percent)


def ablation_suite(
    base: RunConfig,
    suite: str,
    provider: CompletionProvider,
    entailment_provider: EntailmentProvider,
) -> list[AblationRow]:
    """Run the baseline plus each variant of one suite, with deltas."""
    if base.method != "med_socot":
        raise ExperimentError("ablation suites require the med_socot method")
    if suite not in SUITES:
        raise ExperimentError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")

    baseline_result = run(base, provider, entailment_provider, label="baseline")
    baseline_fact = baseline_result.overall.factuality
    rows = [AblationRow("baseline", baseline_fact, 0.0, 0.0)]
    for variant_name, spec in SUITES[suite]:
        variant_config = replace(base, ablation=spec)
        result = run(variant_config, provider, entailment_provider, label=variant_name)
        delta, percent = format_delta(baseline_fact, result.overall.factuality)
        rows.append(AblationRow(variant_name, result.overall.factuality, delta, percent))
    return rows


# --- report emission ---------------------------------------------------------

_REPORT_FIELDS = ("words_composition", "factuality")


def _report_payload(results: Sequence[RunResult]) -> list[dict]:
    payload = []
    for result in results:
        entry = {
            "label": result.label,
            "config_digest": result.config_digest,
            "unreliable_datasets": result.unreliable_datasets,
            "datasets": {},
            "average": {
                "words_composition": result.overall.words_composition,
                "factuality": result.overall.factuality,
            },
        }
        for name in sorted(result.per_dataset):
            card = result.per_dataset[name]
            entry["datasets"][name] = {
                "words_composition": card.words_composition,
                "factuality": card.factuality,
            }
        payload.append(entry)
    return payload


def render_markdown_report(results: Sequence[RunResult]) -> str:
    if not results:
        raise ExperimentError("no results to report")
    names = sorted(results[0].per_dataset)
    header = ["Method"]
    for name in names + ["Average"]:
        header += [f"{name} Words", f"{name} Fact."]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
    ]
    for result in results:
        row = [result.label]
        for name in names:
            card = result.per_dataset[name]
            row += [f"{display_round(card.words_composition):.1f}",
                    f"{display_round(card.factuality):.1f}"]
        row += [f"{display_round(result.overall.words_composition):.1f}",
                f"{display_round(result.overall.factuality):.1f}"]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def render_csv_report(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "dataset", "words_composition", "factuality"])
    for result in results:
        for name in sorted(result.per_dataset):
            card = result.per_dataset[name]
            writer.writerow([result.label, name,
                             f"{display_round(card.words_composition):.1f}",
                             f"{display_round(card.factuality):.1f}"])
        writer.writerow([result.label, "average",
                         f"{display_round(result.overall.words_composition):.1f}",
                         f"{display_round(result.overall.factuality):.1f}"])
    return buf.getvalue()


def emit_report(
    results: Sequence[RunResult],
    outdir: str | Path,
    formats: Sequence[str] = ("markdown", "csv", "json"),
) -> dict[str, Path]:
    if not results:
        raise ExperimentError("no results to report")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    if "markdown" in formats:
        path = outdir / "report.md"
        path.write_text(render_markdown_report(results), encoding="utf-8")
        written["markdown"] = path
    if "csv" in formats:
        path = outdir / "report.csv"
        path.write_text(render_csv_report(results), encoding="utf-8")
        written["csv"] = path
    if "json" in formats:
        path = outdir / "report.json"
        path.write_text(
            json.dumps(_report_payload(results), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        written["json"] = path
    return written


def render_ablation_table(rows: Sequence[AblationRow]) -> str:
    lines = [
        "| Variant | Factuality | Δ | Δ% |",
        "|---|---|---|---|",
    ]
    for row in rows:
        if row.variant == "baseline":
            lines.append(f"| baseline | {display_round(row.factuality):.1f} | - | - |")
        else:
            lines.append(
                f"| {row.variant} | {display_round(row.factuality):.1f} "
                f"| ↓ {row.delta:.1f} | {row.delta_percent:.1f}% |"
            )
    return "\n".join(lines) + "\n"
