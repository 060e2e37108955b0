"""Command-line interface.

Subcommands: stats, render-prompt, parse, generate, evaluate, run, ablate.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset as ds
from . import experiment
from .entailment import HttpEntailmentProvider, MockEntailmentProvider, judge_all
from .generation import generate, read_trace, write_trace
from .llm import (
    CachingProvider,
    CannedStructuredProvider,
    CompletionParams,
    HttpChatProvider,
    MockProvider,
    ProviderConfig,
    ResponseCache,
)
from .metrics import aggregate, display_round, score_answer
from .parsing import parse_structured
from .prompts import (
    BaselineKind,
    Mode,
    PromptFeatures,
    StepSet,
    build_baseline_plan,
    build_med_socot_plan,
)


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--provider", choices=["http", "mock", "canned"], default="canned")
    parser.add_argument("--model", default="canned")
    parser.add_argument("--endpoint", default="http://localhost:8000/v1/chat/completions")
    parser.add_argument("--cache-dir", default=None)
    parser.add_argument("--credential-env", default="STRUCTMED_API_KEY",
                        help="env var holding the bearer token for --provider http")
    parser.add_argument("--fixtures", default=None,
                        help="JSON file of fixture-key -> response for --provider mock")


def _build_provider(args):
    if args.provider == "http":
        provider = HttpChatProvider(ProviderConfig(
            endpoint=args.endpoint, model=args.model,
            credential_env=args.credential_env,
        ))
    elif args.provider == "mock":
        fixtures = {}
        if args.fixtures:
            fixtures = json.loads(Path(args.fixtures).read_text(encoding="utf-8"))
        provider = MockProvider(fixtures, model_id=args.model)
    else:
        provider = CannedStructuredProvider(model_id=args.model)
    if args.cache_dir:
        provider = CachingProvider(provider, ResponseCache(args.cache_dir))
    return provider


def _add_nli_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--nli-endpoint", default=None)
    group.add_argument("--nli-mock", action="store_true", default=True)


def _build_entailment(args):
    if getattr(args, "nli_endpoint", None):
        return HttpEntailmentProvider(args.nli_endpoint)
    return MockEntailmentProvider()


def _features_from_args(args) -> PromptFeatures:
    return PromptFeatures(
        one_shot_example=not args.no_one_shot,
        instruction_reinforcement=not args.no_reinforcement,
        specialized_markers=not args.no_markers,
        step_word_limit=args.step_word_limit,
    )


def _add_feature_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--no-one-shot", action="store_true")
    parser.add_argument("--no-reinforcement", action="store_true")
    parser.add_argument("--no-markers", action="store_true")
    parser.add_argument("--step-word-limit", type=int, default=200)


def cmd_stats(args) -> int:
    rows = []
    for spec in args.datasets:
        name, _, path = spec.rpartition("=")
        if not name:
            name = Path(path).stem
        pairs = ds.load_dataset(path, name)
        stats = ds.compute_stats(pairs)
        rows.append((name, stats))
    header = ["Dataset", "# of QA pairs", "Avg. Length of Answers",
              "Avg. # of MH statements", "Avg. # of NH Statements"]
    if args.csv:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        for name, s in rows:
            writer.writerow([name, s.qa_pair_count, f"{s.avg_answer_length_words:.1f}",
                             f"{s.avg_mh_count:.1f}", f"{s.avg_nh_count:.1f}"])
    else:
        print("\t".join(header))
        for name, s in rows:
            print(f"{name}\t{s.qa_pair_count}\t{s.avg_answer_length_words:.1f}"
                  f"\t{s.avg_mh_count:.1f}\t{s.avg_nh_count:.1f}")
    return 0


def cmd_render_prompt(args) -> int:
    features = _features_from_args(args)
    mode = Mode(args.mode)
    if args.method in ("zero_shot", "plain_cot"):
        plan = build_baseline_plan(BaselineKind(args.method), args.question)
        print(plan.direct_template)
        return 0
    step_set = StepSet(args.steps.split(",")) if args.steps else (
        StepSet.reasoning_only() if mode == Mode.STEPWISE else StepSet.full()
    )
    plan = build_med_socot_plan(step_set, features, mode)
    if mode == Mode.DIRECT:
        print(plan.render_direct(args.question))
    else:
        for name, template in plan.step_templates:
            print(f"===== step: {name} =====")
            print(template)
        print("===== summary =====")
        print(plan.summary_template)
    return 0


def cmd_parse(args) -> int:
    raw = Path(args.input).read_text(encoding="utf-8") if args.input else sys.stdin.read()
    resp = parse_structured(raw, markers_enabled=not args.no_markers)
    print(json.dumps(
        {
            "sections": resp.sections,
            "long_form_answer": resp.long_form_answer,
            "diagnostics": resp.diagnostics,
        },
        indent=2,
        ensure_ascii=False,
    ))
    return 0


def cmd_generate(args) -> int:
    pairs = ds.load_dataset(args.dataset, args.name or Path(args.dataset).stem)
    if args.sample:
        pairs = ds.sample(pairs, args.sample, args.seed)
    provider = _build_provider(args)
    mode = Mode(args.mode)
    features = _features_from_args(args)
    step_set = StepSet.reasoning_only() if mode == Mode.STEPWISE else StepSet.full()
    plan = build_med_socot_plan(step_set, features, mode)
    params = CompletionParams(
        max_new_tokens=features.final_answer_token_limit
        if mode == Mode.STEPWISE else features.stage1_token_limit,
    )
    out_path = Path(args.out)
    done = {}
    if args.resume and out_path.exists():
        done = {o.question_id: o for o in read_trace(out_path)}
    outcomes = []
    for pair in pairs:
        if pair.id in done:
            outcomes.append(done[pair.id])
            continue
        outcomes.append(generate(pair, plan, provider, params))
    write_trace(outcomes, out_path)
    print(f"wrote {len(outcomes)} outcomes to {out_path}")
    return 0


def cmd_evaluate(args) -> int:
    name = args.name or Path(args.dataset).stem
    pairs = {p.id: p for p in ds.load_dataset(args.dataset, name)}
    outcomes = read_trace(args.trace)
    entailment = _build_entailment(args)
    cards = []
    out_path = Path(args.out)
    with out_path.open("w", encoding="utf-8") as fh:
        for outcome in outcomes:
            pair = pairs.get(outcome.question_id)
            if pair is None or outcome.failed:
                continue
            answer = outcome.structured.long_form_answer
            judgments = judge_all(answer, pair, entailment)
            card = score_answer(answer, pair.reference_answer, judgments,
                                dataset=name, pair_id=pair.id)
            cards.append(card)
            fh.write(json.dumps(
                {
                    "id": card.pair_id,
                    "words_composition": card.words_composition,
                    "comprehensiveness": card.comprehensiveness,
                    "hallucination": card.hallucination,
                    "factuality": card.factuality,
                },
                sort_keys=True,
            ) + "\n")
    per_dataset, overall = aggregate(cards)
    for ds_name, card in sorted(per_dataset.items()):
        print(f"{ds_name}: words={display_round(card.words_composition):.1f} "
              f"factuality={display_round(card.factuality):.1f}")
    print(f"overall: words={display_round(overall.words_composition):.1f} "
          f"factuality={display_round(overall.factuality):.1f}")
    return 0


def _config_from_file(path: str) -> experiment.RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"cannot read run config {path}: {exc}")
    try:
        return experiment.RunConfig.from_json(raw)
    except (KeyError, TypeError, ValueError, experiment.ExperimentError) as exc:
        raise SystemExit(f"invalid run config {path}: {exc}")


def cmd_run(args) -> int:
    config = _config_from_file(args.config)
    provider = _build_provider(args)
    entailment = _build_entailment(args)
    result = experiment.run(config, provider, entailment)
    print(f"run {result.config_digest} finished in {result.duration_seconds:.1f}s")
    print(experiment.render_markdown_report([result]))
    return 0


def cmd_ablate(args) -> int:
    config = _config_from_file(args.config)
    provider = _build_provider(args)
    entailment = _build_entailment(args)
    rows = experiment.ablation_suite(config, args.suite, provider, entailment)
    print(experiment.render_ablation_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structmed",
        description="Structured medical reasoning generation and evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="summarize JSONL datasets")
    p.add_argument("datasets", nargs="+", help="dataset files, optionally name=path")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("render-prompt", help="inspect a rendered prompt")
    p.add_argument("--question", required=True)
    p.add_argument("--method", choices=["med_socot", "zero_shot", "plain_cot"],
                   default="med_socot")
    p.add_argument("--mode", choices=["direct", "stepwise"], default="direct")
    p.add_argument("--steps", default=None, help="comma-separated step names")
    _add_feature_flags(p)
    p.set_defaults(func=cmd_render_prompt)

    p = sub.add_parser("parse", help="parse raw model text to JSON")
    p.add_argument("--input", default=None, help="file path; default stdin")
    p.add_argument("--no-markers", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("generate", help="generate answers for one dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--name", default=None)
    p.add_argument("--mode", choices=["direct", "stepwise"], default="direct")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_feature_flags(p)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a generation trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--name", default=None)
    p.add_argument("--out", required=True)
    _add_nli_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full run from a JSON config")
    p.add_argument("--config", required=True)
    _add_provider_flags(p)
    _add_nli_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="ablation suite from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--suite", required=True,
                   choices=sorted(experiment.SUITES))
    _add_provider_flags(p)
    _add_nli_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
