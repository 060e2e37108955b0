"""Structured medical reasoning harness.

Builds seven-stage structured prompts for long-form medical QA, drives a
text-generation provider in direct or stepwise mode, parses the structured
output, and scores answers with lexical-overlap and statement-level
factuality metrics, including ablation suites over steps and prompt
features.
"""

from .dataset import DatasetStats, QAPair, compute_stats, load_dataset, sample
from .entailment import (
    EntailmentJudgment,
    EntailmentLabel,
    HttpEntailmentProvider,
    MockEntailmentProvider,
    judge_all,
)
from .generation import (
    GenerationOutcome,
    StepOutput,
    generate,
    generate_direct,
    generate_stepwise,
    quality_check,
)
from .llm import (
    CachingProvider,
    CannedStructuredProvider,
    CompletionParams,
    HttpChatProvider,
    MockProvider,
    ProviderConfig,
    ResponseCache,
    cached_complete,
)
from .metrics import (
    RougeScores,
    ScoreCard,
    aggregate,
    comprehensiveness_score,
    factuality_score,
    hallucination_score,
    rouge_l,
    rouge_n,
    rouge_scores,
    tokenize_for_rouge,
    words_composition,
)
from .parsing import (
    StructuredResponse,
    count_tokens_approx,
    count_words,
    parse_structured,
    render_structured,
)
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

__version__ = "0.1.0"
