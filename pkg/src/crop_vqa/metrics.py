"""Answer normalization, the consensus accuracy metric, and aggregate statistics.

The default accuracy of an answer is ``min(0.3 * n, 1)`` where ``n`` counts
how many of the (up to ten) human annotations match the normalized answer.
An ``official-subsets`` variant averages the same count over the ten
leave-one-annotator-out subsets, which is how the reference VQA evaluator
computes it; reports always name which variant produced their numbers.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Mapping, Sequence

from .datasets.question_types import QuestionType

METRIC_VARIANTS = ("simple", "official-subsets")
_VARIANT_ALIASES = {"paper": "simple"}

_ARTICLES = {"a", "an", "the"}
# Periods/commas survive only between digits ("2,000", "3.5"); every other
# punctuation character is dropped outright.
_PUNCT_TO_DROP = set(string.punctuation)


class MetricError(ValueError):
    """Inputs violate the metric's preconditions."""


def normalize_metric_variant(name: str) -> str:
    variant = _VARIANT_ALIASES.get(name, name)
    if variant not in METRIC_VARIANTS:
        raise MetricError(f"metric variant must be one of {METRIC_VARIANTS}, got {name!r}")
    return variant


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation (keeping intra-numeric ./,), drop articles."""
    text = text.strip().lower()
    kept = []
    for i, ch in enumerate(text):
        if ch in _PUNCT_TO_DROP:
            if ch in ".," and 0 < i < len(text) - 1 and text[i - 1].isdigit() and text[i + 1].isdigit():
                kept.append(ch)
            continue
        kept.append(ch)
    words = "".join(kept).split()
    return " ".join(w for w in words if w not in _ARTICLES)


def _match_count(model_answer: str, annotations: Sequence[str]) -> int:
    target = normalize_answer(model_answer)
    return sum(1 for a in annotations if normalize_answer(a) == target)


def vqa_accuracy(model_answer: str, annotations: Sequence[str]) -> float:
    """``min(0.3 * n, 1)`` over normalized annotation matches.

    Computed as ``min(3n, 10) / 10`` so the result is exactly one of
    0, 0.3, 0.6, 0.9, 1.0.
    """
    if not annotations:
        raise MetricError("annotations must be non-empty")
    n = _match_count(model_answer, annotations)
    return min(3 * n, 10) / 10.0


def vqa_accuracy_official_subsets(model_answer: str, annotations: Sequence[str]) -> float:
    """Average of min(m/3, 1) over the leave-one-annotator-out subsets."""
    if not annotations:
        raise MetricError("annotations must be non-empty")
    target = normalize_answer(model_answer)
    matches = [normalize_answer(a) == target for a in annotations]
    total = sum(matches)
    subtotal = 0.0
    for held_out in matches:
        m = total - (1 if held_out else 0)
        subtotal += min(m / 3.0, 1.0)
    return subtotal / len(annotations)


def accuracy_fn(variant: str):
    variant = normalize_metric_variant(variant)
    return vqa_accuracy if variant == "simple" else vqa_accuracy_official_subsets


def relative_decline(acc_large: float, acc_small: float) -> float:
    """Fractional accuracy drop from the large-detail group to the small one."""
    if acc_large <= 0:
        raise MetricError(f"acc_large must be positive, got {acc_large!r}")
    return (acc_large - acc_small) / acc_large


@dataclass(frozen=True)
class AccuracyResult:
    """Per-question accuracies plus their mean and error bookkeeping."""

    per_question: dict[str, float]
    mean: float
    n_evaluated: int
    n_errored: int

    @classmethod
    def from_per_question(
        cls, per_question: Mapping[str, float], n_errored: int = 0
    ) -> "AccuracyResult":
        values = dict(per_question)
        return cls(
            per_question=values,
            mean=mean_accuracy(values.values()),
            n_evaluated=len(values),
            n_errored=n_errored,
        )


def mean_accuracy(values) -> float:
    # fsum makes the mean independent of summation (hence question) order.
    values = list(values)
    if not values:
        return 0.0
    return math.fsum(values) / len(values)


def accuracy_gain_by_type(
    baseline: AccuracyResult,
    treated: AccuracyResult,
    typing: Mapping[str, QuestionType],
) -> dict[QuestionType, float]:
    """Per-question-type mean(treated) - mean(baseline) over shared questions."""
    if set(baseline.per_question) != set(treated.per_question):
        raise MetricError("baseline and treated runs cover different question ids")
    buckets: dict[QuestionType, tuple[list[float], list[float]]] = {}
    for qid, base_acc in baseline.per_question.items():
        qtype = typing.get(qid)
        if qtype is None:
            raise MetricError(f"no question type for id {qid!r}")
        base_list, treat_list = buckets.setdefault(qtype, ([], []))
        base_list.append(base_acc)
        treat_list.append(treated.per_question[qid])
    return {
        qtype: mean_accuracy(treat_list) - mean_accuracy(base_list)
        for qtype, (base_list, treat_list) in buckets.items()
    }
