"""Question typing by the first two words of the question."""

from __future__ import annotations

import string
from collections import Counter
from enum import Enum
from typing import Iterable


class QuestionType(str, Enum):
    READING = "Reading"
    OBJECT_ATTRIBUTES = "ObjectAttributes"
    EXISTENCE = "Existence"
    CATEGORIZATION = "Categorization"
    LOCALIZATION = "Localization"
    COUNTING = "Counting"
    OTHER = "Other"


_PREFIX_GROUPS: dict[QuestionType, tuple[str, ...]] = {
    QuestionType.READING: ("what letter", "what brand"),
    QuestionType.OBJECT_ATTRIBUTES: (
        "what pattern",
        "what color",
        "what breed",
        "what colors",
        "what style",
        "what material",
        "what shape",
    ),
    QuestionType.EXISTENCE: (
        "is anyone",
        "is there",
        "are there",
        "is that",
        "are all",
        "is everyone",
        "is one",
        "is she",
        "is he",
    ),
    QuestionType.CATEGORIZATION: (
        "what street",
        "what direction",
        "what animal",
        "what fruit",
        "what vegetable",
        "what food",
        "what game",
        "what sport",
    ),
    QuestionType.LOCALIZATION: ("where is", "where are", "where was"),
    QuestionType.COUNTING: ("how many", "how much"),
}

PREFIX_TABLE: dict[str, QuestionType] = {
    prefix: qtype for qtype, prefixes in _PREFIX_GROUPS.items() for prefix in prefixes
}


def first_two_words(question: str) -> str:
    """Lowercased first two whitespace tokens, edge punctuation stripped.

    Stripping only token edges keeps contractions intact ("what's" stays
    "what's") while "how many?" still reads as "how many".
    """
    tokens = question.lower().split()[:2]
    tokens = [t.strip(string.punctuation) for t in tokens]
    return " ".join(t for t in tokens if t)


def classify_question_type(question: str) -> QuestionType:
    """Total classification: unknown prefixes land in ``Other``."""
    return PREFIX_TABLE.get(first_two_words(question), QuestionType.OTHER)


def count_question_types(questions: Iterable[str]) -> Counter:
    counts: Counter = Counter({qtype: 0 for qtype in QuestionType})
    for question in questions:
        counts[classify_question_type(question)] += 1
    return counts
