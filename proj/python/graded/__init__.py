"""Difficulty grading of French reading material.

The heavy lifting lives in the compiled ``_graded`` extension; this package
re-exports it.
"""

from ._graded import (
    GradedError,
    Model,
    accuracy,
    adjacency_mass,
    baseline_accuracy,
    confusion_matrix,
    count_syllables,
    difficulty_score,
    hash_embed,
    keyword_topics,
    pairwise_mismatches,
    readability,
    score_mismatches,
    segment_sentences,
    text_stats,
    tokenize,
    update_level,
    word_count,
)

CEFR = ("A1", "A2", "B1", "B2", "C1", "C2")

__version__ = "0.3.0"

__all__ = [
    "CEFR",
    "GradedError",
    "Model",
    "accuracy",
    "adjacency_mass",
    "baseline_accuracy",
    "confusion_matrix",
    "count_syllables",
    "difficulty_score",
    "hash_embed",
    "keyword_topics",
    "pairwise_mismatches",
    "readability",
    "score_mismatches",
    "segment_sentences",
    "text_stats",
    "tokenize",
    "update_level",
    "word_count",
]
