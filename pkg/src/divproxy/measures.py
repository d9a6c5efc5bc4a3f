"""Set-based diversity measures over repeated LLM answers.

An answer is viewed as a set of canonical string elements. Element
probabilities are occurrence fractions across the batch; entropy and Gini
impurity are computed directly from those fractions, and the batch's final
answer comes from a majority vote with deterministic tie-breaking.

All functions here are pure: no shared state, safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import UsageError

# Sentinel element recorded when no answer could be extracted from a raw
# response. It participates in voting and diversity like any other element so
# unparseable responses raise measured diversity instead of vanishing.
NO_ANSWER = "<no-answer>"

LOG_BASES = ("nat", "bit")


@dataclass(frozen=True)
class Answer:
    """One normalized answer: a set of canonical elements plus the raw text."""

    elements: frozenset[str]
    raw_text: str = ""
    reasoning_text: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.elements, frozenset):
            object.__setattr__(self, "elements", frozenset(self.elements))
        if not self.elements:
            raise UsageError("an answer must contain at least one element")

    @property
    def is_no_answer(self) -> bool:
        return self.elements == frozenset({NO_ANSWER})

    @property
    def canonical_text(self) -> str:
        """Stable text rendering: sorted elements joined by ', '."""
        return ", ".join(sorted(self.elements))


def answer_of(*elements: str, raw_text: str = "", reasoning_text: str | None = None) -> Answer:
    """Convenience constructor used heavily in tests and the simulator."""
    return Answer(frozenset(elements), raw_text=raw_text, reasoning_text=reasoning_text)


@dataclass(frozen=True)
class SampleBatch:
    """The m answers produced for one (prompt, question) pair at one temperature.

    Order equals provider return order and is used for deterministic
    tie-breaking in the majority vote.
    """

    samples: tuple[Answer, ...]
    prompt_id: str = ""
    question_id: str = ""
    temperature: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) < 1:
            raise UsageError("a sample batch must contain at least one answer")
        if not 0.0 <= self.temperature <= 2.0:
            raise UsageError(f"temperature {self.temperature} outside [0, 2]")

    @property
    def m(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class DiversityReport:
    """Bundle of the three diversity measures plus the majority-vote result."""

    entropy: float
    gini: float
    centroid_distance: Optional[float]
    majority_answer: Answer
    majority_share: float
    log_base: str = "nat"

    def measure_values(self) -> dict[str, float]:
        """Name -> value map of the measures present in this report."""
        values = {"entropy": self.entropy, "gini": self.gini}
        if self.centroid_distance is not None:
            values["centroid_distance"] = self.centroid_distance
        return values


def element_distribution(batch: SampleBatch) -> dict[str, float]:
    """Per-element occurrence probability: P(e) = |{i : e in a_i}| / m.

    Values are k/m for integer k >= 1 and need not sum to 1 when answers
    contain more than one element. Elements that never occur are absent.
    """
    if batch.m < 1:
        raise UsageError("empty batch")
    counts: dict[str, int] = {}
    for answer in batch.samples:
        for element in answer.elements:
            counts[element] = counts.get(element, 0) + 1
    m = batch.m
    return {element: count / m for element, count in counts.items()}


def entropy(dist: dict[str, float], log_base: str = "nat") -> float:
    """Shannon entropy -sum P(e) log P(e) over the observed elements.

    P(e) = 1 terms contribute 0; absent (zero-probability) elements are
    excluded, which equals their limit contribution.
    """
    if log_base not in LOG_BASES:
        raise UsageError(f"unknown log base {log_base!r}, expected one of {LOG_BASES}")
    log = math.log if log_base == "nat" else math.log2
    total = 0.0
    for p in dist.values():
        if p > 0.0:
            total -= p * log(p)
    # -0.0 can appear when every term is a certainty; normalize it away.
    return total + 0.0


def gini(dist: dict[str, float], normalized: bool = False) -> float:
    """Gini impurity 1 - sum P(e)^2.

    The literal formula can go negative when answers hold multiple elements
    (sum of P(e)^2 may exceed 1). ``normalized=True`` divides each P(e) by
    sum P(e') first, restoring the usual [0, 1 - 1/k] range.
    """
    probs = list(dist.values())
    if normalized:
        total = sum(probs)
        if total <= 0.0:
            raise UsageError("cannot normalize an all-zero distribution")
        probs = [p / total for p in probs]
    return 1.0 - sum(p * p for p in probs)


def majority_vote(batch: SampleBatch) -> tuple[Answer, float]:
    """Most frequent answer under element-set equality, with its share.

    Ties break toward the answer whose first occurrence comes earliest in
    batch order, which keeps results stable under record/replay.
    """
    if batch.m < 1:
        raise UsageError("empty batch")
    counts: dict[frozenset[str], int] = {}
    first_index: dict[frozenset[str], int] = {}
    for i, answer in enumerate(batch.samples):
        key = answer.elements
        counts[key] = counts.get(key, 0) + 1
        first_index.setdefault(key, i)
    best_key = min(counts, key=lambda k: (-counts[k], first_index[k]))
    winner = batch.samples[first_index[best_key]]
    return winner, counts[best_key] / batch.m


def diversity_report(
    batch: SampleBatch,
    embedder=None,
    metric: str = "euclidean",
    embed_target: str = "answer_only",
    log_base: str = "nat",
    normalized_gini: bool = False,
) -> DiversityReport:
    """Compute entropy, Gini, and (when an embedder is given) centroid distance.

    Embedder failures propagate unchanged.
    """
    dist = element_distribution(batch)
    centroid_distance = None
    if embedder is not None:
        # Imported here so the set-based path has no dependency on embedding.
        from .embedding import embed_batch, mean_centroid_distance

        vectors = embed_batch(embedder, batch, target=embed_target)
        centroid_distance = mean_centroid_distance(vectors, metric=metric)
    winner, share = majority_vote(batch)
    return DiversityReport(
        entropy=entropy(dist, log_base=log_base),
        gini=gini(dist, normalized=normalized_gini),
        centroid_distance=centroid_distance,
        majority_answer=winner,
        majority_share=share,
        log_base=log_base,
    )
