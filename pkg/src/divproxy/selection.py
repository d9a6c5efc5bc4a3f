"""Diversity-based prompt selection and the prompt-count sweep.

Every candidate prompt is sampled m times per question; the answer returned
is the majority answer of the prompt whose batch shows the lowest diversity
under the chosen criterion. The sweep replays the same batches for growing
prompt-list prefixes, so per-question sampling cost is paid once.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence

from .answers import GroundTruth, TaskType, grade
from .errors import ProviderError, UsageError
from .measures import Answer, DiversityReport, diversity_report
from .prompts import PromptSpec
from .providers import Provider, Question, SamplingConfig, sample

CRITERIA = ("entropy", "gini", "centroid")


def _criterion_value(report: DiversityReport, criterion: str) -> float:
    if criterion == "entropy":
        return report.entropy
    if criterion == "gini":
        return report.gini
    if criterion == "centroid":
        if report.centroid_distance is None:
            raise UsageError("centroid criterion requires an embedder")
        return report.centroid_distance
    raise UsageError(f"unknown criterion {criterion!r}, expected one of {CRITERIA}")


@dataclass(frozen=True)
class SelectionResult:
    chosen_prompt_id: str
    chosen_answer: Answer
    per_prompt: tuple[tuple[str, DiversityReport], ...]
    criterion: str


def _reports_for_question(
    prompts: Sequence[PromptSpec],
    question: Question,
    provider: Provider,
    cfg: SamplingConfig,
    task: TaskType,
    embedder,
) -> list[tuple[str, DiversityReport]]:
    per_prompt = []
    for prompt in prompts:
        try:
            batch = sample(provider, prompt, question, cfg, task)
        except ProviderError as exc:
            raise type(exc)(f"prompt {prompt.id}: {exc}") from exc
        per_prompt.append((prompt.id, diversity_report(batch, embedder=embedder)))
    return per_prompt


def _choose(per_prompt: Sequence[tuple[str, DiversityReport]], criterion: str) -> int:
    values = [_criterion_value(report, criterion) for _, report in per_prompt]
    best = min(range(len(values)), key=lambda i: (values[i], i))
    # By construction the chosen value is <= every other; keep the guarantee hot.
    assert all(values[best] <= v for v in values)
    return best


def select_prompt(
    prompts: Sequence[PromptSpec],
    question: Question,
    provider: Provider,
    cfg: SamplingConfig,
    criterion: str = "entropy",
    embedder=None,
    task: TaskType | None = None,
) -> SelectionResult:
    """Sample every prompt and return the majority answer of the one with the
    lowest diversity; ties break toward the lowest prompt index."""
    if not prompts:
        raise UsageError("need at least one prompt")
    if task is None:
        raise UsageError("task is required to normalize responses")
    if criterion == "centroid" and embedder is None:
        raise UsageError("centroid criterion requires an embedder")
    per_prompt = _reports_for_question(prompts, question, provider, cfg, task, embedder)
    best = _choose(per_prompt, criterion)
    return SelectionResult(
        chosen_prompt_id=per_prompt[best][0],
        chosen_answer=per_prompt[best][1].majority_answer,
        per_prompt=tuple(per_prompt),
        criterion=criterion,
    )


@dataclass(frozen=True)
class SweepReport:
    """Failure probabilities for selection over growing prompt prefixes."""

    criterion: str
    prompt_ids: tuple[str, ...]
    per_prompt_failure: tuple[float, ...]
    mean_prompt_failure: float
    prefix_failure: tuple[float, ...]  # prefix_failure[n-1] = selection over first n prompts
    n_questions: int

    @property
    def selection_failure(self) -> float:
        return self.prefix_failure[-1]

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "prompt_ids": list(self.prompt_ids),
            "per_prompt_failure": list(self.per_prompt_failure),
            "mean_prompt_failure": self.mean_prompt_failure,
            "prefix_failure": list(self.prefix_failure),
            "selection_failure": self.selection_failure,
            "n_questions": self.n_questions,
        }


def selection_sweep(
    prompts: Sequence[PromptSpec],
    questions: Sequence[tuple[Question, GroundTruth, TaskType]],
    provider: Provider,
    cfg: SamplingConfig,
    criterion: str = "entropy",
    embedder=None,
) -> SweepReport:
    """Per-prompt failures, the mean (an oracle average), and the failure of
    minimum-diversity selection restricted to each prefix of the prompt list."""
    if not prompts:
        raise UsageError("need at least one prompt")
    if not questions:
        raise UsageError("need at least one question")
    if criterion == "centroid" and embedder is None:
        raise UsageError("centroid criterion requires an embedder")

    n = len(prompts)
    prompt_failures = [0] * n
    prefix_failures = [0] * n
    for question, truth, task in questions:
        per_prompt = _reports_for_question(prompts, question, provider, cfg, task, embedder)
        correct = [grade(report.majority_answer, truth, task) for _, report in per_prompt]
        for i, ok in enumerate(correct):
            prompt_failures[i] += 0 if ok else 1
        for size in range(1, n + 1):
            best = _choose(per_prompt[:size], criterion)
            prefix_failures[size - 1] += 0 if correct[best] else 1

    q = len(questions)
    per_prompt_failure = tuple(f / q for f in prompt_failures)
    return SweepReport(
        criterion=criterion,
        prompt_ids=tuple(p.id for p in prompts),
        per_prompt_failure=per_prompt_failure,
        mean_prompt_failure=sum(per_prompt_failure) / n,
        prefix_failure=tuple(f / q for f in prefix_failures),
        n_questions=q,
    )


def write_sweep_json(report: SweepReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_sweep_csv(report: SweepReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_prompts", "prefix_failure", "prompt_id", "prompt_failure", "mean_prompt_failure"])
        for i in range(len(report.prompt_ids)):
            writer.writerow(
                [
                    i + 1,
                    repr(report.prefix_failure[i]),
                    report.prompt_ids[i],
                    repr(report.per_prompt_failure[i]),
                    repr(report.mean_prompt_failure),
                ]
            )
