"""Normalize raw completions into canonical answers, and grade them.

Extraction scans for the last occurrence of an answer cue ("answer is" /
"answer:"), falling back to the last nonempty line; the cue-based span is
then parsed per task type. Responses with no extractable answer map to the
NO_ANSWER sentinel so they still count toward diversity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .errors import UsageError
from .measures import NO_ANSWER, Answer

TASK_KINDS = ("multiple_choice", "numeric", "text_concat")

ANSWER_CUES = ("answer is", "answer:")

_NUMBER_RE = re.compile(r"-?\d[\d,]*(?:\.\d+)?(?:[eE][-+]?\d+)?")
_REFUSAL_RE = re.compile(
    r"\b(?:no answer|cannot answer|can't answer|unable to answer|don't know|do not know)\b",
    re.IGNORECASE,
)

NUMERIC_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TaskType:
    """Kind of expected answer, with the option roster for multiple choice."""

    kind: str
    options: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise UsageError(f"unknown task kind {self.kind!r}, expected one of {TASK_KINDS}")
        object.__setattr__(self, "options", tuple((str(l), str(t)) for l, t in self.options))
        if self.kind == "multiple_choice":
            labels = [label for label, _ in self.options]
            if len(labels) < 2:
                raise UsageError("multiple_choice needs at least 2 options")
            if len(set(labels)) != len(labels):
                raise UsageError("multiple_choice option labels must be distinct")
        elif self.options:
            raise UsageError(f"{self.kind} task takes no options")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.options)


def multiple_choice(options) -> TaskType:
    return TaskType("multiple_choice", tuple(options))


def numeric_task() -> TaskType:
    return TaskType("numeric")


def text_concat_task() -> TaskType:
    return TaskType("text_concat")


@dataclass(frozen=True)
class GroundTruth:
    """Reference answer, optionally with a worked explanation for CoT prompts."""

    answer: Answer
    explanation: Optional[str] = None


def canonical_number(value: float) -> str:
    """Canonical decimal rendering: integral values lose the '.0' tail."""
    value = float(value)
    if value == 0.0:
        return "0"
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _answer_span(raw: str) -> tuple[str, str]:
    """(span, preceding text): span follows the last answer cue, else it is
    the last nonempty line."""
    lowered = raw.lower()
    best = -1
    best_cue = ""
    for cue in ANSWER_CUES:
        idx = lowered.rfind(cue)
        if idx > best:
            best = idx
            best_cue = cue
    if best >= 0:
        return raw[best + len(best_cue) :].strip(), raw[:best].strip()
    lines = [line.strip() for line in raw.splitlines() if line.strip()]
    if not lines:
        return "", ""
    return lines[-1], "\n".join(lines[:-1])


def _match_choice(span: str, task: TaskType) -> Optional[str]:
    # Parenthesized label wins, then a standalone label token, then the
    # option's full text.
    for label, _ in task.options:
        if re.search(r"\(\s*" + re.escape(label) + r"\s*\)", span, re.IGNORECASE):
            return label
    for label, _ in task.options:
        if re.search(r"(?<![A-Za-z0-9])" + re.escape(label) + r"(?![A-Za-z0-9])", span):
            return label
    span_lower = span.lower()
    for label, text in task.options:
        if text and text.lower() in span_lower:
            return label
    return None


def normalize(raw: str, task: TaskType) -> Answer:
    """Turn a raw completion into a canonical Answer for the given task."""
    if not raw:
        raise UsageError("cannot normalize an empty response")
    span, prefix = _answer_span(raw)
    reasoning = prefix or None

    elements: frozenset[str]
    if not span or _REFUSAL_RE.search(span):
        elements = frozenset({NO_ANSWER})
    elif task.kind == "multiple_choice":
        label = _match_choice(span, task)
        elements = frozenset({label}) if label else frozenset({NO_ANSWER})
    elif task.kind == "numeric":
        tokens = _NUMBER_RE.findall(span)
        values = set()
        for token in tokens:
            try:
                values.add(canonical_number(float(token.replace(",", ""))))
            except ValueError:
                continue
        elements = frozenset(values) if values else frozenset({NO_ANSWER})
    else:  # text_concat
        token = span.split()[-1] if span.split() else ""
        token = token.strip("\"'`.,;:!?()[]{}").lower()
        elements = frozenset({token}) if token else frozenset({NO_ANSWER})
    return Answer(elements, raw_text=raw, reasoning_text=reasoning)


def generate_ll_task(names: list[str]) -> tuple[str, GroundTruth]:
    """Last-letter concatenation task over the words of the given names."""
    if not names:
        raise UsageError("need at least one name")
    words: list[str] = []
    for name in names:
        parts = name.split()
        if not parts:
            raise UsageError(f"name {name!r} has no words")
        words.extend(parts)
    letters = [word[-1].lower() for word in words]
    truth = "".join(letters)
    joined = " ".join(names)
    question = f'Take the last letters of each word in "{joined}" and concatenate them.'
    steps = "; ".join(f"the last letter of {word!r} is {letter!r}" for word, letter in zip(words, letters))
    explanation = f"{steps.capitalize()}. Concatenated they give {truth!r}."
    answer = Answer(frozenset({truth}), raw_text=truth)
    return question, GroundTruth(answer=answer, explanation=explanation)


def _float_sets_match(a: frozenset[str], b: frozenset[str], tol: float) -> bool:
    try:
        xs = sorted(float(e) for e in a)
        ys = sorted(float(e) for e in b)
    except ValueError:
        return False
    if len(xs) != len(ys):
        return False
    return all(abs(x - y) <= tol for x, y in zip(xs, ys))


def grade(answer: Answer, truth: GroundTruth, task: TaskType) -> bool:
    """True when the answer matches the ground truth under the task's rule."""
    if answer.is_no_answer:
        return False
    if task.kind == "numeric":
        return _float_sets_match(answer.elements, truth.answer.elements, NUMERIC_TOLERANCE)
    return answer.elements == truth.answer.elements


def render_answer(answer: Answer, task: TaskType) -> str:
    """Human-readable answer rendering used in prompts and simulated replies."""
    if task.kind == "multiple_choice":
        (label,) = tuple(answer.elements)
        return f"({label})"
    if task.kind == "numeric":
        return ", ".join(sorted(answer.elements, key=float))
    (token,) = tuple(answer.elements)
    return token
