"""Few-shot and chain-of-thought prompt construction and rendering.

Prompts are an instruction followed by "Q: ... A: ..." exemplar blocks and
the final question. CoT prompts interleave the exemplar's explanation before
its answer. Exemplar selection is seeded: sampled without replacement within
a prompt, independently (with replacement) across prompts.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .answers import GroundTruth
from .errors import UsageError

DEFAULT_INSTRUCTION = "Answer the question. Finish with a line of the form 'The answer is ...'."


@dataclass(frozen=True)
class Exemplar:
    question: str
    answer_text: str
    explanation: Optional[str] = None


@dataclass(frozen=True)
class PromptSpec:
    """Instruction plus ordered exemplars; cot prompts require explanations."""

    id: str
    instruction: str
    exemplars: tuple[Exemplar, ...] = ()
    cot: bool = False

    def __post_init__(self):
        object.__setattr__(self, "exemplars", tuple(self.exemplars))
        if self.cot and any(e.explanation is None for e in self.exemplars):
            raise UsageError(f"prompt {self.id!r}: cot prompts need an explanation on every exemplar")


def render_prompt(prompt: PromptSpec, question: str) -> str:
    """Fixed rendering template shared by every provider."""
    blocks = [prompt.instruction.strip()]
    for exemplar in prompt.exemplars:
        if prompt.cot:
            answer_block = f"A: {exemplar.explanation} The answer is {exemplar.answer_text}."
        else:
            answer_block = f"A: The answer is {exemplar.answer_text}."
        blocks.append(f"Q: {exemplar.question}\n{answer_block}")
    blocks.append(f"Q: {question}\nA:")
    return "\n\n".join(blocks)


def _answer_text(truth: GroundTruth) -> str:
    """Task-agnostic rendering of a ground-truth answer for an exemplar."""
    elements = list(truth.answer.elements)
    try:
        elements.sort(key=float)
    except ValueError:
        elements.sort()
    return ", ".join(elements)


def _sample_exemplars(
    pool: Sequence[tuple[str, GroundTruth]],
    n_prompts: int,
    shots: int,
    seed: int,
) -> list[list[Exemplar]]:
    if n_prompts < 1:
        raise UsageError("n_prompts must be >= 1")
    if shots < 0:
        raise UsageError("shots must be >= 0")
    if len(pool) < shots:
        raise UsageError(f"pool of {len(pool)} is smaller than shots={shots}")
    rng = random.Random(seed)
    per_prompt = []
    for _ in range(n_prompts):
        indices = rng.sample(range(len(pool)), shots)
        exemplars = []
        for idx in indices:
            question, truth = pool[idx]
            exemplars.append(
                Exemplar(
                    question=question,
                    answer_text=_answer_text(truth),
                    explanation=truth.explanation,
                )
            )
        per_prompt.append(exemplars)
    return per_prompt


def build_fewshot_prompts(
    pool: Sequence[tuple[str, GroundTruth]],
    n_prompts: int,
    shots: int,
    seed: int,
    instruction: str = DEFAULT_INSTRUCTION,
) -> list[PromptSpec]:
    """n_prompts few-shot prompts with `shots` exemplars each, seeded."""
    sampled = _sample_exemplars(pool, n_prompts, shots, seed)
    return [
        PromptSpec(id=f"p{i:02d}", instruction=instruction, exemplars=tuple(exemplars), cot=False)
        for i, exemplars in enumerate(sampled)
    ]


def build_cot_prompts(
    pool: Sequence[tuple[str, GroundTruth]],
    n_prompts: int,
    shots: int,
    seed: int,
    instruction: str = DEFAULT_INSTRUCTION,
) -> list[PromptSpec]:
    """As build_fewshot_prompts, with exemplar explanations rendered before
    the answer. Same seed selects the same exemplars as the few-shot builder.
    """
    for question, truth in pool:
        if not truth.explanation:
            raise UsageError(f"pool item {question[:40]!r} lacks the explanation a CoT prompt needs")
    sampled = _sample_exemplars(pool, n_prompts, shots, seed)
    return [
        PromptSpec(id=f"p{i:02d}", instruction=instruction, exemplars=tuple(exemplars), cot=True)
        for i, exemplars in enumerate(sampled)
    ]
