"""Dataset loading and synthesis.

Three JSON layouts are understood, modeled on the public releases:

* ``csqa_json`` — array (or JSONL) of ``{"id", "question": {"stem",
  "choices": [{"label", "text"}]}, "answerKey"}``.
* ``draw1k_json`` — array of ``{"iIndex" | "id", "sQuestion" | "question",
  "lSolutions" | "answers": [numbers], "lEquations" | "equations":
  [strings]}``; equations, when present, become the CoT explanation.
* ``ll_json`` — array of ``{"id", "question", "answer"}`` with a lowercase
  concatenation answer.

Loaders are lenient on unknown fields and strict on malformed ones.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from .answers import (
    GroundTruth,
    TaskType,
    canonical_number,
    generate_ll_task,
    multiple_choice,
    numeric_task,
    text_concat_task,
)
from .errors import DataError, UsageError
from .measures import Answer

FORMATS = ("csqa_json", "draw1k_json", "ll_json")

# Word pool for synthesized last-letter names; ~40 entries keeps collisions
# rare at 3k samples without bloating the module.
_NAME_WORDS = (
    "Amy", "Ben", "Carla", "Dmitri", "Elena", "Farid", "Grace", "Hiro",
    "Ines", "Jamal", "Kira", "Liam", "Mona", "Nadia", "Omar", "Priya",
    "Quinn", "Rosa", "Sven", "Tara", "Umar", "Vera", "Wei", "Xander",
    "Yara", "Zoe", "Anders", "Bianca", "Chen", "Dara", "Emil", "Fatima",
    "Gita", "Henrik", "Ivan", "Jun", "Kofi", "Lena", "Marco", "Noor",
)

_MC_SUBJECTS = (
    "the river", "the library", "the market", "the garden", "the station",
    "the bridge", "the forest", "the workshop", "the harbor", "the archive",
)


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    question: str
    task: TaskType
    truth: GroundTruth


def record_to_dict(record: DatasetRecord) -> dict:
    payload: dict = {
        "id": record.id,
        "question": record.question,
        "task": {"kind": record.task.kind},
        "answer": sorted(record.truth.answer.elements),
    }
    if record.task.kind == "multiple_choice":
        payload["task"]["options"] = [{"label": l, "text": t} for l, t in record.task.options]
    if record.truth.explanation is not None:
        payload["explanation"] = record.truth.explanation
    return payload


def record_from_dict(payload: dict) -> DatasetRecord:
    kind = payload["task"]["kind"]
    if kind == "multiple_choice":
        task = multiple_choice([(o["label"], o["text"]) for o in payload["task"]["options"]])
    elif kind == "numeric":
        task = numeric_task()
    elif kind == "text_concat":
        task = text_concat_task()
    else:
        raise DataError(f"unknown task kind {kind!r}")
    elements = frozenset(payload["answer"])
    answer = Answer(elements, raw_text=", ".join(sorted(elements)))
    return DatasetRecord(
        id=str(payload["id"]),
        question=payload["question"],
        task=task,
        truth=GroundTruth(answer=answer, explanation=payload.get("explanation")),
    )


def _read_json_records(path: str) -> list:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    stripped = text.lstrip()
    if not stripped:
        raise DataError(f"{path}: empty dataset file")
    if stripped.startswith("["):
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(records, list):
            raise DataError(f"{path}: expected a JSON array of records")
        return records
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: {exc.msg}") from exc
    return records


def _first(raw: dict, *keys):
    for key in keys:
        if key in raw:
            return raw[key]
    return None


def _parse_csqa(raw: dict, where: str) -> DatasetRecord:
    question = raw.get("question")
    if isinstance(question, dict):
        stem = question.get("stem")
        choices = question.get("choices")
    else:
        stem = question
        choices = raw.get("choices")
    answer_key = _first(raw, "answerKey", "answer_key", "answer")
    if not stem or not isinstance(choices, list) or answer_key is None:
        raise DataError(f"{where}: record needs a question stem, choices, and an answerKey")
    try:
        options = [(c["label"], c["text"]) for c in choices]
    except (KeyError, TypeError) as exc:
        raise DataError(f"{where}: each choice needs 'label' and 'text'") from exc
    task = multiple_choice(options)
    if str(answer_key) not in task.labels:
        raise DataError(f"{where}: answerKey {answer_key!r} not among option labels {task.labels}")
    truth = GroundTruth(
        answer=Answer(frozenset({str(answer_key)}), raw_text=str(answer_key)),
        explanation=raw.get("explanation"),
    )
    return DatasetRecord(id=str(_first(raw, "id") or ""), question=str(stem), task=task, truth=truth)


def _parse_draw1k(raw: dict, where: str) -> DatasetRecord:
    question = _first(raw, "sQuestion", "question")
    solutions = _first(raw, "lSolutions", "answers", "solutions")
    if not question or not isinstance(solutions, list) or not solutions:
        raise DataError(f"{where}: record needs a question and a nonempty solutions list")
    try:
        elements = frozenset(canonical_number(float(value)) for value in solutions)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: solutions must be numbers: {solutions!r}") from exc
    equations = _first(raw, "lEquations", "equations")
    explanation = raw.get("explanation")
    if explanation is None and isinstance(equations, list) and equations:
        explanation = "The governing equations are " + "; ".join(str(eq) for eq in equations) + "."
    answer = Answer(elements, raw_text=", ".join(sorted(elements)))
    return DatasetRecord(
        id=str(_first(raw, "iIndex", "id") or ""),
        question=str(question),
        task=numeric_task(),
        truth=GroundTruth(answer=answer, explanation=explanation),
    )


def _parse_ll(raw: dict, where: str) -> DatasetRecord:
    question = raw.get("question")
    answer = raw.get("answer")
    if not question or not isinstance(answer, str) or not answer:
        raise DataError(f"{where}: record needs a question and a string answer")
    truth = GroundTruth(
        answer=Answer(frozenset({answer.strip().lower()}), raw_text=answer),
        explanation=raw.get("explanation"),
    )
    return DatasetRecord(id=str(raw.get("id") or ""), question=str(question), task=text_concat_task(), truth=truth)


_PARSERS = {"csqa_json": _parse_csqa, "draw1k_json": _parse_draw1k, "ll_json": _parse_ll}


def load(path: str, format: str) -> list[DatasetRecord]:
    """Load a dataset file into records; ids are checked for uniqueness."""
    if format not in FORMATS:
        raise UsageError(f"unknown format {format!r}, expected one of {FORMATS}")
    parser = _PARSERS[format]
    records = []
    seen_ids = set()
    for index, raw in enumerate(_read_json_records(path)):
        where = f"{path}: record {index}"
        if not isinstance(raw, dict):
            raise DataError(f"{where}: expected an object, got {type(raw).__name__}")
        record = parser(raw, where)
        if not record.id:
            record = DatasetRecord(id=f"{format[:-5]}-{index:05d}", question=record.question, task=record.task, truth=record.truth)
        if record.id in seen_ids:
            raise DataError(f"{where}: duplicate id {record.id!r}")
        seen_ids.add(record.id)
        records.append(record)
    return records


def synthesize_ll(count: int, words_per_name: int = 2, seed: int = 0) -> list[DatasetRecord]:
    """Synthetic last-letter concatenation records with computable truth."""
    if count < 1:
        raise UsageError("count must be >= 1")
    if words_per_name < 1:
        raise UsageError("words_per_name must be >= 1")
    rng = random.Random(seed)
    records = []
    for i in range(count):
        name = " ".join(rng.choice(_NAME_WORDS) for _ in range(words_per_name))
        question, truth = generate_ll_task([name])
        records.append(DatasetRecord(id=f"ll-{i:05d}", question=question, task=text_concat_task(), truth=truth))
    return records


def synthesize_mc(count: int, n_options: int = 4, seed: int = 0) -> list[DatasetRecord]:
    """Synthetic multiple-choice records; the correct label is seeded-random."""
    if count < 1:
        raise UsageError("count must be >= 1")
    if not 2 <= n_options <= len(_MC_SUBJECTS):
        raise UsageError(f"n_options must be in [2, {len(_MC_SUBJECTS)}]")
    rng = random.Random(seed)
    labels = [chr(ord("A") + i) for i in range(n_options)]
    records = []
    for i in range(count):
        subjects = rng.sample(_MC_SUBJECTS, n_options)
        options = list(zip(labels, subjects))
        key = rng.choice(labels)
        question = f"Question {i}: which of the labeled places is the correct one?"
        truth = GroundTruth(
            answer=Answer(frozenset({key}), raw_text=key),
            explanation=f"Of the listed places, option ({key}) is the one that fits.",
        )
        records.append(DatasetRecord(id=f"mc-{i:05d}", question=question, task=multiple_choice(options), truth=truth))
    return records


def synthesize_numeric(count: int, seed: int = 0) -> list[DatasetRecord]:
    """Synthetic numeric word problems with small-magnitude real answers."""
    if count < 1:
        raise UsageError("count must be >= 1")
    rng = random.Random(seed)
    records = []
    for i in range(count):
        a = rng.randint(2, 60)
        b = rng.randint(2, 60)
        value = float(a + b) if rng.random() < 0.5 else a * b / 4.0
        rendered = canonical_number(value)
        question = f"Problem {i}: combining {a} and {b} as described yields what number?"
        truth = GroundTruth(
            answer=Answer(frozenset({rendered}), raw_text=rendered),
            explanation=f"Working with {a} and {b} gives {rendered}.",
        )
        records.append(DatasetRecord(id=f"num-{i:05d}", question=question, task=numeric_task(), truth=truth))
    return records


def truth_registry(records) -> dict[str, tuple[GroundTruth, TaskType]]:
    """question id -> (truth, task) map, the shape the simulator consumes."""
    return {record.id: (record.truth, record.task) for record in records}
