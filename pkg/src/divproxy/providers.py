"""Sample batch production: chat client, record/replay cache, simulator.

Every provider answers one CompletionRequest at a time; `sample` fans m
requests out (optionally concurrently) and assembles the batch in sample
index order, so output order never depends on arrival order. A caching
wrapper records raw responses byte-exactly to JSONL and can replay them
without touching the network.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol

import requests

from ._http import post_json_with_retries
from .answers import GroundTruth, TaskType, canonical_number, normalize, render_answer
from .errors import CacheMissError, ProtocolError, ProviderError, UsageError
from .measures import SampleBatch
from .prompts import PromptSpec, render_prompt

API_KEY_ENV = "DIVPROXY_API_KEY"


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff: float = 0.5

    def __post_init__(self):
        if self.max_attempts < 1:
            raise UsageError("max_attempts must be >= 1")
        if self.base_backoff < 0:
            raise UsageError("base_backoff must be >= 0")


@dataclass(frozen=True)
class SamplingConfig:
    """How many samples to draw per (prompt, question) and how."""

    m: int = 20
    temperature: float = 0.7
    max_concurrency: int = 1
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.m < 1:
            raise UsageError("m must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise UsageError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_concurrency < 1:
            raise UsageError("max_concurrency must be >= 1")


@dataclass(frozen=True)
class SimulatorConfig:
    """Statistical stand-in for a question-answering model."""

    correct_prob: float
    distractor_count: int = 3
    noanswer_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.correct_prob <= 1.0:
            raise UsageError("correct_prob must be in [0, 1]")
        if not 0.0 <= self.noanswer_prob < 1.0:
            raise UsageError("noanswer_prob must be in [0, 1)")
        if self.correct_prob + self.noanswer_prob > 1.0:
            raise UsageError("correct_prob + noanswer_prob must be <= 1")
        if self.distractor_count < 1:
            raise UsageError("distractor_count must be >= 1")


@dataclass(frozen=True)
class Question:
    id: str
    text: str


@dataclass(frozen=True)
class CompletionRequest:
    """One sample's worth of work, addressable for caching and simulation."""

    prompt_id: str
    prompt_text: str
    question_id: str
    question_text: str
    temperature: float
    sample_index: int
    cot: bool = False


class Provider(Protocol):
    provider_id: str

    def complete(self, request: CompletionRequest) -> str: ...


def cache_key(provider_id: str, model: str, request: CompletionRequest) -> str:
    """Stable per-sample key: hash of provider, model, texts, temperature, index."""
    material = json.dumps(
        [provider_id, model, request.prompt_text, request.question_text, repr(request.temperature), request.sample_index],
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL store of byte-exact raw completions.

    Concurrent reads are lock-free once loaded; appends are serialized.
    Replay requires an exact key match.
    """

    def __init__(self, path: str):
        self.path = path
        self._records: dict[str, str] = {}
        self._lock = threading.Lock()
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = json.loads(line)
                        self._records[record["key"]] = record["response_text"]
                    except (json.JSONDecodeError, KeyError, TypeError) as exc:
                        raise ProtocolError(f"{path}:{line_no}: malformed cache record: {exc}") from exc

    def __len__(self) -> int:
        return len(self._records)

    def get(self, key: str) -> Optional[str]:
        return self._records.get(key)

    def put(self, key: str, response_text: str) -> None:
        with self._lock:
            if key in self._records:
                return
            self._records[key] = response_text
            record = {"key": key, "response_text": response_text, "timestamp": time.time()}
            directory = os.path.dirname(self.path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


class HttpChatProvider:
    """OpenAI-compatible chat-completions client.

    One request per sample (never the API's n parameter) so cache keys stay
    per-sample and providers without n support behave identically.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = API_KEY_ENV,
        timeout: float = 120.0,
        retry: RetryPolicy = RetryPolicy(),
        session: requests.Session | None = None,
    ):
        self.provider_id = "http"
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retry = retry
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, request: CompletionRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
        }
        body = post_json_with_retries(
            self._session,
            f"{self.base_url}/chat/completions",
            payload,
            self._headers(),
            self.timeout,
            self.retry.max_attempts,
            self.retry.base_backoff,
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat completion payload: {exc}") from exc
        if not isinstance(content, str):
            raise ProtocolError(f"completion content is {type(content).__name__}, not str")
        return content


class CachingProvider:
    """Record/replay wrapper: byte-exact storage keyed per sample.

    In replay-only mode a miss raises CacheMissError instead of reaching the
    wrapped provider.
    """

    def __init__(self, inner: Provider, cache: ResponseCache, replay_only: bool = False):
        self.inner = inner
        self.cache = cache
        self.replay_only = replay_only
        self.provider_id = inner.provider_id
        self.model = getattr(inner, "model", "")

    def complete(self, request: CompletionRequest) -> str:
        key = cache_key(self.provider_id, self.model, request)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if self.replay_only:
            raise CacheMissError(
                f"no cached response for prompt={request.prompt_id} question={request.question_id} "
                f"sample={request.sample_index}"
            )
        response = self.inner.complete(request)
        self.cache.put(key, response)
        return response


def _derived_rng(seed: int, prompt_id: str, question_id: str, sample_index: int) -> random.Random:
    material = f"{seed}\x1f{prompt_id}\x1f{question_id}\x1f{sample_index}".encode("utf-8")
    return random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "big"))


def _distractor_text(truth: GroundTruth, task: TaskType, index: int) -> str:
    if task.kind == "multiple_choice":
        truth_labels = truth.answer.elements
        wrong = [label for label in task.labels if label not in truth_labels]
        return f"({wrong[index % len(wrong)]})"
    if task.kind == "numeric":
        base = min(float(e) for e in truth.answer.elements)
        return canonical_number(base + index + 1)
    (token,) = tuple(sorted(truth.answer.elements))
    suffix = chr(ord("a") + index % 26) + (str(index // 26) if index >= 26 else "")
    return token + suffix


def simulate_response(cfg: SimulatorConfig, truth: GroundTruth, task: TaskType, rng: random.Random) -> str:
    """Emit the true answer, a refusal, or a fixed distractor, per cfg.

    Deterministic given the rng state; the provider derives that state from
    (seed, prompt id, question id, sample index).
    """
    draw = rng.random()
    if draw < cfg.correct_prob:
        return f"The answer is {render_answer(truth.answer, task)}."
    if draw < cfg.correct_prob + cfg.noanswer_prob:
        return "There is no answer I can give."
    index = rng.randrange(cfg.distractor_count)
    return f"The answer is {_distractor_text(truth, task, index)}."


class SimulatorProvider:
    """Deterministic statistical model of a question-answering LLM.

    Ground truths are looked up by question id. Per-prompt correctness
    overrides model prompt-quality differences; ``cot_bonus`` is added to the
    correct probability whenever the request came from a CoT prompt.
    """

    def __init__(
        self,
        cfg: SimulatorConfig,
        truths: Mapping[str, tuple[GroundTruth, TaskType]],
        per_prompt_correct_prob: Mapping[str, float] | None = None,
        cot_bonus: float = 0.0,
    ):
        self.provider_id = "simulator"
        self.model = "simulator"
        self.cfg = cfg
        self.truths = dict(truths)
        self.per_prompt_correct_prob = dict(per_prompt_correct_prob or {})
        self.cot_bonus = cot_bonus

    def _resolved_cfg(self, request: CompletionRequest) -> SimulatorConfig:
        correct = self.per_prompt_correct_prob.get(request.prompt_id, self.cfg.correct_prob)
        if request.cot:
            correct += self.cot_bonus
        correct = min(max(correct, 0.0), 1.0 - self.cfg.noanswer_prob)
        return SimulatorConfig(
            correct_prob=correct,
            distractor_count=self.cfg.distractor_count,
            noanswer_prob=self.cfg.noanswer_prob,
            seed=self.cfg.seed,
        )

    def complete(self, request: CompletionRequest) -> str:
        try:
            truth, task = self.truths[request.question_id]
        except KeyError:
            raise UsageError(f"simulator has no ground truth for question {request.question_id!r}") from None
        rng = _derived_rng(self.cfg.seed, request.prompt_id, request.question_id, request.sample_index)
        return simulate_response(self._resolved_cfg(request), truth, task, rng)


def sample(
    provider: Provider,
    prompt: PromptSpec,
    question: Question,
    cfg: SamplingConfig,
    task: TaskType,
) -> SampleBatch:
    """Query the provider m times and normalize the responses into a batch."""
    prompt_text = render_prompt(prompt, question.text)
    requests_ = [
        CompletionRequest(
            prompt_id=prompt.id,
            prompt_text=prompt_text,
            question_id=question.id,
            question_text=question.text,
            temperature=cfg.temperature,
            sample_index=i,
            cot=prompt.cot,
        )
        for i in range(cfg.m)
    ]

    def run_one(request: CompletionRequest) -> str:
        try:
            return provider.complete(request)
        except ProviderError as exc:
            raise type(exc)(f"sample {request.sample_index}: {exc}") from exc

    if cfg.max_concurrency > 1 and cfg.m > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.max_concurrency, cfg.m)) as pool:
            raw_texts = list(pool.map(run_one, requests_))
    else:
        raw_texts = [run_one(request) for request in requests_]

    samples = tuple(normalize(text, task) for text in raw_texts)
    return SampleBatch(
        samples=samples,
        prompt_id=prompt.id,
        question_id=question.id,
        temperature=cfg.temperature,
    )
