"""Vector-based diversity: embedders, distance metrics, centroid distance.

Each answer is mapped into R^D by a pluggable embedder; the diversity of a
batch is the mean distance from each vector to the batch centroid. Two
embedders ship: a seeded-hash test embedder (hermetic, no network) and an
HTTP client speaking the OpenAI-embeddings wire shape.
"""

from __future__ import annotations

import hashlib
import os
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence

import numpy as np
import requests

from ._http import post_json_with_retries
from .errors import ProtocolError, UsageError
from .measures import SampleBatch

METRICS = ("euclidean", "cosine")
EMBED_TARGETS = ("answer_only", "reasoning_and_answer")

API_KEY_ENV = "DIVPROXY_API_KEY"


class Embedder(Protocol):
    """Maps texts to fixed-dimension vectors; same text -> same vector per run."""

    dim: int

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def distance(x: np.ndarray, y: np.ndarray, metric: str = "euclidean") -> float:
    """Distance between two vectors under the named metric."""
    if metric == "euclidean":
        return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if metric == "cosine":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        nx = np.linalg.norm(x)
        ny = np.linalg.norm(y)
        if nx == 0.0 or ny == 0.0:
            raise UsageError("cosine distance undefined for a zero vector")
        return float(1.0 - np.dot(x, y) / (nx * ny))
    raise UsageError(f"unknown metric {metric!r}, expected one of {METRICS}")


def _check_vectors(vectors: Sequence[np.ndarray]) -> np.ndarray:
    if len(vectors) == 0:
        raise UsageError("need at least one vector")
    arr = np.asarray([np.asarray(v, dtype=float) for v in vectors], dtype=float)
    if arr.ndim != 2:
        raise UsageError("vectors must share one dimension")
    if not np.all(np.isfinite(arr)):
        raise UsageError("vectors must have finite components")
    return arr


def centroid(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise arithmetic mean of the vectors."""
    return _check_vectors(vectors).mean(axis=0)


def mean_centroid_distance(vectors: Sequence[np.ndarray], metric: str = "euclidean") -> float:
    """Mean distance from each vector to the arithmetic-mean centroid."""
    arr = _check_vectors(vectors)
    cent = arr.mean(axis=0)
    return float(np.mean([distance(v, cent, metric=metric) for v in arr]))


def embed_batch(embedder: Embedder, batch: SampleBatch, target: str = "answer_only") -> list[np.ndarray]:
    """One vector per sample, in batch order.

    ``answer_only`` embeds the canonical answer rendering; use
    ``reasoning_and_answer`` to embed the full raw response when the
    reasoning path should count as part of the answer.
    """
    if target not in EMBED_TARGETS:
        raise UsageError(f"unknown embed target {target!r}, expected one of {EMBED_TARGETS}")
    if target == "answer_only":
        texts = [answer.canonical_text for answer in batch.samples]
    else:
        texts = [answer.raw_text or answer.canonical_text for answer in batch.samples]
    return embedder.embed(texts)


class DeterministicEmbedder:
    """Hermetic test embedder: seeded hash of the text expanded to D components.

    Each component is derived from SHA-256 in counter mode and scaled into
    [-1, 1], so vectors are stable across processes, platforms, and library
    versions. Already-seen texts are served from an in-memory cache.
    """

    kind = "deterministic_test"

    def __init__(self, dim: int = 8, seed: int = 0):
        if dim < 1:
            raise UsageError("embedding dimension must be >= 1")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _vector(self, text: str) -> np.ndarray:
        components = np.empty(self.dim, dtype=float)
        payload = f"{self.seed}\x1f{text}".encode("utf-8")
        for i in range(self.dim):
            digest = hashlib.sha256(payload + b"\x1f" + str(i).encode()).digest()
            (word,) = struct.unpack(">Q", digest[:8])
            components[i] = word / float(2**64 - 1) * 2.0 - 1.0
        return components

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            with self._lock:
                vec = self._cache.get(text)
            if vec is None:
                vec = self._vector(text)
                with self._lock:
                    self._cache.setdefault(text, vec)
            out.append(vec.copy())
        return out


class HttpEmbedder:
    """OpenAI-compatible embeddings client with a per-run response cache.

    POSTs ``{"input": [texts], "model": ...}`` and expects
    ``{"data": [{"embedding": [...]}, ...]}`` in input order. The bearer
    token is read from the environment (default DIVPROXY_API_KEY). Repeat
    texts within one run are served from the cache without a network call.
    """

    kind = "http_endpoint"

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int | None = None,
        api_key_env: str = API_KEY_ENV,
        timeout: float = 60.0,
        max_attempts: int = 5,
        base_backoff: float = 0.5,
        max_concurrency: int = 1,
        batch_size: int = 128,
        session: requests.Session | None = None,
    ):
        if max_concurrency < 1:
            raise UsageError("max_concurrency must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim or 0  # learned from the first response when unset
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.base_backoff = base_backoff
        self.max_concurrency = max_concurrency
        self.batch_size = batch_size
        self._session = session or requests.Session()
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, texts: list[str]) -> list[np.ndarray]:
        payload = {"input": texts, "model": self.model}
        body = post_json_with_retries(
            self._session,
            f"{self.base_url}/embeddings",
            payload,
            self._headers(),
            self.timeout,
            self.max_attempts,
            self.base_backoff,
        )
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise ProtocolError(f"expected {len(texts)} embeddings, got {data!r:.200}")
        vectors = []
        for item in data:
            emb = item.get("embedding") if isinstance(item, dict) else None
            if not isinstance(emb, list):
                raise ProtocolError("embedding payload missing 'embedding' list")
            vectors.append(np.asarray(emb, dtype=float))
        dims = {v.shape[0] for v in vectors}
        if len(dims) > 1:
            raise ProtocolError(f"embedding dimensions disagree within one response: {sorted(dims)}")
        got_dim = vectors[0].shape[0]
        with self._lock:
            if self.dim == 0:
                self.dim = got_dim
        if got_dim != self.dim:
            raise ProtocolError(f"embedding dimension {got_dim} != expected {self.dim}")
        return vectors

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            chunks = [missing[i : i + self.batch_size] for i in range(0, len(missing), self.batch_size)]
            if self.max_concurrency > 1 and len(chunks) > 1:
                with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
                    results = list(pool.map(self._post, chunks))
            else:
                results = [self._post(chunk) for chunk in chunks]
            with self._lock:
                for chunk, vectors in zip(chunks, results):
                    for text, vec in zip(chunk, vectors):
                        self._cache.setdefault(text, vec)
        with self._lock:
            return [self._cache[t].copy() for t in texts]
