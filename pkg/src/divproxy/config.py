"""Run configuration: TOML file parsing with strict validation.

Secrets never live in the file; the config names the environment variable
holding the API key and validation checks its presence before any network
call. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import UsageError
from .prompts import DEFAULT_INSTRUCTION
from .providers import API_KEY_ENV, RetryPolicy, SamplingConfig, SimulatorConfig

PROVIDER_KINDS = ("simulator", "http")
EMBEDDER_KINDS = ("none", "deterministic_test", "http_endpoint")

_SCHEMA = {
    "seed": int,
    "cache_path": str,
    "out_dir": str,
    "instruction": str,
    "provider": {
        "kind": str,
        "base_url": str,
        "model": str,
        "api_key_env": str,
    },
    "sampling": {
        "m": int,
        "temperature": (int, float),
        "max_concurrency": int,
        "retry_max_attempts": int,
        "retry_base_backoff": (int, float),
    },
    "embedder": {
        "kind": str,
        "dim": int,
        "base_url": str,
        "model": str,
    },
    "simulator": {
        "correct_prob": (int, float),
        "distractor_count": int,
        "noanswer_prob": (int, float),
    },
}


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "simulator"
    base_url: str = ""
    model: str = ""
    api_key_env: str = API_KEY_ENV

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise UsageError(f"provider.kind must be one of {PROVIDER_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "none"
    dim: int = 8
    base_url: str = ""
    model: str = ""

    def __post_init__(self):
        if self.kind not in EMBEDDER_KINDS:
            raise UsageError(f"embedder.kind must be one of {EMBEDDER_KINDS}, got {self.kind!r}")
        if self.dim < 1:
            raise UsageError("embedder.dim must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    cache_path: str | None = None
    out_dir: str = "out"
    instruction: str = DEFAULT_INSTRUCTION
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    simulator_correct_prob: float = 0.7
    simulator_distractor_count: int = 3
    simulator_noanswer_prob: float = 0.0

    def simulator_config(self, correct_prob: float | None = None) -> SimulatorConfig:
        return SimulatorConfig(
            correct_prob=self.simulator_correct_prob if correct_prob is None else correct_prob,
            distractor_count=self.simulator_distractor_count,
            noanswer_prob=self.simulator_noanswer_prob,
            seed=self.seed,
        )

    def validate_for_network(self) -> None:
        """Fail before any request when required secrets or URLs are missing."""
        if self.provider.kind == "http":
            if not self.provider.base_url or not self.provider.model:
                raise UsageError("http provider needs provider.base_url and provider.model")
            if not os.environ.get(self.provider.api_key_env):
                raise UsageError(f"environment variable {self.provider.api_key_env} is not set")
        if self.embedder.kind == "http_endpoint":
            if not self.embedder.base_url or not self.embedder.model:
                raise UsageError("http embedder needs embedder.base_url and embedder.model")
            if not os.environ.get(self.provider.api_key_env):
                raise UsageError(f"environment variable {self.provider.api_key_env} is not set")

    def to_dict(self) -> dict:
        """Config echo for run manifests; never includes secret values."""
        return {
            "seed": self.seed,
            "cache_path": self.cache_path,
            "out_dir": self.out_dir,
            "instruction": self.instruction,
            "provider": {
                "kind": self.provider.kind,
                "base_url": self.provider.base_url,
                "model": self.provider.model,
                "api_key_env": self.provider.api_key_env,
            },
            "sampling": {
                "m": self.sampling.m,
                "temperature": self.sampling.temperature,
                "max_concurrency": self.sampling.max_concurrency,
                "retry_max_attempts": self.sampling.retry.max_attempts,
                "retry_base_backoff": self.sampling.retry.base_backoff,
            },
            "embedder": {
                "kind": self.embedder.kind,
                "dim": self.embedder.dim,
                "base_url": self.embedder.base_url,
                "model": self.embedder.model,
            },
            "simulator": {
                "correct_prob": self.simulator_correct_prob,
                "distractor_count": self.simulator_distractor_count,
                "noanswer_prob": self.simulator_noanswer_prob,
            },
        }


def _check_keys(data: dict, schema: dict, prefix: str = "") -> None:
    for key, value in data.items():
        if key not in schema:
            raise UsageError(f"unknown config key {prefix + key!r}")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {prefix + key!r} must be a table")
            _check_keys(value, expected, prefix=f"{prefix}{key}.")
        elif not isinstance(value, expected) or isinstance(value, bool):
            raise UsageError(f"config key {prefix + key!r} has the wrong type")


def config_from_dict(data: dict) -> RunConfig:
    _check_keys(data, _SCHEMA)
    provider_data = data.get("provider", {})
    sampling_data = data.get("sampling", {})
    embedder_data = data.get("embedder", {})
    simulator_data = data.get("simulator", {})
    retry = RetryPolicy(
        max_attempts=sampling_data.get("retry_max_attempts", 5),
        base_backoff=float(sampling_data.get("retry_base_backoff", 0.5)),
    )
    return RunConfig(
        seed=data.get("seed", 0),
        cache_path=data.get("cache_path"),
        out_dir=data.get("out_dir", "out"),
        instruction=data.get("instruction", DEFAULT_INSTRUCTION),
        provider=ProviderConfig(
            kind=provider_data.get("kind", "simulator"),
            base_url=provider_data.get("base_url", ""),
            model=provider_data.get("model", ""),
            api_key_env=provider_data.get("api_key_env", API_KEY_ENV),
        ),
        sampling=SamplingConfig(
            m=sampling_data.get("m", 20),
            temperature=float(sampling_data.get("temperature", 0.7)),
            max_concurrency=sampling_data.get("max_concurrency", 1),
            retry=retry,
        ),
        embedder=EmbedderConfig(
            kind=embedder_data.get("kind", "none"),
            dim=embedder_data.get("dim", 8),
            base_url=embedder_data.get("base_url", ""),
            model=embedder_data.get("model", ""),
        ),
        simulator_correct_prob=float(simulator_data.get("correct_prob", 0.7)),
        simulator_distractor_count=simulator_data.get("distractor_count", 3),
        simulator_noanswer_prob=float(simulator_data.get("noanswer_prob", 0.0)),
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: invalid TOML: {exc}") from exc
    return config_from_dict(data)
