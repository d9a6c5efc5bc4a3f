"""Shared JSON-over-HTTP helper with retry/backoff used by both clients."""

from __future__ import annotations

import random
import time

import requests

from .errors import ProtocolError, TransportError


def post_json_with_retries(
    session: requests.Session,
    url: str,
    payload: dict,
    headers: dict[str, str],
    timeout: float,
    max_attempts: int,
    base_backoff: float,
    sleep=time.sleep,
) -> dict:
    """POST JSON, retrying 429/5xx and transport failures with jittered
    exponential backoff. Other HTTP errors fail fast as protocol errors."""
    last_error: Exception | None = None
    for attempt in range(max_attempts):
        try:
            response = session.post(url, json=payload, headers=headers, timeout=timeout)
            if response.status_code == 200:
                return response.json()
            if response.status_code == 429 or response.status_code >= 500:
                last_error = TransportError(f"HTTP {response.status_code} from {url}")
            else:
                raise ProtocolError(f"HTTP {response.status_code} from {url}: {response.text[:200]}")
        except (requests.RequestException, ValueError) as exc:
            last_error = exc
        if attempt + 1 < max_attempts:
            sleep(base_backoff * (2**attempt) * (0.5 + random.random()))
    raise TransportError(f"request to {url} failed after {max_attempts} attempts: {last_error}")
