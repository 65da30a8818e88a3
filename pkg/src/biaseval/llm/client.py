"""Minimal chat-completion client against the hosted-API wire shape.

POST {base_url}/chat/completions with {model, temperature, messages}, read
choices[0].message.content. Transient failures retry with exponential
backoff; auth failures abort immediately. A token bucket caps the request
rate per client.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

import httpx

API_KEY_ENV = "BIASEVAL_API_KEY"
GENERATION_TEMPERATURES = (0.0, 0.3, 0.6, 0.9)
ANNOTATION_TEMPERATURE = 0.2


class AuthenticationError(RuntimeError):
    """The endpoint rejected our credentials; retrying is pointless."""


class TransportExhaustedError(RuntimeError):
    """Retries ran out on a transient failure."""


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    temperature: float
    user: str
    system: str | None = None
    max_retries: int = 5
    timeout: float = 60.0

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")

    def messages(self) -> list[dict]:
        msgs = []
        if self.system:
            msgs.append({"role": "system", "content": self.system})
        msgs.append({"role": "user", "content": self.user})
        return msgs


class TokenBucket:
    """Blocking rate limiter: `rate_per_minute` acquisitions per minute."""

    def __init__(self, rate_per_minute: float):
        self.rate = rate_per_minute / 60.0
        self.capacity = max(1.0, rate_per_minute / 60.0)
        self.tokens = self.capacity
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


class ChatClient:
    """Synchronous chat client; safe to share across worker threads."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None,
                 requests_per_minute: float = 600.0, backoff_base: float = 0.25,
                 backoff_cap: float = 8.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.bucket = TokenBucket(requests_per_minute)
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._client = httpx.Client()
        self.requests_sent = 0
        self._count_lock = threading.Lock()

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, request: ChatRequest) -> str:
        """Run one completion, returning the assistant message content."""
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": request.model_name or self.model,
            "temperature": request.temperature,
            "messages": request.messages(),
        }
        url = self.base_url + "/chat/completions"
        last_error: Exception | None = None
        for attempt in range(request.max_retries + 1):
            self.bucket.acquire()
            with self._count_lock:
                self.requests_sent += 1
            try:
                resp = self._client.post(url, json=body, headers=headers,
                                         timeout=request.timeout)
            except httpx.TransportError as exc:
                last_error = exc
            else:
                if resp.status_code in (401, 403):
                    raise AuthenticationError(f"endpoint rejected credentials "
                                              f"(HTTP {resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = RuntimeError(f"HTTP {resp.status_code}")
                else:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as exc:
                        raise TransportExhaustedError(
                            f"malformed completion response: {resp.text[:500]}") from exc
            if attempt < request.max_retries:
                time.sleep(min(self.backoff_base * 2 ** attempt, self.backoff_cap))
        raise TransportExhaustedError(f"retries exhausted: {last_error}")

    def chat(self, user: str, temperature: float, system: str | None = None,
             max_retries: int = 5, timeout: float = 60.0) -> str:
        return self.complete(ChatRequest(model_name=self.model, temperature=temperature,
                                         user=user, system=system, max_retries=max_retries,
                                         timeout=timeout))
