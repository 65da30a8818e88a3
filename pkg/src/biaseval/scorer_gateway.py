"""Adapter over external model-based text scorers.

The core never embeds a pretrained model: scores come from an HTTP scorer
speaking POST /score with body {metric, language, texts: [...]} and response
{scores: [...]}. Scalar metrics (SM, HS, OF) return reals in [0, 1]; regard
(RG) returns one of four labels, or a label distribution that the gateway
collapses to its argmax.
"""

from __future__ import annotations

import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import httpx

SCALAR_METRICS = ("SM", "HS", "OF")
REGARD_LABELS = ("negative", "neutral", "positive", "other")

# Which languages each metric supports; offensiveness is Chinese-only, hate
# speech and regard are English-only, sentiment covers both.
METRIC_LANGUAGES = {
    "SM": ("zh", "en"),
    "HS": ("en",),
    "OF": ("zh",),
    "RG": ("en",),
}

MISSING = None  # sentinel for a per-text scorer failure


class ScorerProtocolError(RuntimeError):
    """The scorer endpoint violated the wire contract."""

    def __init__(self, message: str, payload=None):
        super().__init__(message if payload is None else f"{message}; payload: {payload!r}")
        self.payload = payload


class ScorerUnavailableError(RuntimeError):
    """Transient failures exhausted the retry budget."""


@dataclass(frozen=True)
class ScoreRequest:
    metric: str
    language: str
    texts: tuple[str, ...]
    correlation_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self):
        if self.metric not in METRIC_LANGUAGES:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.language not in METRIC_LANGUAGES[self.metric]:
            raise ValueError(
                f"metric {self.metric} does not support language {self.language!r}")


@dataclass(frozen=True)
class ScoreResponse:
    metric: str
    language: str
    entries: tuple
    correlation_id: str = ""


def _collapse_regard(entry, payload) -> str:
    if isinstance(entry, str):
        if entry not in REGARD_LABELS:
            raise ScorerProtocolError(f"unknown regard label {entry!r}", payload)
        return entry
    if isinstance(entry, dict):
        if not entry or not set(entry) <= set(REGARD_LABELS):
            raise ScorerProtocolError(f"bad regard distribution keys {sorted(entry)}", payload)
        total = sum(entry.values())
        if abs(total - 1.0) > 1e-3:
            raise ScorerProtocolError(f"regard distribution sums to {total}", payload)
        return max(REGARD_LABELS, key=lambda lab: entry.get(lab, 0.0))
    raise ScorerProtocolError(f"regard entry must be label or distribution, got {entry!r}",
                              payload)


def _validate_entry(metric: str, entry, payload):
    if entry is None:
        return MISSING
    if metric == "RG":
        return _collapse_regard(entry, payload)
    if isinstance(entry, bool) or not isinstance(entry, (int, float)):
        raise ScorerProtocolError(f"{metric} score must be a number, got {entry!r}", payload)
    value = float(entry)
    if not 0.0 <= value <= 1.0:
        raise ScorerProtocolError(f"{metric} score {value} outside [0, 1]", payload)
    return value


def score_batch(req: ScoreRequest, endpoint: str, max_retries: int = 3,
                timeout: float = 30.0, client: httpx.Client | None = None) -> ScoreResponse:
    """POST one batch to the scorer, order-preserving, retrying transient failures.

    Per-text failures arrive as nulls and become the MISSING sentinel; a
    malformed response raises ScorerProtocolError with the offending payload.
    """
    if not req.texts:
        return ScoreResponse(metric=req.metric, language=req.language, entries=(),
                             correlation_id=req.correlation_id)
    body = {"metric": req.metric, "language": req.language, "texts": list(req.texts)}
    owns_client = client is None
    if owns_client:
        client = httpx.Client(timeout=timeout)
    try:
        payload = None
        for attempt in range(max_retries + 1):
            try:
                resp = client.post(endpoint.rstrip("/") + "/score", json=body)
            except httpx.TransportError as exc:
                if attempt == max_retries:
                    raise ScorerUnavailableError(f"scorer unreachable: {exc}") from exc
                time.sleep(min(0.1 * 2 ** attempt, 2.0))
                continue
            if resp.status_code >= 500:
                if attempt == max_retries:
                    raise ScorerUnavailableError(
                        f"scorer kept failing with HTTP {resp.status_code}")
                time.sleep(min(0.1 * 2 ** attempt, 2.0))
                continue
            if resp.status_code != 200:
                raise ScorerProtocolError(f"scorer returned HTTP {resp.status_code}",
                                          resp.text)
            payload = resp.json()
            break
        if not isinstance(payload, dict) or "scores" not in payload:
            raise ScorerProtocolError("response missing 'scores' field", payload)
        scores = payload["scores"]
        if not isinstance(scores, list) or len(scores) != len(req.texts):
            raise ScorerProtocolError(
                f"expected {len(req.texts)} scores, got "
                f"{len(scores) if isinstance(scores, list) else type(scores).__name__}",
                payload)
        entries = tuple(_validate_entry(req.metric, entry, payload) for entry in scores)
        return ScoreResponse(metric=req.metric, language=req.language, entries=entries,
                             correlation_id=req.correlation_id)
    finally:
        if owns_client:
            client.close()


def score_batches(requests: Sequence[ScoreRequest], endpoint: str,
                  max_concurrency: int = 4, max_retries: int = 3,
                  timeout: float = 30.0) -> list[ScoreResponse]:
    """Dispatch several batches with bounded concurrency.

    Responses come back in request order, matched by correlation id.
    """
    if not requests:
        return []
    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        futures = {
            req.correlation_id: pool.submit(score_batch, req, endpoint,
                                            max_retries=max_retries, timeout=timeout)
            for req in requests
        }
        by_id = {cid: fut.result() for cid, fut in futures.items()}
    return [by_id[req.correlation_id] for req in requests]


def regard_proportions(labels: Sequence[str]) -> dict[str, float]:
    """Proportion of each regard label; missing entries are ignored."""
    present = [lab for lab in labels if lab is not MISSING]
    if not present:
        raise ValueError("no regard labels to aggregate")
    bad = set(present) - set(REGARD_LABELS)
    if bad:
        raise ValueError(f"unknown regard labels: {sorted(bad)}")
    n = len(present)
    return {lab: present.count(lab) / n for lab in REGARD_LABELS}
