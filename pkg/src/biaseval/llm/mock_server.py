"""Deterministic mock chat endpoint for offline runs and tests.

Replies are a pure function of (request payload, occurrence index, seed), so
a rerun with the same seed reproduces the corpus byte for byte. At
temperature 0 the occurrence index is pinned to 0 (resampling an identical
request returns the identical text); at higher temperatures repeated
identical requests cycle through variants, standing in for sampling noise.

Request heuristics: a user message carrying the pairwise-annotation framing
answers "Text A"/"Text B" (or 文本A/文本B); a scoring request answers with a
1-5 grade; anything else is treated as a generation prompt and answered with
a short synthetic description that quotes the prompt, so nationality surface
forms appear in the output and anonymization has real work to do. A user
message containing "REFUSE-TRIGGER" draws a refusal reply.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

REFUSAL_TRIGGER = "REFUSE-TRIGGER"
REFUSAL_TEXT = "I'm sorry, but I can't help with that request."

_EN_TRAITS = ("warm", "direct", "reserved", "inventive", "pragmatic", "talkative",
              "meticulous", "easygoing", "stubborn", "generous", "frugal", "festive")
_ZH_TRAITS = ("热情", "直率", "内敛", "务实", "健谈", "节俭", "好客", "勤劳", "谨慎", "幽默")


def _digest(parts: list[str]) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.digest()


def _pick(digest: bytes, offset: int, options):
    return options[digest[offset % len(digest)] % len(options)]


def synthesize_reply(payload: dict, occurrence: int, seed: int) -> str:
    """Deterministic reply for one request payload."""
    user = ""
    for message in payload.get("messages", []):
        if message.get("role") == "user":
            user = message.get("content", "")
    temperature = float(payload.get("temperature", 0.0))
    if temperature == 0.0:
        occurrence = 0
    digest = _digest([str(seed), str(occurrence), f"{temperature:.3f}", user])

    if REFUSAL_TRIGGER in user:
        return REFUSAL_TEXT

    if "文本A" in user or "Text A" in user:
        return "Text A" if digest[0] % 2 == 0 else "Text B"

    if "打分" in user or "rate the following" in user:
        grade = digest[1] % 5 + 1
        return f"这段话的分数是{grade}。"

    zh = any("一" <= ch <= "鿿" for ch in user)
    traits = _ZH_TRAITS if zh else _EN_TRAITS
    t1 = _pick(digest, 2, traits)
    t2 = _pick(digest, 3, traits)
    t3 = _pick(digest, 5, traits)
    if zh:
        return f"有人问：{user} 一般认为他们{t1}、{t2}，也有人觉得比较{t3}。"
    return (f"Asked: {user} They are often described as {t1} and {t2}, "
            f"though some would instead say {t3}.")


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _reply(self, status: int, payload: dict):
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if not self.path.endswith("/chat/completions"):
            self._reply(404, {"error": "unknown path"})
            return
        server: MockChatServer = self.server.mock  # type: ignore[attr-defined]
        if server.require_key:
            auth = self.headers.get("Authorization", "")
            if auth != f"Bearer {server.require_key}":
                self._reply(401, {"error": "bad credentials"})
                return
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError:
            self._reply(400, {"error": "bad json"})
            return
        occurrence = server.occurrence_of(raw)
        content = synthesize_reply(payload, occurrence, server.seed)
        self._reply(200, {
            "id": "mock",
            "object": "chat.completion",
            "model": payload.get("model", "mock"),
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content},
                         "finish_reason": "stop"}],
        })


class MockChatServer:
    """Threaded deterministic chat endpoint; port 0 picks a free port."""

    def __init__(self, port: int = 0, host: str = "127.0.0.1", seed: int = 0,
                 require_key: str | None = None):
        self.seed = seed
        self.require_key = require_key
        self._seen: Counter = Counter()
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.mock = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    def occurrence_of(self, raw_body: bytes) -> int:
        with self._lock:
            index = self._seen[raw_body]
            self._seen[raw_body] += 1
            return index

    def reset(self):
        with self._lock:
            self._seen.clear()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockChatServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self):
        self._httpd.serve_forever()
