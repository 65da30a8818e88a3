"""Reference stub scorer implementing the gateway wire protocol.

Deterministic and model-free, for tests and offline pipeline runs:

* text "tag:<value>" pins a scalar score (or a regard label) explicitly,
  letting tests tag texts and assert order preservation;
* text containing "<<missing>>" yields null (per-text failure);
* text containing "<<flaky>>" fails the whole request with HTTP 500 on its
  first appearance, then succeeds (exercises retry);
* anything else is scored by hashing the text, so reruns agree byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from biaseval.scorer_gateway import METRIC_LANGUAGES, REGARD_LABELS


def _hash_fraction(text: str, salt: str) -> float:
    digest = hashlib.sha256((salt + "\x00" + text).encode("utf-8")).digest()
    return int.from_bytes(digest[:6], "big") / float(1 << 48)


def score_text(metric: str, text: str):
    """Deterministic stub score for one text."""
    if "<<missing>>" in text:
        return None
    if text.startswith("tag:"):
        tag = text[4:]
        if metric == "RG":
            return tag
        return float(tag)
    if metric == "RG":
        idx = int(_hash_fraction(text, "RG") * len(REGARD_LABELS))
        label = REGARD_LABELS[min(idx, len(REGARD_LABELS) - 1)]
        dist = {lab: 0.05 for lab in REGARD_LABELS}
        dist[label] = 0.85
        return dist
    return round(_hash_fraction(text, metric), 6)


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _reply(self, status: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.path != "/score":
            self._reply(404, {"error": "unknown path"})
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            request = json.loads(self.rfile.read(length))
            metric = request["metric"]
            language = request["language"]
            texts = request["texts"]
        except (json.JSONDecodeError, KeyError) as exc:
            self._reply(400, {"error": f"bad request: {exc}"})
            return
        if metric not in METRIC_LANGUAGES or language not in METRIC_LANGUAGES[metric]:
            self._reply(400, {"error": f"unsupported metric/language {metric}/{language}"})
            return
        if any("<<flaky>>" in t for t in texts):
            server: StubScorerServer = self.server.stub  # type: ignore[attr-defined]
            if server.note_flaky():
                self._reply(500, {"error": "injected transient failure"})
                return
        self._reply(200, {"scores": [score_text(metric, t) for t in texts]})


class StubScorerServer:
    """Threaded stub scorer; port 0 picks a free port."""

    def __init__(self, port: int = 0, host: str = "127.0.0.1"):
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.stub = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None
        self._flaky_seen = 0
        self._lock = threading.Lock()

    def note_flaky(self) -> bool:
        with self._lock:
            self._flaky_seen += 1
            return self._flaky_seen == 1

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubScorerServer":
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
