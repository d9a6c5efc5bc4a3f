"""Shared fixtures: batch builders and a local OpenAI-shaped mock server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from divproxy import Answer, SampleBatch


def make_batch(*element_sets, temperature: float = 0.7, prompt_id: str = "p0", question_id: str = "q0") -> SampleBatch:
    samples = tuple(
        Answer(frozenset(str(e) for e in elements), raw_text=" ".join(str(e) for e in sorted(elements)))
        for elements in element_sets
    )
    return SampleBatch(samples=samples, prompt_id=prompt_id, question_id=question_id, temperature=temperature)


class MockOpenAiServer:
    """Local chat + embeddings endpoint with scriptable behavior.

    ``chat_reply`` maps a request payload to the completion text; the default
    echoes a counter so successive calls differ. ``fail_first`` makes the
    first N requests return HTTP 500 (for retry tests).
    """

    def __init__(self, chat_reply=None, embed_dim: int = 4, fail_first: int = 0):
        self.requests: list[dict] = []
        self.chat_reply = chat_reply or (lambda payload, count: f"The answer is ({'ABCD'[count % 4]}).")
        self.embed_dim = embed_dim
        self.fail_first = fail_first
        self._count = 0
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                with server._lock:
                    server.requests.append({"path": self.path, "payload": payload})
                    count = server._count
                    server._count += 1
                    if server.fail_first > 0:
                        server.fail_first -= 1
                        self.send_response(500)
                        self.end_headers()
                        self.wfile.write(b"boom")
                        return
                if self.path.endswith("/chat/completions"):
                    body = {"choices": [{"message": {"content": server.chat_reply(payload, count)}}]}
                elif self.path.endswith("/embeddings"):
                    texts = payload["input"]
                    body = {
                        "data": [
                            {"embedding": [float(len(t) + i + j) for j in range(server.embed_dim)]}
                            for i, t in enumerate(texts)
                        ]
                    }
                else:
                    self.send_response(404)
                    self.end_headers()
                    return
                raw = json.dumps(body).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def mock_server():
    with MockOpenAiServer() as server:
        yield server
