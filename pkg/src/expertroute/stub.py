"""Loopback chat-completions stub server for tests and offline demos."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable


class ChatStub:
    """Serve ``POST /v1/chat/completions`` on 127.0.0.1 with an ephemeral port.

    ``fail_first`` lists status codes returned, in order, before normal replies.
    ``reply`` maps the decoded request body to the assistant message text.
    ``max_concurrency`` records the peak number of requests being handled at once.
    """

    def __init__(
        self,
        reply: Callable[[dict], str] | None = None,
        fail_first: list[int] | None = None,
        delay: float = 0.0,
    ) -> None:
        self.reply = reply or (lambda body: body["messages"][-1]["content"])
        self.fail_plan = list(fail_first or [])
        self.delay = delay
        self.requests: list[dict] = []
        self.statuses: list[int] = []
        self.concurrent = 0
        self.max_concurrency = 0
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        assert self._server is not None
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def _handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:
                pass

            def do_POST(self) -> None:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub._lock:
                    stub.concurrent += 1
                    stub.max_concurrency = max(stub.max_concurrency, stub.concurrent)
                    stub.requests.append(body)
                    status = stub.fail_plan.pop(0) if stub.fail_plan else 200
                    stub.statuses.append(status)
                try:
                    if stub.delay:
                        time.sleep(stub.delay)
                    if status != 200:
                        payload = {"error": {"message": f"injected {status}"}}
                    else:
                        payload = {
                            "id": f"stub-{len(stub.requests)}",
                            "object": "chat.completion",
                            "model": body.get("model"),
                            "choices": [{"index": 0, "finish_reason": "stop",
                                         "message": {"role": "assistant", "content": stub.reply(body)}}],
                        }
                    data = json.dumps(payload).encode()
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                finally:
                    with stub._lock:
                        stub.concurrent -= 1

        return Handler

    def start(self) -> "ChatStub":
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "ChatStub":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
