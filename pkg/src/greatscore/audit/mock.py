"""Scriptable in-process server speaking the prediction wire protocol.

Used by the test suite and for offline demos::

    with MockServer(lambda inp: [0.9, 0.1]) as server:
        query_predictions(EndpointConfig(server.url), payloads)
"""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional, Sequence


class MockServer:
    """Echo server with failure and latency schedules.

    ``responder`` maps one instance's ``input`` list to its ``probs`` (a
    list or a dict of named classes). ``failures`` is a queue of HTTP
    status codes served, in order, before normal answers resume.
    ``latency`` is seconds per request, or a callable of the input.
    """

    def __init__(self, responder: Callable, failures: Sequence[int] = (),
                 latency=0.0, retry_after: Optional[float] = None):
        self.responder = responder
        self.failures = list(failures)
        self.latency = latency
        self.retry_after = retry_after
        self.hits = 0
        self.request_times: list = []
        self.headers: list = []
        self._lock = threading.Lock()
        self._server = None
        self._thread = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/predict"

    def _handle(self, handler: BaseHTTPRequestHandler):
        with self._lock:
            self.hits += 1
            self.request_times.append(time.monotonic())
            self.headers.append(dict(handler.headers))
            status = self.failures.pop(0) if self.failures else 200
        length = int(handler.headers.get("Content-Length", 0))
        body = json.loads(handler.rfile.read(length) or b"{}")
        if status != 200:
            handler.send_response(status)
            if self.retry_after is not None:
                handler.send_header("Retry-After", str(self.retry_after))
            handler.send_header("Content-Length", "0")
            handler.end_headers()
            return
        preds = []
        for inst in body.get("instances", []):
            delay = self.latency(inst["input"]) if callable(self.latency) else self.latency
            if delay:
                time.sleep(delay)
            preds.append({"id": inst["id"], "probs": self.responder(inst["input"])})
        data = json.dumps({"predictions": preds}).encode()
        handler.send_response(200)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(data)))
        handler.end_headers()
        handler.wfile.write(data)

    def start(self) -> "MockServer":
        owner = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                owner._handle(self)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
