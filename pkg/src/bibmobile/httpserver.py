"""HTTP transport for the service: POST /soap plus the /healthz liveness probe.

Request threads run concurrently over the immutable active snapshot; shutdown
stops accepting new connections and waits for in-flight requests to finish.
"""

from __future__ import annotations

import logging
import signal
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .service import ServiceState

log = logging.getLogger("bibmobile.httpserver")


class SoapRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    timeout = 30  # idle keep-alive connections must not stall shutdown

    def _reply(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/healthz":
            self._reply(200, b"ok", "text/plain; charset=utf-8")
        else:
            self._reply(404, b"not found", "text/plain; charset=utf-8")

    def do_POST(self):
        if self.path != "/soap":
            self._reply(404, b"not found", "text/plain; charset=utf-8")
            return
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length)
        status, payload = self.server.state.dispatch(body)
        self._reply(status, payload, "text/xml; charset=utf-8")

    def log_message(self, format, *args):
        # Method, path and status only; request bodies (which carry tokens)
        # never reach the log.
        log.info("%s - %s", self.address_string(), format % args)


class SoapHttpServer(ThreadingHTTPServer):
    """One state, many request threads; close() waits for in-flight requests."""

    daemon_threads = False
    block_on_close = True

    def __init__(self, address: tuple[str, int], state: ServiceState):
        super().__init__(address, SoapRequestHandler)
        self.state = state


def make_server(state: ServiceState, port: int, host: str = "127.0.0.1") -> SoapHttpServer:
    return SoapHttpServer((host, port), state)


def serve_until_signalled(server: SoapHttpServer) -> None:
    """Serve until SIGTERM/SIGINT; finish in-flight requests before returning."""

    def request_shutdown(signum, frame):
        # shutdown() blocks until serve_forever exits, so it must run off the
        # signal-handling (main) thread.
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, request_shutdown)
    signal.signal(signal.SIGINT, request_shutdown)
    try:
        server.serve_forever()
    finally:
        server.server_close()
