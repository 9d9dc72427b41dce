"""The HTTP service: POST /ner, POST /nli, GET /healthz.

Stateless, one inference per request; concurrent requests are handled by
the threading server and the backends are pure functions, so there is no
cross-request state. Malformed JSON or missing/empty fields get 400,
over-length input 413, unknown routes 404.
"""

from __future__ import annotations

import argparse
import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import SidecarConfig
from .ner import load_ner_backend
from .nli import load_nli_backend

logger = logging.getLogger(__name__)


class _Handler(BaseHTTPRequestHandler):
    config: SidecarConfig
    run_ner = None
    run_nli = None

    def log_message(self, fmt, *args):  # quiet by default
        logger.debug(fmt, *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    def do_GET(self):
        if self.path == "/healthz":
            body = b"ok"
            self.send_response(200)
            self.send_header("Content-Type", "text/plain")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self._send_error(404, f"unknown path {self.path}")

    def _read_payload(self) -> dict | None:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError:
            self._send_error(400, "body is not valid JSON")
            return None
        if not isinstance(payload, dict):
            self._send_error(400, "body must be a JSON object")
            return None
        return payload

    def do_POST(self):
        if self.path == "/ner":
            self._handle_ner()
        elif self.path == "/nli":
            self._handle_nli()
        else:
            self._send_error(404, f"unknown path {self.path}")

    def _require_text(self, payload: dict, field: str) -> str | None:
        value = payload.get(field)
        if not isinstance(value, str) or not value:
            self._send_error(400, f"field {field!r} must be a non-empty string")
            return None
        if len(value) > self.config.max_input_chars:
            self._send_error(413, f"field {field!r} exceeds {self.config.max_input_chars} characters")
            return None
        return value

    def _handle_ner(self):
        payload = self._read_payload()
        if payload is None:
            return
        text = self._require_text(payload, "text")
        if text is None:
            return
        self._send_json(200, {"entities": type(self).run_ner(text)})

    def _handle_nli(self):
        payload = self._read_payload()
        if payload is None:
            return
        premise = self._require_text(payload, "premise")
        if premise is None:
            return
        hypothesis = self._require_text(payload, "hypothesis")
        if hypothesis is None:
            return
        self._send_json(200, type(self).run_nli(premise, hypothesis))


def create_server(config: SidecarConfig) -> ThreadingHTTPServer:
    handler = type(
        "ConfiguredHandler",
        (_Handler,),
        {
            "config": config,
            "run_ner": staticmethod(load_ner_backend(config.ner_model)),
            "run_nli": staticmethod(load_nli_backend(config.nli_model)),
        },
    )
    return ThreadingHTTPServer((config.host, config.port), handler)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="model-sidecar", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8750)
    parser.add_argument("--ner-model", default="rule:en-small")
    parser.add_argument("--nli-model", default="rule:lexical")
    parser.add_argument("--max-chars", type=int, default=4096)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    config = SidecarConfig(
        ner_model=args.ner_model,
        nli_model=args.nli_model,
        host=args.host,
        port=args.port,
        max_input_chars=args.max_chars,
    )
    server = create_server(config)
    logger.info("serving on %s:%d", config.host, server.server_port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
