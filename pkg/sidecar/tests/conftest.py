"""Adapters that let one contract suite run against both the in-process
mocks from the harness's clients module and the live HTTP sidecar.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request

import pytest

from model_sidecar.config import SidecarConfig
from model_sidecar.server import create_server

from utilbench.clients import GazetteerNerClient, TableNliClient, verdict_to_wire

MOCK_GAZETTEER = {
    "Paris": "GPE",
    "London": "GPE",
    "1987": "DATE",
    "Marie Curie": "PERSON",
    "Acme Corp": "ORG",
}


class MockAdapter:
    """Wire-shaped responses from the clients module's deterministic mocks."""

    name = "mock"
    supports_http_errors = False

    def __init__(self):
        self._ner = GazetteerNerClient(MOCK_GAZETTEER)
        self._nli = TableNliClient(strict=False)

    def post_ner(self, text):
        return 200, self._ner.wire_payload(text)

    def post_nli(self, premise, hypothesis):
        return 200, verdict_to_wire(self._nli.nli(premise, hypothesis))


class LiveAdapter:
    """Raw HTTP against a running sidecar."""

    name = "live"
    supports_http_errors = True

    def __init__(self, base_url):
        self.base_url = base_url

    def _post(self, path, payload, raw_body=None):
        body = raw_body if raw_body is not None else json.dumps(payload).encode("utf-8")
        request = urllib.request.Request(
            f"{self.base_url}{path}", data=body,
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(request, timeout=10) as response:
                return response.status, json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            return exc.code, json.loads(exc.read().decode("utf-8") or "{}")

    def post_ner(self, text):
        return self._post("/ner", {"text": text})

    def post_nli(self, premise, hypothesis):
        return self._post("/nli", {"premise": premise, "hypothesis": hypothesis})

    def post_raw(self, path, raw_body):
        return self._post(path, None, raw_body=raw_body)

    def get(self, path):
        try:
            with urllib.request.urlopen(f"{self.base_url}{path}", timeout=10) as response:
                return response.status, response.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read().decode("utf-8")


@pytest.fixture(scope="session")
def live_server():
    config = SidecarConfig(port=0)
    server = create_server(config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", config
    server.shutdown()


@pytest.fixture(scope="session")
def live_adapter(live_server):
    base_url, _ = live_server
    return LiveAdapter(base_url)


@pytest.fixture(scope="session")
def mock_adapter():
    return MockAdapter()


@pytest.fixture(params=["mock", "live"])
def adapter(request, mock_adapter, live_adapter):
    return mock_adapter if request.param == "mock" else live_adapter
