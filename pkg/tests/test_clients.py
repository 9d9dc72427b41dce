import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from utilbench.clients import (
    ChatRequest,
    EntityCategory,
    GazetteerNerClient,
    HttpChatClient,
    HttpNerClient,
    HttpNliClient,
    NliLabel,
    NliVerdict,
    OracleChatClient,
    OracleKnowledge,
    ScriptedChatClient,
    TableNliClient,
)
from utilbench.clients.base import BaseChatClient, RetryPolicy
from utilbench.corpus import DatasetKind, Passage, PassageOrigin, Question
from utilbench.errors import (
    ConfigurationError,
    ContractError,
    EmptyOutputError,
    ScriptError,
    TransportError,
)
from utilbench.prompts import (
    JudgeForm,
    JudgmentType,
    PromptOrder,
    Requirement,
    render_judge_prompt,
    render_qa_prompt,
)


@pytest.fixture
def stub_server():
    """A configurable local HTTP server; yields (base_url, state dict)."""
    state = {"handler": None, "requests": []}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length) or b"{}")
            state["requests"].append((self.path, payload))
            status, response = state["handler"](self.path, payload)
            body = json.dumps(response).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", state
    server.shutdown()


def _completion(text):
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 5, "completion_tokens": 2},
    }


QUESTION = Question(
    id="q1",
    text="who led the inquiry",
    gold_answers=("Persona Vex",),
    ground_truth_evidence_ids=("gt1",),
    dataset_kind=DatasetKind.FQA,
)
GT_PASSAGE = Passage(id="gt1", text="Persona Vex led the inquiry.", origin=PassageOrigin.GROUND_TRUTH)
NOISE = Passage(id="n1", text="Nothing relevant here.", origin=PassageOrigin.HRNP)


def _knowledge():
    knowledge = OracleKnowledge()
    knowledge.register(QUESTION.text, QUESTION.gold_answers, [GT_PASSAGE.text])
    return knowledge


class TestChatRequest:
    def test_temperature_range(self):
        with pytest.raises(ContractError):
            ChatRequest(user_message="x", temperature=2.5)

    def test_empty_message_rejected(self):
        with pytest.raises(ContractError):
            ChatRequest(user_message="")


class TestScriptedChatClient:
    def test_scripted_response(self):
        client = ScriptedChatClient.from_prompts({"prompt one": "Yes"})
        assert client.chat(ChatRequest(user_message="prompt one")).text == "Yes"

    def test_unscripted_strict_errors(self):
        client = ScriptedChatClient.from_prompts({"prompt one": "Yes"})
        with pytest.raises(ScriptError) as excinfo:
            client.chat(ChatRequest(user_message="something else"))
        assert "no scripted response" in str(excinfo.value)

    def test_sequence_consumed_in_order(self):
        client = ScriptedChatClient.from_prompts({"p": ["first", "second"]})
        request = ChatRequest(user_message="p")
        assert client.chat(request).text == "first"
        assert client.chat(request).text == "second"
        assert client.chat(request).text == "second"

    def test_empty_completion_error(self):
        client = ScriptedChatClient.from_prompts({"p": ""})
        with pytest.raises(EmptyOutputError):
            client.chat(ChatRequest(user_message="p"))

    def test_non_strict_default(self):
        client = ScriptedChatClient(strict=False, default_response="maybe")
        assert client.chat(ChatRequest(user_message="anything")).text == "maybe"


class TestHttpChatClient:
    def test_retry_on_429_then_success(self, stub_server):
        base_url, state = stub_server
        calls = {"n": 0}

        def handler(path, payload):
            calls["n"] += 1
            if calls["n"] <= 2:
                return 429, {"error": "rate limited"}
            return 200, _completion("recovered")

        state["handler"] = handler
        client = HttpChatClient(
            f"{base_url}/v1/chat/completions",
            retry=RetryPolicy(max_attempts=3, base_delay=0.001, jitter=False),
            sleep=lambda _d: None,
        )
        response = client.chat(ChatRequest(user_message="hello"))
        assert response.text == "recovered"
        assert calls["n"] == 3
        (entry,) = client.request_log.entries()
        assert entry.retries == 2
        assert entry.outcome == "ok"

    def test_retries_exhausted(self, stub_server):
        base_url, state = stub_server
        state["handler"] = lambda path, payload: (503, {"error": "down"})
        client = HttpChatClient(
            f"{base_url}/v1/chat/completions",
            retry=RetryPolicy(max_attempts=3, base_delay=0.001, jitter=False),
            sleep=lambda _d: None,
        )
        with pytest.raises(TransportError):
            client.chat(ChatRequest(user_message="hello"))
        (entry,) = client.request_log.entries()
        assert entry.outcome == "error"
        assert entry.retries == 2

    def test_configuration_error_no_retry(self, stub_server):
        base_url, state = stub_server
        calls = {"n": 0}

        def handler(path, payload):
            calls["n"] += 1
            return 400, {"error": "bad request"}

        state["handler"] = handler
        client = HttpChatClient(f"{base_url}/v1/chat/completions", sleep=lambda _d: None)
        with pytest.raises(ConfigurationError):
            client.chat(ChatRequest(user_message="hello"))
        assert calls["n"] == 1

    def test_wire_format_fields(self, stub_server):
        base_url, state = stub_server
        state["handler"] = lambda path, payload: (200, _completion("ok"))
        client = HttpChatClient(f"{base_url}/v1/chat/completions")
        response = client.chat(
            ChatRequest(
                user_message="hello",
                system_message="be brief",
                temperature=0.7,
                max_output_tokens=64,
                model_name="judge-1",
            )
        )
        assert response.token_usage == (5, 2)
        path, payload = state["requests"][0]
        assert payload["model"] == "judge-1"
        assert payload["temperature"] == 0.7
        assert payload["max_tokens"] == 64
        assert payload["messages"][0] == {"role": "system", "content": "be brief"}
        assert payload["messages"][1] == {"role": "user", "content": "hello"}


class TestConcurrencyBound:
    def test_limiter_caps_overlap(self):
        class SlowClient(BaseChatClient):
            def _send(self, request):
                time.sleep(0.03)
                return "ok", None

        client = SlowClient(max_in_flight=2)
        with ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(
                lambda i: client.chat(ChatRequest(user_message=f"p{i}")), range(8)
            ))
        assert len(client.request_log) == 8
        assert client.request_log.max_overlap() <= 2


class TestOracleChatClient:
    def test_pointwise(self):
        client = OracleChatClient(_knowledge())
        prompt = render_judge_prompt(
            JudgeForm.POINTWISE, JudgmentType.UTILITY, Requirement.NONE,
            PromptOrder.QUESTION_FIRST, QUESTION, [GT_PASSAGE],
        )
        assert client.chat(ChatRequest(user_message=prompt)).text == "Yes"
        prompt = render_judge_prompt(
            JudgeForm.POINTWISE, JudgmentType.UTILITY, Requirement.NONE,
            PromptOrder.QUESTION_FIRST, QUESTION, [NOISE],
        )
        assert client.chat(ChatRequest(user_message=prompt)).text == "No"

    def test_pairwise_prefers_ground_truth(self):
        client = OracleChatClient(_knowledge())
        prompt = render_judge_prompt(
            JudgeForm.PAIRWISE, JudgmentType.UTILITY, Requirement.NONE,
            PromptOrder.QUESTION_FIRST, QUESTION, [NOISE, GT_PASSAGE],
        )
        assert client.chat(ChatRequest(user_message=prompt)).text == "Passage-2"

    def test_listwise_set_and_rank(self):
        client = OracleChatClient(_knowledge())
        prompt = render_judge_prompt(
            JudgeForm.LISTWISE_SET, JudgmentType.UTILITY, Requirement.NONE,
            PromptOrder.QUESTION_FIRST, QUESTION, [NOISE, GT_PASSAGE],
        )
        assert client.chat(ChatRequest(user_message=prompt)).text == "My selection: Passage-2"
        prompt = render_judge_prompt(
            JudgeForm.LISTWISE_RANK, JudgmentType.UTILITY, Requirement.NONE,
            PromptOrder.QUESTION_FIRST, QUESTION, [NOISE, GT_PASSAGE],
        )
        assert client.chat(ChatRequest(user_message=prompt)).text == "Passage-2 > Passage-1"

    def test_qa_oracle(self):
        client = OracleChatClient(_knowledge())
        prompt = render_qa_prompt(DatasetKind.FQA, QUESTION, [GT_PASSAGE, NOISE])
        assert client.chat(ChatRequest(user_message=prompt)).text == "Persona Vex"
        prompt = render_qa_prompt(DatasetKind.FQA, QUESTION, [])
        assert client.chat(ChatRequest(user_message=prompt)).text == "unknown"

    def test_unregistered_question_errors(self):
        client = OracleChatClient(OracleKnowledge())
        prompt = render_qa_prompt(DatasetKind.FQA, QUESTION, [])
        with pytest.raises(ScriptError):
            client.chat(ChatRequest(user_message=prompt))


class TestGazetteerNer:
    def test_location_span(self):
        client = GazetteerNerClient({"Paris": "GPE"})
        (span,) = client.ner("Paris is nice")
        assert span.surface == "Paris"
        assert span.category is EntityCategory.LOCATION
        assert (span.char_start, span.char_end) == (0, 5)

    def test_empty_gazetteer(self):
        assert GazetteerNerClient({}).ner("nothing here") == []

    def test_longest_surface_wins_overlap(self):
        client = GazetteerNerClient({"New York": "GPE", "York": "GPE"})
        spans = client.ner("New York is large")
        assert [s.surface for s in spans] == ["New York"]

    def test_unknown_label_maps_to_other(self, caplog):
        client = GazetteerNerClient({"Paris": "MYSTERY"})
        with caplog.at_level("WARNING"):
            (span,) = client.ner("Paris")
        assert span.category is EntityCategory.OTHER
        assert "unknown entity label" in caplog.text


class TestTableNli:
    def test_table_entry(self):
        client = TableNliClient({("p", "h"): NliLabel.CONTRADICTION})
        verdict = client.nli("p", "h")
        assert verdict.label is NliLabel.CONTRADICTION
        assert abs(sum(verdict.scores) - 1.0) <= 1e-9

    def test_identity_convention(self):
        client = TableNliClient({})
        assert client.nli("same text", "same text").label is NliLabel.ENTAILMENT

    def test_untabled_strict_errors(self):
        with pytest.raises(ScriptError):
            TableNliClient({}).nli("p", "h")

    def test_verdict_argmax_enforced(self):
        with pytest.raises(ContractError):
            NliVerdict(label=NliLabel.ENTAILMENT, scores=(0.1, 0.8, 0.1))


class TestHttpSidecarClients:
    def test_ner_roundtrip(self, stub_server):
        base_url, state = stub_server

        def handler(path, payload):
            assert path == "/ner"
            text = payload["text"]
            pos = text.find("Paris")
            return 200, {"entities": [
                {"surface": "Paris", "label": "GPE", "start": pos, "end": pos + 5}
            ]}

        state["handler"] = handler
        (span,) = HttpNerClient(base_url).ner("I saw Paris today")
        assert span.category is EntityCategory.LOCATION
        assert span.char_start == 6

    def test_ner_span_slice_mismatch_rejected(self, stub_server):
        base_url, state = stub_server
        state["handler"] = lambda path, payload: (200, {"entities": [
            {"surface": "Paris", "label": "GPE", "start": 0, "end": 5}
        ]})
        with pytest.raises(ContractError):
            HttpNerClient(base_url).ner("London calling")

    def test_nli_roundtrip(self, stub_server):
        base_url, state = stub_server
        state["handler"] = lambda path, payload: (200, {
            "label": "contradiction", "scores": [0.02, 0.95, 0.03]
        })
        verdict = HttpNliClient(base_url).nli("p", "h")
        assert verdict.label is NliLabel.CONTRADICTION
        assert verdict.scores == (0.02, 0.95, 0.03)

    def test_nli_unreachable(self):
        client = HttpNliClient("http://127.0.0.1:1")
        with pytest.raises(TransportError):
            client.nli("p", "h")
