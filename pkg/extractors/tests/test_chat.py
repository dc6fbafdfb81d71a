import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from cinebench.captions import (BatchRequest, ChatRequest, FrameRef,
                                ResponseSchema, read_batch_responses,
                                write_batch_requests)

from cinextract.chat import chat_complete
from cinextract.config import CHAT_ENDPOINT_ENV, ExtractorConfig

VALID_MDVL = json.dumps({"scene_logic": 4, "casting_logic": 4, "act_logic": 3,
                         "spat_logic": 3, "reasoning": "looks coherent"})


class CannedHandler(BaseHTTPRequestHandler):
    """Echo server: scriptable per-request-id behaviour for retry tests."""

    script: dict = {}
    hits: dict = {}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        request_id = body["request_id"]
        cls = type(self)
        cls.hits[request_id] = cls.hits.get(request_id, 0) + 1
        plan = cls.script.get(request_id, {})
        if plan.get("http_error") and cls.hits[request_id] <= plan.get(
                "error_times", 10 ** 9):
            self.send_response(500)
            self.end_headers()
            return
        malformed_until = plan.get("malformed_until", 0)
        if cls.hits[request_id] <= malformed_until:
            text = "sorry, I cannot produce JSON today"
        elif plan.get("fenced"):
            text = f"```json\n{VALID_MDVL}\n```"
        else:
            text = plan.get("text", f"echo:{request_id}")
        payload = json.dumps({"text": text}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def echo_server(monkeypatch):
    CannedHandler.script = {}
    CannedHandler.hits = {}
    server = HTTPServer(("127.0.0.1", 0), CannedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    monkeypatch.setenv(CHAT_ENDPOINT_ENV,
                       f"http://127.0.0.1:{server.server_port}/chat")
    yield CannedHandler
    server.shutdown()
    thread.join(timeout=5)


def caption_request(request_id):
    return BatchRequest(request_id, "caption_stage1", ChatRequest(
        system_text="sys", user_text="user",
        attachments=(FrameRef("c1", 0),),
        expected_schema=ResponseSchema.FREE_TEXT))


def mdvl_request(request_id):
    return BatchRequest(request_id, "mdvl", ChatRequest(
        system_text="sys", user_text="user",
        expected_schema=ResponseSchema.MDVL_JSON))


def run_batch(tmp_path, requests):
    req_file = tmp_path / "requests.jsonl"
    resp_file = tmp_path / "responses.jsonl"
    req_file.write_text(write_batch_requests(requests), encoding="utf-8")
    failed = chat_complete(req_file, resp_file, ExtractorConfig())
    return failed, read_batch_responses(resp_file.read_text(encoding="utf-8"))


class TestChatComplete:
    def test_all_request_ids_covered(self, echo_server, tmp_path):
        requests = [caption_request(f"s1:c{i}") for i in range(5)]
        failed, responses = run_batch(tmp_path, requests)
        assert failed == 0
        assert set(responses) == {r.request_id for r in requests}
        assert all(r.status == "OK" for r in responses.values())
        assert responses["s1:c2"].text == "echo:s1:c2"

    def test_fenced_json_passed_through_verbatim(self, echo_server, tmp_path):
        echo_server.script = {"mdvl:s": {"fenced": True}}
        _, responses = run_batch(tmp_path, [mdvl_request("mdvl:s")])
        assert responses["mdvl:s"].text.startswith("```json")

    def test_malformed_judge_reply_retried(self, echo_server, tmp_path):
        echo_server.script = {"mdvl:s": {"malformed_until": 2, "fenced": False,
                                         "text": VALID_MDVL}}
        failed, responses = run_batch(tmp_path, [mdvl_request("mdvl:s")])
        assert failed == 0
        assert echo_server.hits["mdvl:s"] == 3  # two malformed, one good
        assert responses["mdvl:s"].text == VALID_MDVL

    def test_persistent_malformed_capped_and_passed_through(self, echo_server,
                                                            tmp_path):
        echo_server.script = {"mdvl:s": {"malformed_until": 10 ** 9}}
        failed, responses = run_batch(tmp_path, [mdvl_request("mdvl:s")])
        assert failed == 0
        assert echo_server.hits["mdvl:s"] == 4  # initial try + 3 retries
        assert responses["mdvl:s"].status == "OK"  # core counts the failure

    def test_caption_requests_not_retried(self, echo_server, tmp_path):
        echo_server.script = {"s1:c0": {"text": "not json and that is fine"}}
        failed, responses = run_batch(tmp_path, [caption_request("s1:c0")])
        assert failed == 0
        assert echo_server.hits["s1:c0"] == 1

    def test_http_error_marks_failed_batch_continues(self, echo_server, tmp_path):
        echo_server.script = {"s1:c1": {"http_error": True}}
        requests = [caption_request("s1:c0"), caption_request("s1:c1"),
                    caption_request("s1:c2")]
        failed, responses = run_batch(tmp_path, requests)
        assert failed == 1
        assert responses["s1:c1"].status == "FAILED"
        assert responses["s1:c0"].status == "OK"
        assert responses["s1:c2"].status == "OK"

    def test_missing_endpoint_raises(self, tmp_path, monkeypatch):
        monkeypatch.delenv(CHAT_ENDPOINT_ENV, raising=False)
        req_file = tmp_path / "requests.jsonl"
        req_file.write_text(write_batch_requests([caption_request("x")]))
        with pytest.raises(RuntimeError):
            chat_complete(req_file, tmp_path / "out.jsonl", ExtractorConfig())
