import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from structmed.llm import (
    CachingProvider,
    CompletionParams,
    HTTPStatusError,
    HttpChatProvider,
    MissingFixtureError,
    MockProvider,
    ProviderConfig,
    ResponseCache,
    TransportError,
    cached_complete,
    fixture_key,
)

PARAMS = CompletionParams(max_new_tokens=64)


def test_mock_fixture_lookup():
    mock = MockProvider()
    mock.add_fixture("p", PARAMS, "A")
    assert mock.complete("p", PARAMS) == "A"


def test_mock_missing_fixture():
    with pytest.raises(MissingFixtureError):
        MockProvider().complete("p", PARAMS)


def test_mock_rejects_empty_prompt():
    with pytest.raises(ValueError):
        MockProvider({}).complete("", PARAMS)


def test_stop_sequence_truncation():
    params = CompletionParams(max_new_tokens=64, stop_sequences=("### END",))
    mock = MockProvider()
    mock.add_fixture("p", params, "x ### END y")
    assert mock.complete("p", params) == "x "


def test_params_validation():
    with pytest.raises(ValueError):
        CompletionParams(max_new_tokens=0)
    with pytest.raises(ValueError):
        CompletionParams(max_new_tokens=1, temperature=-0.1)


def test_fixture_key_sensitive_to_params():
    p1 = CompletionParams(max_new_tokens=64, temperature=0.0)
    p2 = CompletionParams(max_new_tokens=64, temperature=0.7)
    assert fixture_key("p", p1) != fixture_key("p", p2)


class _StubHandler(BaseHTTPRequestHandler):
    captured: list = []
    status = 200
    fail_times = 0
    _failures = 0

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).captured.append(body)
        if type(self)._failures < type(self).fail_times:
            type(self)._failures += 1
            self.send_response(500)
            self.end_headers()
            self.wfile.write(b"boom")
            return
        self.send_response(type(self).status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        if type(self).status < 300:
            payload = {"choices": [{"message": {"content": "echoed: " + body["messages"][0]["content"]}}]}
            self.wfile.write(json.dumps(payload).encode())
        else:
            self.wfile.write(b"nope")

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    handler = type("Handler", (_StubHandler,), {"captured": [], "status": 200,
                                                "fail_times": 0, "_failures": 0})
    server = HTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", handler
    server.shutdown()


def _provider(url, retries=2):
    return HttpChatProvider(
        ProviderConfig(endpoint=url, model="test-model", retries=retries, backoff_seconds=0.0)
    )


def test_http_request_body_carries_model_and_temperature(stub_server):
    url, handler = stub_server
    text = _provider(url).complete("hello", CompletionParams(max_new_tokens=32))
    assert text == "echoed: hello"
    body = handler.captured[0]
    assert body["model"] == "test-model"
    assert body["temperature"] == 0.0
    assert body["max_tokens"] == 32


def test_http_4xx_raises_without_retry(stub_server):
    url, handler = stub_server
    handler.status = 400
    with pytest.raises(HTTPStatusError):
        _provider(url).complete("hello", PARAMS)
    assert len(handler.captured) == 1  # no retries on 4xx


def test_http_5xx_retried_then_succeeds(stub_server):
    url, handler = stub_server
    handler.fail_times = 2
    assert _provider(url, retries=2).complete("hello", PARAMS) == "echoed: hello"
    assert len(handler.captured) == 3


def test_http_transport_error_after_retries():
    provider = _provider("http://127.0.0.1:9/nothing", retries=1)
    with pytest.raises(TransportError):
        provider.complete("hello", PARAMS)


def test_cache_round_trip(tmp_path):
    cache = ResponseCache(tmp_path)
    key = ResponseCache.key("m", "p", PARAMS)
    cache.put(key, "p", "v")
    assert cache.get(key) == "v"


def test_cached_complete_skips_provider_on_hit(tmp_path):
    cache = ResponseCache(tmp_path)
    mock = MockProvider()
    mock.add_fixture("p", PARAMS, "A")
    provider = CachingProvider(mock, cache)
    assert provider.complete("p", PARAMS) == "A"
    assert provider.complete("p", PARAMS) == "A"
    assert len(mock.call_log) == 1


def test_cache_key_changes_with_temperature(tmp_path):
    p1 = CompletionParams(max_new_tokens=64, temperature=0.0)
    p2 = CompletionParams(max_new_tokens=64, temperature=0.5)
    assert ResponseCache.key("m", "p", p1) != ResponseCache.key("m", "p", p2)


def test_cache_counts_distinct_prompts(tmp_path):
    cache = ResponseCache(tmp_path)
    mock = MockProvider(fallback=lambda prompt, params: prompt.upper())
    for prompt in ("a", "b", "c"):
        cached_complete(cache, mock, prompt, PARAMS)
    assert len(cache) == 3
