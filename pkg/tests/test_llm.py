import json
import logging

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from systemp.llm import (
    AnthropicCompatibleBackend,
    AuthError,
    BackendConfig,
    BackendError,
    CassetteMiss,
    ChatRequest,
    ChatResponse,
    OpenAICompatibleBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    ScriptExhausted,
    TransportError,
    complete,
    extract_fenced,
    make_backend,
)

KEY = "sk-test-secret-value"
ENV = {"SYSTEMP_API_KEY": KEY}


def req(text="hi", **meta):
    return ChatRequest("system", (("user", text),), "m", meta=meta)


# scripted provider

def test_scripted_canned_echo():
    backend = ScriptedBackend.from_mapping({("writer", 1): "'''package P {}'''"})
    assert backend.complete(req(agent="writer")).content == "'''package P {}'''"


def test_scripted_exhausted():
    backend = ScriptedBackend.from_mapping({("writer", 1): "x"})
    backend.complete(req(agent="writer"))
    with pytest.raises(ScriptExhausted):
        backend.complete(req(agent="writer"))


def test_scripted_responses_per_key_and_specificity():
    backend = ScriptedBackend([
        {"agent": "writer", "content": "generic"},
        {"agent": "writer", "scenario": "a", "responses": ["a1", "a2"]},
    ])
    assert [backend.complete(req(agent="writer", scenario="a")).content for _ in range(3)] == \
        ["a1", "a2", "generic"]
    # a different scenario has its own call counter
    assert backend.complete(req(agent="writer", scenario="b")).content == "generic"


def test_scripted_errors():
    backend = ScriptedBackend([{"agent": "writer", "error": "transport"}, {"agent": "x", "error": "auth"}])
    with pytest.raises(TransportError):
        backend.complete(req(agent="writer"))
    with pytest.raises(AuthError):
        backend.complete(req(agent="x"))


def test_scripted_entry_validation():
    with pytest.raises(ValueError):
        ScriptedBackend([{"agent": "writer", "content": "a", "error": "auth"}])


def test_scripted_from_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"entries": [{"content": "ok"}]}))
    backend = make_backend(BackendConfig(provider="scripted", script_path=str(path)))
    assert complete(backend, req()).content == "ok"
    assert backend.requests[0].turns == (("user", "hi"),)


# requests

@pytest.mark.parametrize("kwargs", [
    {"turns": ()},
    {"turns": (("system", "x"),)},
    {"turns": (("user", "a"), ("assistant", "b"))},
    {"temperature": 3},
    {"max_output_tokens": 0},
])
def test_request_validation(kwargs):
    args = {"system_prompt": "s", "turns": (("user", "a"),), **kwargs}
    with pytest.raises(ValueError):
        ChatRequest(**args)


def test_request_key_ignores_meta_and_temperature():
    a = ChatRequest("s", (("user", "a"),), "m", 0.0, meta={"agent": "x"})
    b = ChatRequest("s", (("user", "a"),), "m", 0.7)
    assert a.key() == b.key()
    assert a.key() != ChatRequest("s", (("user", "a"),), "other").key()


# record / replay

def test_record_then_replay(tmp_path):
    cassette = tmp_path / "tape.json"
    recorder = RecordingBackend(ScriptedBackend([{"responses": ["one", "two"]}]), cassette)
    first, second = recorder.complete(req("q")), recorder.complete(req("q"))
    replay = make_backend(BackendConfig(provider="replay", cassette_path=str(cassette)))
    assert replay.complete(req("q")) == first
    assert replay.complete(req("q")) == second
    assert replay.complete(req("q")) == second
    with pytest.raises(CassetteMiss):
        replay.complete(req("unknown"))


def test_response_round_trip():
    response = ChatResponse("x", "length", (3, 4))
    assert ChatResponse.from_dict(response.to_dict()) == response


# HTTP providers

def _http(cls, handler, *, retries=3, env=ENV, base_url="https://llm.example/v1"):
    sleeps = []
    config = BackendConfig(provider="openai-compatible", base_url=base_url,
                           model_id="gpt-test", max_retries=retries)
    backend = cls(config, transport=httpx.MockTransport(handler), sleep=sleeps.append, env=env)
    return backend, sleeps


def _openai_ok(text="done"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}, "finish_reason": "stop"}],
                                     "usage": {"prompt_tokens": 5, "completion_tokens": 2}})


def test_openai_request_shape():
    seen = []

    def handler(request):
        seen.append(request)
        return _openai_ok()

    backend, _ = _http(OpenAICompatibleBackend, handler)
    response = backend.complete(req("hello"))
    assert response == ChatResponse("done", "stop", (5, 2))
    body = json.loads(seen[0].content)
    assert seen[0].url.path == "/v1/chat/completions"
    assert seen[0].headers["authorization"] == f"Bearer {KEY}"
    assert body["messages"] == [{"role": "system", "content": "system"},
                                {"role": "user", "content": "hello"}]
    assert body["model"] == "m"


def test_anthropic_request_shape():
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json={"content": [{"type": "text", "text": "hey"}],
                                         "stop_reason": "max_tokens",
                                         "usage": {"input_tokens": 1, "output_tokens": 9}})

    backend, _ = _http(AnthropicCompatibleBackend, handler, base_url="https://llm.example")
    assert backend.complete(req()) == ChatResponse("hey", "length", (1, 9))
    body = json.loads(seen[0].content)
    assert seen[0].url.path == "/v1/messages"
    assert seen[0].headers["x-api-key"] == KEY
    assert body["system"] == "system"


def test_transient_failures_retry_with_backoff():
    codes = iter([503, 429])

    def handler(request):
        code = next(codes, None)
        return _openai_ok() if code is None else httpx.Response(code)

    backend, sleeps = _http(OpenAICompatibleBackend, handler)
    assert backend.complete(req()).content == "done"
    assert sleeps == [0.5, 1.0]


def test_transport_error_after_retries():
    def handler(request):
        raise httpx.ConnectError("refused")

    backend, sleeps = _http(OpenAICompatibleBackend, handler, retries=2)
    with pytest.raises(TransportError):
        backend.complete(req())
    assert len(sleeps) == 2


def test_auth_rejected_without_retry():
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(401)

    backend, sleeps = _http(OpenAICompatibleBackend, handler)
    with pytest.raises(AuthError):
        backend.complete(req())
    assert len(calls) == 1 and sleeps == []


def test_missing_key():
    backend, _ = _http(OpenAICompatibleBackend, lambda r: _openai_ok(), env={})
    with pytest.raises(AuthError, match="SYSTEMP_API_KEY"):
        backend.complete(req())


def test_client_error_is_not_retried():
    backend, sleeps = _http(OpenAICompatibleBackend, lambda r: httpx.Response(400, text="bad"))
    with pytest.raises(BackendError):
        backend.complete(req())
    assert sleeps == []


def test_api_key_never_logged(caplog):
    codes = iter([500, 401])
    backend, _ = _http(OpenAICompatibleBackend, lambda r: httpx.Response(next(codes)))
    with caplog.at_level(logging.DEBUG):
        with pytest.raises(AuthError) as err:
            backend.complete(req())
    assert KEY not in caplog.text
    assert KEY not in str(err.value)


def test_config_from_env():
    config = BackendConfig.from_env({"SYSTEMP_PROVIDER": "replay", "SYSTEMP_MODEL": "m1"},
                                    cassette_path="c.json", model_id=None)
    assert (config.provider, config.model_id, config.cassette_path) == ("replay", "m1", "c.json")
    with pytest.raises(ValueError):
        BackendConfig(provider="nope")
    with pytest.raises(ValueError):
        make_backend(BackendConfig(provider="openai-compatible"))


# fences

@pytest.mark.parametrize("content, text, fenced", [
    ("'''package P {}'''", "package P {}", True),
    ("Here:\n```sysml\npackage P {}\n```\nthanks", "package P {}", True),
    ("```json\n{\"a\": 1}\n```", '{"a": 1}', True),
    ("no fences at all ", "no fences at all", False),
    ("''' unclosed", "''' unclosed", False),
    ("```\nfirst\n``` then '''second'''", "first", True),
])
def test_extract_fenced(content, text, fenced):
    assert extract_fenced(content) == (text, fenced)


@given(st.text(alphabet=st.characters(blacklist_characters="'`"), max_size=80))
def test_extract_fenced_recovers_payload(payload):
    assert extract_fenced(f"'''{payload}'''").text == payload.strip()
    once = extract_fenced(payload).text
    assert extract_fenced(once).text == once
