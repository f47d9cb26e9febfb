"""Chat-completion backends.

Every backend exposes ``complete(request) -> ChatResponse``. Two HTTP
providers cover OpenAI- and Anthropic-style APIs; the scripted and replay
providers are deterministic and make whole pipeline runs reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, NamedTuple, Optional, Protocol, Sequence

import httpx

log = logging.getLogger(__name__)

PROVIDERS = ("openai-compatible", "anthropic-compatible", "scripted", "replay")


class BackendError(RuntimeError):
    pass


class AuthError(BackendError):
    pass


class TransportError(BackendError):
    pass


class ScriptExhausted(BackendError):
    pass


class CassetteMiss(BackendError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    turns: tuple[tuple[str, str], ...]
    model_id: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 4096
    # routing labels (agent, scenario, arm); never sent over the wire
    meta: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.turns:
            raise ValueError("request needs at least one turn")
        for role, _ in self.turns:
            if role not in ("user", "assistant"):
                raise ValueError(f"unknown role {role!r}")
        if self.turns[-1][0] != "user":
            raise ValueError("last turn must come from the user")
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    def key(self) -> str:
        """Cassette key: hash of the prompt, turns and model."""
        blob = json.dumps(
            {"system_prompt": self.system_prompt, "turns": [list(t) for t in self.turns],
             "model_id": self.model_id},
            sort_keys=True, ensure_ascii=False,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "system_prompt": self.system_prompt,
            "turns": [list(t) for t in self.turns],
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = "stop"
    token_usage: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.finish_reason == "stop" and self.content is None:
            raise ValueError("normal completion without content")

    def to_dict(self) -> dict:
        return {
            "content": self.content,
            "finish_reason": self.finish_reason,
            "token_usage": list(self.token_usage) if self.token_usage else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ChatResponse":
        usage = data.get("token_usage")
        return cls(data["content"], data.get("finish_reason", "stop"), tuple(usage) if usage else None)


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


@dataclass(frozen=True)
class BackendConfig:
    provider: str = "scripted"
    base_url: Optional[str] = None
    api_key_env: str = "SYSTEMP_API_KEY"
    model_id: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    script_path: Optional[str] = None
    cassette_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.provider not in PROVIDERS:
            raise ValueError(f"unknown provider {self.provider!r}; expected one of {PROVIDERS}")

    @classmethod
    def from_env(cls, env: Optional[Mapping[str, str]] = None, **overrides) -> "BackendConfig":
        env = os.environ if env is None else env
        values = {
            "provider": env.get("SYSTEMP_PROVIDER", "scripted"),
            "base_url": env.get("SYSTEMP_BASE_URL"),
            "model_id": env.get("SYSTEMP_MODEL", ""),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


# fence handling

_FENCES = ("'''", "```")
_LANGUAGE_TAGS = {"sysml", "sysmlv2", "kerml", "json", "python", "text", "txt", "plaintext"}


class Extraction(NamedTuple):
    text: str
    fenced: bool


def extract_fenced(content: str) -> Extraction:
    """Payload between the first matched pair of ''' or ``` fences.

    Without a matched pair the whole content is returned, trimmed, with
    ``fenced`` False.
    """
    openings = sorted(
        (content.find(fence), fence) for fence in _FENCES if content.find(fence) >= 0
    )
    for start, fence in openings:
        stop = content.find(fence, start + len(fence))
        if stop < 0:
            continue
        payload = content[start + len(fence):stop]
        first, sep, rest = payload.partition("\n")
        if sep and first.strip().lower() in _LANGUAGE_TAGS:
            payload = rest
        return Extraction(payload.strip(), True)
    return Extraction(content.strip(), False)


# HTTP providers

_TRANSIENT = {408, 409, 425, 429, 500, 502, 503, 504, 529}


class _HttpBackend:
    path = ""

    def __init__(
        self,
        config: BackendConfig,
        *,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        env: Optional[Mapping[str, str]] = None,
    ):
        if not config.base_url:
            raise ValueError(f"{config.provider} provider needs a base_url")
        self.config = config
        self._client = httpx.Client(timeout=config.timeout, transport=transport)
        self._sleep = sleep
        self._env = os.environ if env is None else env

    def _api_key(self) -> str:
        key = self._env.get(self.config.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.config.api_key_env} is not set")
        return key

    def _headers(self, key: str) -> dict[str, str]:
        raise NotImplementedError

    def _body(self, request: ChatRequest) -> dict:
        raise NotImplementedError

    def _parse(self, data: dict) -> ChatResponse:
        raise NotImplementedError

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = self._api_key()
        url = self.config.base_url.rstrip("/") + self.path
        body = self._body(request)
        attempt = 0
        while True:
            try:
                resp = self._client.post(url, json=body, headers=self._headers(key))
            except httpx.TransportError as exc:
                failure = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"credentials rejected (HTTP {resp.status_code})")
                if resp.status_code < 400:
                    try:
                        return self._parse(resp.json())
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise BackendError(f"unexpected response body: {exc}") from exc
                if resp.status_code not in _TRANSIENT:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                failure = f"HTTP {resp.status_code}"
            if attempt >= self.config.max_retries:
                raise TransportError(f"{failure} after {attempt + 1} attempts")
            delay = 0.5 * 2 ** attempt
            log.warning("transient failure (%s); retrying in %.1fs", failure, delay)
            self._sleep(delay)
            attempt += 1


def _finish(reason: Optional[str]) -> str:
    if reason in ("stop", "end_turn", "stop_sequence"):
        return "stop"
    if reason in ("length", "max_tokens"):
        return "length"
    return reason or "stop"


class OpenAICompatibleBackend(_HttpBackend):
    path = "/chat/completions"

    def _headers(self, key: str) -> dict[str, str]:
        return {"Authorization": f"Bearer {key}"}

    def _body(self, request: ChatRequest) -> dict:
        messages = [{"role": "system", "content": request.system_prompt}]
        messages += [{"role": role, "content": content} for role, content in request.turns]
        return {
            "model": request.model_id or self.config.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    def _parse(self, data: dict) -> ChatResponse:
        choice = data["choices"][0]
        usage = data.get("usage")
        return ChatResponse(
            choice["message"].get("content") or "",
            _finish(choice.get("finish_reason")),
            (usage["prompt_tokens"], usage["completion_tokens"]) if usage else None,
        )


class AnthropicCompatibleBackend(_HttpBackend):
    path = "/v1/messages"

    def _headers(self, key: str) -> dict[str, str]:
        return {"x-api-key": key, "anthropic-version": "2023-06-01"}

    def _body(self, request: ChatRequest) -> dict:
        return {
            "model": request.model_id or self.config.model_id,
            "system": request.system_prompt,
            "messages": [{"role": role, "content": content} for role, content in request.turns],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    def _parse(self, data: dict) -> ChatResponse:
        text = "".join(block.get("text", "") for block in data["content"] if block.get("type") == "text")
        usage = data.get("usage")
        return ChatResponse(
            text,
            _finish(data.get("stop_reason")),
            (usage["input_tokens"], usage["output_tokens"]) if usage else None,
        )


# deterministic providers

_ERRORS = {"auth": AuthError, "transport": TransportError, "backend": BackendError}
_FILTERS = ("agent", "scenario", "arm")


class ScriptedBackend:
    """Canned responses keyed by agent role and per-key call count.

    Each script entry may filter on ``agent``, ``scenario`` and ``arm``
    (matched against the request's ``meta``) and supplies either a
    ``responses`` list (the n-th call gets item n), a single ``content``
    (restricted to one ``iteration`` when given, else repeated), or an
    ``error`` to raise (``auth``, ``transport`` or ``backend``). The most
    specific matching entry wins; ties go to the earliest entry.
    """

    def __init__(self, entries: Sequence[Mapping[str, Any]]):
        self.entries = [dict(e) for e in entries]
        for entry in self.entries:
            if sum(k in entry for k in ("responses", "content", "error")) != 1:
                raise ValueError(f"script entry needs exactly one of responses/content/error: {entry}")
        self._calls: dict[tuple, int] = {}
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    @classmethod
    def from_mapping(cls, script: Mapping[tuple[str, int], str]) -> "ScriptedBackend":
        """Build from ``{(agent, iteration): content}``."""
        return cls([{"agent": a, "iteration": i, "content": c} for (a, i), c in script.items()])

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = data["entries"] if isinstance(data, dict) else data
        return cls(entries)

    def _select(self, meta: Mapping[str, str], iteration: int):
        best, best_score = None, -1
        for entry in self.entries:
            if any(f in entry and entry[f] != meta.get(f) for f in _FILTERS):
                continue
            if "responses" in entry:
                if iteration > len(entry["responses"]):
                    continue
                pinned = True
            else:
                if "iteration" in entry and entry["iteration"] != iteration:
                    continue
                pinned = "iteration" in entry
            score = sum(f in entry for f in _FILTERS) * 2 + pinned
            if score > best_score:
                best, best_score = entry, score
        return best

    def complete(self, request: ChatRequest) -> ChatResponse:
        meta = dict(request.meta)
        key = tuple(meta.get(f) for f in _FILTERS)
        with self._lock:
            iteration = self._calls.get(key, 0) + 1
            self._calls[key] = iteration
            self.requests.append(request)
            entry = self._select(meta, iteration)
        if entry is None:
            raise ScriptExhausted(
                f"no scripted response for agent={meta.get('agent')!r} "
                f"scenario={meta.get('scenario')!r} arm={meta.get('arm')!r} call {iteration}"
            )
        if "error" in entry:
            raise _ERRORS[entry["error"]](f"scripted {entry['error']} failure")
        if "responses" in entry:
            return ChatResponse(entry["responses"][iteration - 1])
        return ChatResponse(entry["content"])


class ReplayBackend:
    """Serves recorded responses by request key; unknown requests raise."""

    def __init__(self, records: Sequence[Mapping[str, Any]]):
        self._by_key: dict[str, list[ChatResponse]] = {}
        for record in records:
            self._by_key.setdefault(record["key"], []).append(ChatResponse.from_dict(record["response"]))
        self._served: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "ReplayBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = request.key()
        responses = self._by_key.get(key)
        if not responses:
            raise CassetteMiss(f"no recording for request {key[:12]}")
        with self._lock:
            n = self._served.get(key, 0)
            self._served[key] = n + 1
        # identical requests replay in recorded order, then repeat the last
        return responses[min(n, len(responses) - 1)]


class RecordingBackend:
    """Wraps a backend and appends every exchange to a cassette file."""

    def __init__(self, inner: Backend, path):
        self.inner = inner
        self.path = Path(path)
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        with self._lock:
            self.records.append(
                {"key": request.key(), "request": request.to_dict(), "response": response.to_dict()}
            )
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            tmp.write_text(json.dumps(self.records, indent=2, ensure_ascii=False), encoding="utf-8")
            tmp.replace(self.path)
        return response


def make_backend(config: BackendConfig, **http_options) -> Backend:
    if config.provider == "openai-compatible":
        return OpenAICompatibleBackend(config, **http_options)
    if config.provider == "anthropic-compatible":
        return AnthropicCompatibleBackend(config, **http_options)
    if config.provider == "scripted":
        if not config.script_path:
            raise ValueError("scripted provider needs a script file")
        return ScriptedBackend.from_file(config.script_path)
    if not config.cassette_path:
        raise ValueError("replay provider needs a cassette file")
    return ReplayBackend.from_file(config.cassette_path)


def complete(backend_or_config, request: ChatRequest) -> ChatResponse:
    """One-shot helper; stateful providers should be built once with :func:`make_backend`."""
    backend = backend_or_config
    if isinstance(backend_or_config, BackendConfig):
        backend = make_backend(backend_or_config)
    return backend.complete(request)
