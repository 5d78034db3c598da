"""Provider-agnostic chat-completion access with deterministic record/replay.

Every agent role in the pipeline (chain extraction, question drafting,
blind evaluation, strategy reflection, rewriting, consistency checking)
goes through `complete`, so swapping the backend between a live provider,
a recorded transcript, and a scripted mock is enough to run the whole
pipeline offline and byte-reproducibly.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .errors import (
    ConfigurationError,
    PreconditionError,
    ReplayMissError,
    RetryableError,
    TranscriptError,
)

Message = tuple[str, str]  # (role, text); role in {system, user, assistant}

_ROLES = {"system", "user", "assistant"}


@dataclass(frozen=True)
class Attachment:
    """Image passed by content hash; bytes are resolved at send time."""

    content_hash: str
    media_type: str = "image/png"


@dataclass(frozen=True)
class Sampling:
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int | None = None


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    attachments: tuple[Attachment, ...] = ()
    sampling: Sampling = Sampling()
    tag: str = ""  # agent-role tag, used by scripted backends

    def __post_init__(self):
        if not any(role == "user" for role, _ in self.messages):
            raise PreconditionError("a chat request needs at least one user message")
        for role, _ in self.messages:
            if role not in _ROLES:
                raise PreconditionError(f"unknown message role {role!r}")

    def canonical(self) -> str:
        """Stable serialization used for hashing; key order is fixed."""
        payload = {
            "model_id": self.model_id,
            "messages": [[r, t] for r, t in self.messages],
            "attachments": [
                {"content_hash": a.content_hash, "media_type": a.media_type}
                for a in self.attachments
            ],
            "sampling": {
                "temperature": self.sampling.temperature,
                "max_tokens": self.sampling.max_tokens,
                "seed": self.sampling.seed,
            },
            "tag": self.tag,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def request_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def prompt_text(self) -> str:
        """All message text joined; what scripted backends inspect."""
        return "\n".join(text for _, text in self.messages)


@dataclass
class ChatResponse:
    text: str  # present even when empty: empty string != error
    usage: dict[str, int] = field(default_factory=dict)
    latency_s: float = 0.0
    provider_meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "usage": self.usage,
            "latency_s": self.latency_s,
            "provider_meta": self.provider_meta,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ChatResponse":
        return cls(
            text=obj["text"],
            usage=dict(obj.get("usage", {})),
            latency_s=float(obj.get("latency_s", 0.0)),
            provider_meta=dict(obj.get("provider_meta", {})),
        )


def request_to_json(req: ChatRequest) -> dict:
    return json.loads(req.canonical())


def request_from_json(obj: Mapping) -> ChatRequest:
    return ChatRequest(
        model_id=obj["model_id"],
        messages=tuple((r, t) for r, t in obj["messages"]),
        attachments=tuple(
            Attachment(a["content_hash"], a.get("media_type", "image/png"))
            for a in obj.get("attachments", [])
        ),
        sampling=Sampling(
            temperature=obj["sampling"]["temperature"],
            max_tokens=obj["sampling"]["max_tokens"],
            seed=obj["sampling"].get("seed"),
        ),
        tag=obj.get("tag", ""),
    )


@dataclass
class TranscriptEntry:
    request_hash: str
    request: ChatRequest
    response: ChatResponse
    timestamp: str = ""

    def to_json(self) -> dict:
        return {
            "request_hash": self.request_hash,
            "request": request_to_json(self.request),
            "response": self.response.to_json(),
            "timestamp": self.timestamp,
        }


class RateLimiter:
    """Token bucket; the only shared state between concurrent callers."""

    def __init__(self, rate_per_s: float, burst: int = 1):
        self._rate = rate_per_s
        self._capacity = max(1, burst)
        self._tokens = float(self._capacity)
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            time.sleep(wait)


class ProviderError(Exception):
    """Raised by transports; retryable says whether backoff-and-retry applies."""

    def __init__(self, message: str, retryable: bool):
        super().__init__(message)
        self.retryable = retryable


# --------------------------------------------------------------------------
# Backends
# --------------------------------------------------------------------------


class ScriptedBackend:
    """Returns canned responses keyed by the request's role tag.

    Scripts may be fixed strings or callables taking the ChatRequest, which
    lets tests key behaviour off prompt content (e.g. a marker token).
    """

    kind = "scripted"

    def __init__(self, scripts: Mapping[str, str | Callable[[ChatRequest], str]],
                 default: str | None = None):
        self._scripts = dict(scripts)
        self._default = default
        self.calls: list[ChatRequest] = []

    def send(self, request: ChatRequest) -> ChatResponse:
        self.calls.append(request)
        script = self._scripts.get(request.tag, self._default)
        if script is None:
            raise ConfigurationError(f"no script for request tag {request.tag!r}")
        text = script(request) if callable(script) else script
        return ChatResponse(text=text)

    def calls_for(self, tag: str) -> int:
        return sum(1 for r in self.calls if r.tag == tag)


class ReplayBackend:
    """Answers requests from a recorded transcript; misses are hard errors."""

    kind = "replay"

    def __init__(self, entries: Iterable[TranscriptEntry] = ()):
        self._by_hash: dict[str, ChatResponse] = {}
        for e in entries:
            self._by_hash[e.request_hash] = e.response

    def send(self, request: ChatRequest) -> ChatResponse:
        h = request.request_hash()
        if h not in self._by_hash:
            raise ReplayMissError(h)
        return self._by_hash[h]


@dataclass
class ProviderConfig:
    """One chat-completion provider; API key comes from the environment."""

    name: str
    base_url: str
    api_key_env: str
    rate_per_s: float = 1.0
    burst: int = 2


class LiveBackend:
    """Calls a real provider over an OpenAI-style chat-completions API.

    The HTTP transport is injectable so retry behaviour is testable without
    a network; the default transport uses httpx.
    """

    kind = "live"

    def __init__(self, provider: ProviderConfig,
                 transport: Callable[[ChatRequest], ChatResponse] | None = None,
                 resolve_attachment: Callable[[Attachment], bytes] | None = None):
        self.provider = provider
        self._transport = transport or self._http_transport
        self._resolve_attachment = resolve_attachment
        self._limiter = RateLimiter(provider.rate_per_s, provider.burst)
        self.network_calls = 0

    def send(self, request: ChatRequest) -> ChatResponse:
        self._limiter.acquire()
        self.network_calls += 1
        return self._transport(request)

    def _http_transport(self, request: ChatRequest) -> ChatResponse:
        import base64

        import httpx

        api_key = os.environ.get(self.provider.api_key_env, "")
        if not api_key:
            raise ConfigurationError(
                f"missing API key: set {self.provider.api_key_env} for provider {self.provider.name}"
            )
        messages = []
        for role, text in request.messages:
            messages.append({"role": role, "content": text})
        if request.attachments:
            if self._resolve_attachment is None:
                raise ConfigurationError("attachments present but no resolver configured")
            parts: list[dict] = [{"type": "text", "text": messages[-1]["content"]}]
            for att in request.attachments:
                data = base64.b64encode(self._resolve_attachment(att)).decode("ascii")
                parts.append({
                    "type": "image_url",
                    "image_url": {"url": f"data:{att.media_type};base64,{data}"},
                })
            messages[-1] = {"role": "user", "content": parts}
        payload = {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_tokens,
        }
        if request.sampling.seed is not None:
            payload["seed"] = request.sampling.seed
        started = time.monotonic()
        try:
            resp = httpx.post(
                f"{self.provider.base_url.rstrip('/')}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=120.0,
            )
        except httpx.HTTPError as e:
            raise ProviderError(str(e), retryable=True)
        if resp.status_code in (401, 403):
            raise ConfigurationError(f"provider auth failure ({resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderError(f"provider status {resp.status_code}", retryable=True)
        if resp.status_code != 200:
            raise ProviderError(f"provider status {resp.status_code}", retryable=False)
        body = resp.json()
        text = body["choices"][0]["message"]["content"] or ""
        usage = {k: int(v) for k, v in body.get("usage", {}).items() if isinstance(v, int)}
        return ChatResponse(
            text=text,
            usage=usage,
            latency_s=time.monotonic() - started,
            provider_meta={"id": body.get("id", "")},
        )


class CountingBackend:
    """Wrapper that counts sends, split by the inner backend's kind.

    Used to assert replay closure: a pipeline run against a transcript must
    show zero sends through a live backend.
    """

    def __init__(self, inner):
        self._inner = inner
        self.kind = inner.kind
        self.total = 0
        self.by_kind: dict[str, int] = {}
        self.by_tag: dict[str, int] = {}

    def send(self, request: ChatRequest) -> ChatResponse:
        self.total += 1
        self.by_kind[self._inner.kind] = self.by_kind.get(self._inner.kind, 0) + 1
        self.by_tag[request.tag] = self.by_tag.get(request.tag, 0) + 1
        return self._inner.send(request)

    @property
    def network_calls(self) -> int:
        return self.by_kind.get("live", 0)


class TranscriptRecorder:
    """Wrapper that passes requests through and records every exchange."""

    def __init__(self, inner):
        self._inner = inner
        self.kind = inner.kind
        self.entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    def send(self, request: ChatRequest) -> ChatResponse:
        response = self._inner.send(request)
        entry = TranscriptEntry(
            request_hash=request.request_hash(),
            request=request,
            response=response,
            timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
        )
        with self._lock:  # appends are serialized
            self.entries.append(entry)
        return response


# --------------------------------------------------------------------------
# The complete() operation
# --------------------------------------------------------------------------


def complete(request: ChatRequest, backend, retry_limit: int = 3,
             backoff_s: float = 1.0) -> ChatResponse:
    """Send one request through a backend with bounded retries.

    Only transient provider failures are retried; replay misses and auth or
    configuration problems surface immediately.
    """
    attempts = 0
    while True:
        try:
            return backend.send(request)
        except ProviderError as e:
            if not e.retryable:
                raise RetryableError(f"provider failure: {e}", attempts + 1)
            attempts += 1
            if attempts >= retry_limit:
                raise RetryableError(f"provider failure: {e}", attempts)
            time.sleep(backoff_s * (2 ** (attempts - 1)))


# --------------------------------------------------------------------------
# Transcript persistence: JSONL with a whole-file checksum trailer
# --------------------------------------------------------------------------


def record_transcript(entries: Iterable[TranscriptEntry], path: str | Path) -> Path:
    path = Path(path)
    lines = [json.dumps(e.to_json(), sort_keys=True, ensure_ascii=False) for e in entries]
    body = "".join(line + "\n" for line in lines)
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    trailer = json.dumps({"kind": "checksum", "sha256": digest})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(body + trailer + "\n", encoding="utf-8")
    return path


def load_transcript(path: str | Path) -> ReplayBackend:
    """Parse and verify a transcript file, returning a replay backend."""
    raw = Path(path).read_text(encoding="utf-8")
    lines = raw.splitlines()
    if not lines:
        raise TranscriptError("empty transcript file (missing checksum trailer)", 1)
    try:
        trailer = json.loads(lines[-1])
    except json.JSONDecodeError:
        raise TranscriptError("unreadable checksum trailer", len(lines))
    if trailer.get("kind") != "checksum":
        raise TranscriptError("missing checksum trailer", len(lines))
    body = "".join(line + "\n" for line in lines[:-1])
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if digest != trailer.get("sha256"):
        raise TranscriptError("checksum mismatch: transcript was modified", len(lines))
    entries = []
    for i, line in enumerate(lines[:-1], start=1):
        try:
            obj = json.loads(line)
            entries.append(
                TranscriptEntry(
                    request_hash=obj["request_hash"],
                    request=request_from_json(obj["request"]),
                    response=ChatResponse.from_json(obj["response"]),
                    timestamp=obj.get("timestamp", ""),
                )
            )
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise TranscriptError(f"corrupt transcript entry: {e}", i)
    return ReplayBackend(entries)


# --------------------------------------------------------------------------
# Role-aware gateway used by the agent modules
# --------------------------------------------------------------------------

# Deterministic roles default to temperature 0; generative ones to 0.7.
DEFAULT_ROLE_TEMPERATURES = {
    "chain_extractor": 0.0,
    "question_writer": 0.7,
    "evaluator": 0.0,
    "reflector": 0.7,
    "rewriter": 0.7,
    "checker": 0.0,
}


@dataclass
class RoleSettings:
    model_id: str
    temperature: float | None = None
    max_tokens: int = 1024


class Gateway:
    """Binds role settings + a backend; agents call `chat(role, ...)`."""

    def __init__(self, backend, roles: Mapping[str, RoleSettings] | None = None,
                 default_model: str = "scripted-model", retry_limit: int = 3,
                 backoff_s: float = 1.0):
        self.backend = backend
        self.roles = dict(roles or {})
        self.default_model = default_model
        self.retry_limit = retry_limit
        self.backoff_s = backoff_s

    def _settings(self, role: str) -> RoleSettings:
        if role in self.roles:
            return self.roles[role]
        return RoleSettings(
            model_id=self.default_model,
            temperature=DEFAULT_ROLE_TEMPERATURES.get(role, 0.0),
        )

    def chat(self, role: str, messages: Iterable[Message],
             attachments: Iterable[Attachment] = ()) -> ChatResponse:
        settings = self._settings(role)
        temp = settings.temperature
        if temp is None:
            temp = DEFAULT_ROLE_TEMPERATURES.get(role, 0.0)
        request = ChatRequest(
            model_id=settings.model_id,
            messages=tuple(messages),
            attachments=tuple(attachments),
            sampling=Sampling(temperature=temp, max_tokens=settings.max_tokens),
            tag=role,
        )
        return complete(request, self.backend, self.retry_limit, self.backoff_s)
