"""Chat-completion clients.

``HttpChatClient`` talks to an OpenAI-style ``/chat/completions`` endpoint
and asks for per-token log-probabilities when needed. ``ScriptedClient``
replays canned completions keyed by a fingerprint of the message list,
which is what every test and fixture run uses. ``RecordingClient`` wraps
any client and captures its traffic in the scripted fixture format.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence

import httpx

from .errors import CapabilityError, FixtureMissing, RequestTimeout, TransportError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")

TokenSpan = tuple[int, int, float]


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


def system(content: str) -> ChatMessage:
    return ChatMessage("system", content)


def user(content: str) -> ChatMessage:
    return ChatMessage("user", content)


def assistant(content: str) -> ChatMessage:
    return ChatMessage("assistant", content)


@dataclass(frozen=True)
class Completion:
    text: str
    token_spans: tuple[TokenSpan, ...] | None = None

    def __post_init__(self) -> None:
        if self.token_spans is not None:
            check_spans(self.text, self.token_spans)


def check_spans(text: str, spans: Sequence[TokenSpan]) -> None:
    """Spans must tile ``text`` exactly, in order, with logprob <= 0."""
    pos = 0
    for start, end, lp in spans:
        if start != pos or end < start:
            raise ValueError(f"token spans not contiguous at char {pos}")
        if lp > 0 or math.isnan(lp):
            raise ValueError(f"logprob {lp} is not <= 0")
        pos = end
    if pos != len(text):
        raise ValueError("token spans do not cover the text")


@dataclass(frozen=True)
class GenParams:
    temperature: float = 0.0
    seed: int | None = None
    max_tokens: int = 1024
    want_logprobs: bool = False

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class ChatClient(Protocol):
    def complete(self, messages: Sequence[ChatMessage], params: GenParams) -> Completion: ...


def fingerprint(messages: Sequence[ChatMessage]) -> str:
    """SHA-256 over the ordered (role, content) pairs."""
    payload = json.dumps([[m.role, m.content] for m in messages], ensure_ascii=False,
                         separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# -- scripted replay ----------------------------------------------------------------


@dataclass(frozen=True)
class FixtureEntry:
    fingerprint: str
    text: str
    token_spans: tuple[TokenSpan, ...] | None = None
    seed: int | None = None
    # optional, for humans reading the fixture file
    note: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"fingerprint": self.fingerprint, "seed": self.seed, "text": self.text,
                             "token_spans": [list(s) for s in self.token_spans]
                             if self.token_spans is not None else None}
        if self.note is not None:
            d["note"] = self.note
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FixtureEntry":
        spans = d.get("token_spans")
        return cls(d["fingerprint"], d["text"],
                   tuple((int(a), int(b), float(c)) for a, b, c in spans) if spans is not None else None,
                   d.get("seed"), d.get("note"))


def load_fixtures(path: str | Path) -> list[FixtureEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(FixtureEntry.from_dict(json.loads(line)))
    return entries


def dump_fixtures(entries: Iterable[FixtureEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


class ScriptedClient:
    """Deterministic replay: a pure function of (fingerprint, seed).

    Lookup tries the exact seed first, then a seed-agnostic entry.
    """

    def __init__(self, entries: Iterable[FixtureEntry]):
        self._table: dict[tuple[str, int | None], FixtureEntry] = {}
        for e in entries:
            self._table[(e.fingerprint, e.seed)] = e

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedClient":
        return cls(load_fixtures(path))

    def __len__(self) -> int:
        return len(self._table)

    def complete(self, messages: Sequence[ChatMessage], params: GenParams) -> Completion:
        fp = fingerprint(messages)
        entry = self._table.get((fp, params.seed)) or self._table.get((fp, None))
        if entry is None:
            raise FixtureMissing(fp, params.seed)
        if params.want_logprobs and entry.token_spans is None:
            raise CapabilityError("scripted fixture carries no token logprobs")
        return Completion(entry.text, entry.token_spans if params.want_logprobs else None)


class FunctionClient:
    """Adapts a plain callable ``(messages, params) -> Completion``."""

    def __init__(self, fn: Callable[[Sequence[ChatMessage], GenParams], Completion]):
        self.fn = fn

    def complete(self, messages: Sequence[ChatMessage], params: GenParams) -> Completion:
        return self.fn(list(messages), params)


class RecordingClient:
    """Wraps a client and records each exchange as a fixture entry."""

    def __init__(self, inner: ChatClient, keep_seed: bool = False):
        self.inner = inner
        self.keep_seed = keep_seed
        self.entries: dict[tuple[str, int | None], FixtureEntry] = {}
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[ChatMessage], params: GenParams) -> Completion:
        # always ask for logprobs so the recorded entry can serve both kinds of request
        rec_params = GenParams(params.temperature, params.seed, params.max_tokens, True)
        try:
            comp = self.inner.complete(messages, rec_params)
        except CapabilityError:
            comp = self.inner.complete(messages, params)
        seed = params.seed if self.keep_seed else None
        last = messages[-1].content if messages else ""
        entry = FixtureEntry(fingerprint(messages), comp.text, comp.token_spans, seed,
                             note=last[:80])
        with self._lock:
            self.entries[(entry.fingerprint, seed)] = entry
        if params.want_logprobs:
            return comp
        return Completion(comp.text, None)

    def dump(self, path: str | Path) -> None:
        dump_fixtures(sorted(self.entries.values(), key=lambda e: (e.fingerprint, e.seed or -1)), path)


# -- networked client ------------------------------------------------------------------


def spans_from_tokens(text: str, tokens: Sequence[tuple[str, float]]) -> tuple[TokenSpan, ...]:
    spans = []
    pos = 0
    for tok, lp in tokens:
        spans.append((pos, pos + len(tok), min(float(lp), 0.0)))
        pos += len(tok)
    if "".join(t for t, _ in tokens) != text:
        raise CapabilityError("backend token stream does not reproduce the completion text")
    return tuple(spans)


_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass
class HttpChatClient:
    """OpenAI-style chat-completions client with bounded retries."""

    base_url: str
    model: str
    api_key: str | None = None
    timeout: float = 60.0
    max_attempts: int = 3
    backoff: float = 0.5
    max_in_flight: int = 4
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    _sem: threading.BoundedSemaphore = field(init=False, repr=False)
    _http: httpx.Client = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._sem = threading.BoundedSemaphore(self.max_in_flight)
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._http = httpx.Client(base_url=self.base_url.rstrip("/"), headers=headers,
                                  timeout=self.timeout, transport=self.transport)

    @classmethod
    def from_env(cls, model: str, **kw: Any) -> "HttpChatClient":
        url = os.environ.get("THINKER_LLM_URL")
        if not url:
            raise TransportError("THINKER_LLM_URL is not set")
        return cls(url, model, os.environ.get("THINKER_LLM_KEY"), **kw)

    def _payload(self, messages: Sequence[ChatMessage], params: GenParams) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        if params.want_logprobs:
            body["logprobs"] = True
        return body

    def complete(self, messages: Sequence[ChatMessage], params: GenParams) -> Completion:
        body = self._payload(messages, params)
        last_exc: Exception | None = None
        with self._sem:
            for attempt in range(self.max_attempts):
                if attempt:
                    self.sleep(self.backoff * 2 ** (attempt - 1))
                try:
                    resp = self._http.post("/chat/completions", json=body)
                except httpx.TimeoutException as exc:
                    last_exc = RequestTimeout(str(exc) or "request timed out")
                    continue
                except httpx.TransportError as exc:
                    last_exc = TransportError(str(exc))
                    continue
                if resp.status_code in _RETRY_STATUS:
                    last_exc = TransportError(f"HTTP {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                return self._parse(resp.json(), params)
        assert last_exc is not None
        log.warning("giving up after %d attempts: %s", self.max_attempts, last_exc)
        raise last_exc

    def _parse(self, data: dict[str, Any], params: GenParams) -> Completion:
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc
        if not params.want_logprobs:
            return Completion(text)
        content = ((choice.get("logprobs") or {}).get("content")) if isinstance(choice, dict) else None
        if not content:
            raise CapabilityError("backend returned no token logprobs")
        return Completion(text, spans_from_tokens(text, [(t["token"], t["logprob"]) for t in content]))

    def close(self) -> None:
        self._http.close()
