"""Single pathway to language-model capabilities.

Every other module gets chat completions and text embeddings through the
Gateway, never through a provider SDK directly. Four interchangeable
backends make the rest of the engine deterministic under test:

* live    - OpenAI-compatible HTTP endpoints
* record  - live, with every response appended to a cassette file
* replay  - cassette only, never touches the network
* mock    - scripted completions plus a seeded hash-projection embedder

A cassette is a JSONL file of {fingerprint, request, response} rows. The
fingerprint is a stable hash of the canonicalized request, so replay is
insensitive to map-key ordering and byte-identical to the recording.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import CassetteMiss, GatewayError, GatewayTimeout, ProviderError

_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call: ordered messages plus sampling params."""

    messages: tuple[tuple[str, str], ...]
    model: str
    temperature: float = 0.0
    top_p: float = 0.0
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for role, _content in self.messages:
            if role not in _ROLES:
                raise ValueError(f"unknown role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 <= self.top_p <= 1.0:
            raise ValueError("top_p must be in [0, 1]")

    def payload(self) -> dict:
        body = {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body


def fingerprint(kind: str, body: dict) -> str:
    """Stable hash of a request; invariant under dict key order."""
    canon = json.dumps({"kind": kind, **body}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# --- deterministic mock embedder --------------------------------------------

_TOKEN_RE = re.compile(r"[\w']+")


@lru_cache(maxsize=65536)
def _token_vector(token: str, dim: int, seed: int) -> tuple[float, ...]:
    # One pseudo-random direction per token, derived entirely from the
    # token hash so it is stable across processes and runs.
    out = []
    counter = 0
    while len(out) < dim:
        h = hashlib.blake2b(
            f"{seed}:{token}:{counter}".encode("utf-8"), digest_size=32
        ).digest()
        for i in range(0, 32, 4):
            u = int.from_bytes(h[i : i + 4], "little")
            out.append(u / 2**31 - 1.0)  # uniform in [-1, 1)
            if len(out) == dim:
                break
        counter += 1
    return tuple(out)


def hash_embedding(text: str, dim: int = 384, seed: int = 0) -> list[float]:
    """Seeded pseudo-random projection of token hashes, unit-normalized.

    Texts sharing tokens get correlated vectors; the same text always maps
    to the same vector. Good enough to stand in for a sentence encoder in
    deterministic tests.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    acc = [0.0] * dim
    for tok in tokens:
        tv = _token_vector(tok, dim, seed)
        for i in range(dim):
            acc[i] += tv[i]
    if not tokens:
        acc[0] = 1.0
    norm = math.sqrt(sum(v * v for v in acc))
    return [v / norm for v in acc]


# --- backends ----------------------------------------------------------------


class Backend:
    """Interface every backend implements."""

    def chat(self, request: ChatRequest) -> str:
        raise NotImplementedError

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LiveBackend(Backend):
    """OpenAI-compatible HTTP client with bounded retries.

    Retries (3 attempts, exponential backoff) apply to transport failures
    and 5xx responses only; a 4xx is surfaced immediately as ProviderError.
    """

    def __init__(self, endpoint: str, api_key: str, timeout_s: float = 60.0):
        import httpx

        self._client = httpx.Client(
            base_url=endpoint.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout_s,
        )

    def _post(self, path: str, body: dict) -> dict:
        import httpx

        last: Exception | None = None
        for attempt in range(3):
            try:
                resp = self._client.post(path, json=body)
            except httpx.TimeoutException as exc:
                last = GatewayTimeout(str(exc))
            except httpx.TransportError as exc:
                last = GatewayError(str(exc))
            else:
                if resp.status_code < 400:
                    return resp.json()
                if 400 <= resp.status_code < 500:
                    raise ProviderError(resp.status_code, resp.text)
                last = ProviderError(resp.status_code, resp.text)
            if attempt < 2:
                time.sleep(0.5 * 2**attempt)
        assert last is not None
        raise last

    def chat(self, request: ChatRequest) -> str:
        data = self._post("/chat/completions", request.payload())
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError) as exc:
            raise ProviderError(200, f"malformed completion payload: {exc}")

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            return []
        data = self._post("/embeddings", {"model": model, "input": list(texts)})
        rows = sorted(data["data"], key=lambda d: d["index"])
        return [row["embedding"] for row in rows]

    def close(self) -> None:
        self._client.close()


class MockBackend(Backend):
    """Scripted completions plus the deterministic hash embedder.

    Rules are (pattern, response) pairs checked in order against the last
    user message; `response` may be a string or a callable taking the full
    request. An optional FIFO queue takes precedence over rules, which is
    convenient when a test wants call-by-call control.
    """

    def __init__(
        self,
        rules: Iterable[tuple[str, str | Callable[[ChatRequest], str]]] = (),
        default: str = "",
        embed_dim: int = 384,
        seed: int = 0,
    ):
        self.rules = [(re.compile(p, re.S), r) for p, r in rules]
        self.default = default
        self.embed_dim = embed_dim
        self.seed = seed
        self.queue: list[str] = []
        self.chat_calls: list[ChatRequest] = []
        self.embed_calls: list[list[str]] = []

    def push(self, *responses: str) -> None:
        self.queue.extend(responses)

    def chat(self, request: ChatRequest) -> str:
        self.chat_calls.append(request)
        if self.queue:
            return self.queue.pop(0)
        prompt = next(
            (c for r, c in reversed(request.messages) if r == "user"),
            request.messages[-1][1],
        )
        for pattern, response in self.rules:
            if pattern.search(prompt):
                return response(request) if callable(response) else response
        return self.default

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        self.embed_calls.append(list(texts))
        return [hash_embedding(t, self.embed_dim, self.seed) for t in texts]


class RecordingBackend(Backend):
    """Wraps another backend and appends every exchange to a cassette."""

    def __init__(self, inner: Backend, cassette_path: str | Path):
        self.inner = inner
        self.path = Path(cassette_path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _append(self, fp: str, request: dict, response: object) -> None:
        row = json.dumps(
            {"fingerprint": fp, "request": request, "response": response},
            ensure_ascii=False,
        )
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(row + "\n")

    def chat(self, request: ChatRequest) -> str:
        body = request.payload()
        text = self.inner.chat(request)
        self._append(fingerprint("chat", body), {"kind": "chat", **body}, text)
        return text

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        body = {"model": model, "texts": list(texts)}
        vectors = self.inner.embed(model, texts)
        self._append(fingerprint("embed", body), {"kind": "embed", **body}, vectors)
        return vectors

    def close(self) -> None:
        self.inner.close()


class ReplayBackend(Backend):
    """Serves recorded responses only; has no network client at all."""

    def __init__(self, cassette_path: str | Path):
        self.path = Path(cassette_path)
        self.entries: dict[str, object] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    row = json.loads(line)
                    self.entries[row["fingerprint"]] = row["response"]

    def chat(self, request: ChatRequest) -> str:
        fp = fingerprint("chat", request.payload())
        if fp not in self.entries:
            raise CassetteMiss(fp)
        return self.entries[fp]  # type: ignore[return-value]

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        fp = fingerprint("embed", {"model": model, "texts": list(texts)})
        if fp not in self.entries:
            raise CassetteMiss(fp)
        return self.entries[fp]  # type: ignore[return-value]


class _TokenBucket:
    def __init__(self, rate: float):
        self.rate = rate
        self.tokens = 1.0
        self.stamp = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        with self.lock:
            now = time.monotonic()
            self.tokens = min(1.0, self.tokens + (now - self.stamp) * self.rate)
            self.stamp = now
            if self.tokens < 1.0:
                wait = (1.0 - self.tokens) / self.rate
                time.sleep(wait)
                self.tokens = 0.0
                self.stamp = time.monotonic()
            else:
                self.tokens -= 1.0


@dataclass
class GatewayStats:
    chat_calls: int = 0
    embed_calls: int = 0


class Gateway:
    """Front door for chat and embeddings, safe for concurrent callers.

    Applies config defaults (greedy decoding: temperature 0, top_p 0),
    funnels bursts through a token bucket, and delegates to the configured
    backend. `last_fingerprint` is kept for provenance tracking.
    """

    def __init__(
        self,
        backend: Backend,
        chat_model: str = "gpt-4",
        embed_model: str = "text-embedding-small",
        temperature: float = 0.0,
        top_p: float = 0.0,
        max_tokens: int | None = None,
        requests_per_second: float = 0.0,
    ):
        self.backend = backend
        self.chat_model = chat_model
        self.embed_model = embed_model
        self.temperature = temperature
        self.top_p = top_p
        self.max_tokens = max_tokens
        self.stats = GatewayStats()
        self._bucket = _TokenBucket(requests_per_second)
        self._local = threading.local()

    @property
    def last_fingerprint(self) -> str:
        return getattr(self._local, "fp", "")

    def chat(self, messages: Sequence[tuple[str, str]], **overrides) -> str:
        request = ChatRequest(
            messages=tuple(messages),
            model=overrides.get("model", self.chat_model),
            temperature=overrides.get("temperature", self.temperature),
            top_p=overrides.get("top_p", self.top_p),
            max_tokens=overrides.get("max_tokens", self.max_tokens),
        )
        self._bucket.acquire()
        self._local.fp = fingerprint("chat", request.payload())
        self.stats.chat_calls += 1
        return self.backend.chat(request)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            return []
        self._bucket.acquire()
        self.stats.embed_calls += 1
        return self.backend.embed(self.embed_model, list(texts))

    def close(self) -> None:
        self.backend.close()


def gateway_from_config(cfg) -> Gateway:
    """Build a Gateway from a GatewayConfig (see config.py)."""
    import os

    mode = cfg.mode
    if mode == "mock":
        backend: Backend = MockBackend(
            rules=[(p, r) for p, r in cfg.mock_rules],
            embed_dim=cfg.embed_dim,
            seed=cfg.mock_seed,
        )
    elif mode == "replay":
        if not cfg.cassette:
            raise GatewayError("replay mode requires a cassette path")
        backend = ReplayBackend(cfg.cassette)
    elif mode in ("live", "record"):
        key = os.environ.get(cfg.api_key_env, "")
        if not key:
            raise GatewayError(f"API key env var {cfg.api_key_env} is not set")
        backend = LiveBackend(cfg.endpoint, key, cfg.timeout_s)
        if mode == "record":
            if not cfg.cassette:
                raise GatewayError("record mode requires a cassette path")
            backend = RecordingBackend(backend, cfg.cassette)
    else:
        raise GatewayError(f"unknown gateway mode {mode!r}")
    return Gateway(
        backend,
        chat_model=cfg.chat_model,
        embed_model=cfg.embed_model,
        temperature=cfg.temperature,
        top_p=cfg.top_p,
        max_tokens=cfg.max_tokens,
        requests_per_second=cfg.requests_per_second,
    )
