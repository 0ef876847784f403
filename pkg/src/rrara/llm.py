"""Chat-completion reviewer and its transports.

Replay fixture format: a UTF-8 text file made of length-prefixed records,
each header on its own line followed by exactly ``n`` bytes of payload and a
newline::

    >>> request <n>
    <prompt bytes>
    <<< reply <n> <latency seconds>
    <reply bytes>
    <<< error <n> <latency seconds>
    <error message bytes>

Every request record is followed by one reply or error record. Lines
starting with ``#`` between records are comments. A retried call shows up as
two consecutive pairs.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

import httpx

from .reflector import KEEP, ReflectionContext, ReflectionVerdict, build_prompt, parse_verdict
from .world import ConfigError

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "RRARA_LLM_API_KEY"


class TransportError(Exception):
    def __init__(self, message: str, latency: float = 0.0):
        super().__init__(message)
        self.latency = latency


class ReplayMismatch(TransportError):
    pass


@dataclass(frozen=True)
class Reply:
    text: str
    latency: float


class Transport(Protocol):
    def complete(self, prompt: str) -> Reply: ...


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    temperature: float = 0.0
    timeout: float = 20.0
    api_key_env: str = DEFAULT_KEY_ENV

    @classmethod
    def from_mapping(cls, data: dict) -> "EndpointConfig":
        missing = [k for k in ("base_url", "model") if not data.get(k)]
        if missing:
            raise ConfigError(f"endpoint.{missing[0]}", "required")
        known = {k: data[k] for k in ("base_url", "model", "temperature", "timeout", "api_key_env") if k in data}
        return cls(**known)


class HttpTransport:
    """POSTs to ``{base_url}/chat/completions`` in the OpenAI wire format."""

    def __init__(self, config: EndpointConfig, client: Optional[httpx.Client] = None):
        key = os.environ.get(config.api_key_env)
        if not key:
            raise ConfigError("api_key_env", f"environment variable {config.api_key_env} is not set")
        self.config = config
        self._headers = {"Authorization": f"Bearer {key}"}
        self._client = client or httpx.Client(timeout=config.timeout)

    def complete(self, prompt: str) -> Reply:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        start = time.perf_counter()
        try:
            resp = self._client.post(url, json=body, headers=self._headers, timeout=self.config.timeout)
            resp.raise_for_status()
            text = resp.json()["choices"][0]["message"]["content"]
        except httpx.TimeoutException as exc:
            raise TransportError(f"timeout: {exc}", time.perf_counter() - start) from exc
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}", time.perf_counter() - start) from exc
        return Reply(text or "", time.perf_counter() - start)


def _write_record(fh, header: str, payload: str) -> None:
    data = payload.encode("utf-8")
    fh.write(f"{header.format(n=len(data))}\n".encode("utf-8"))
    fh.write(data)
    fh.write(b"\n")


class RecordingTransport:
    """Wraps a live transport and appends every exchange to a fixture file."""

    def __init__(self, inner: Transport, path: str | Path):
        self.inner = inner
        self.path = Path(path)

    def complete(self, prompt: str) -> Reply:
        with self.path.open("ab") as fh:
            _write_record(fh, ">>> request {n}", prompt)
            try:
                reply = self.inner.complete(prompt)
            except TransportError as exc:
                _write_record(fh, "<<< error {n} " + f"{exc.latency:.3f}", str(exc))
                raise
            _write_record(fh, "<<< reply {n} " + f"{reply.latency:.3f}", reply.text)
        return reply


def read_fixture(path: str | Path) -> list[tuple[str, str, str, float]]:
    """Parse a replay fixture into ``(request, kind, payload, latency)`` tuples."""
    raw = Path(path).read_bytes()
    pos = 0
    records: list[tuple[str, list[str], str]] = []
    while pos < len(raw):
        end = raw.find(b"\n", pos)
        if end < 0:
            raise ValueError(f"{path}: truncated header at byte {pos}")
        header = raw[pos:end].decode("utf-8")
        pos = end + 1
        if not header.strip() or header.startswith("#"):
            continue
        parts = header.split()
        if len(parts) < 3 or parts[0] not in (">>>", "<<<"):
            raise ValueError(f"{path}: bad record header {header!r}")
        n = int(parts[2])
        payload = raw[pos:pos + n]
        if len(payload) != n or raw[pos + n:pos + n + 1] != b"\n":
            raise ValueError(f"{path}: truncated payload for {header!r}")
        pos += n + 1
        records.append((parts[1], parts[3:], payload.decode("utf-8")))
    pairs = []
    for i in range(0, len(records), 2):
        req = records[i]
        if req[0] != "request" or i + 1 >= len(records) or records[i + 1][0] not in ("reply", "error"):
            raise ValueError(f"{path}: record {i} is not a request/reply pair")
        kind, extra, payload = records[i + 1]
        pairs.append((req[2], kind, payload, float(extra[0]) if extra else 0.0))
    return pairs


class ReplayTransport:
    """Serves recorded replies in order; the prompt must match the recording."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._pairs = read_fixture(path)
        self._cursor = 0

    @property
    def remaining(self) -> int:
        return len(self._pairs) - self._cursor

    def complete(self, prompt: str) -> Reply:
        if self._cursor >= len(self._pairs):
            raise TransportError("replay fixture exhausted")
        request, kind, payload, latency = self._pairs[self._cursor]
        self._cursor += 1
        if request != prompt:
            raise ReplayMismatch(f"prompt differs from recorded request #{self._cursor}")
        if kind == "error":
            raise TransportError(payload, latency)
        return Reply(payload, latency)


class LLMReviewer:
    """Asks a chat model for a verdict; any failure degrades to Keep."""

    source = "llm"

    def __init__(self, transport: Transport, retries: int = 1):
        self.transport = transport
        self.retries = retries

    def __call__(self, ctx: ReflectionContext) -> ReflectionVerdict:
        prompt = build_prompt(ctx)
        spent = 0.0
        last: Optional[TransportError] = None
        for _ in range(self.retries + 1):
            try:
                reply = self.transport.complete(prompt)
            except TransportError as exc:
                spent += exc.latency
                last = exc
                log.warning("reflector transport error: %s", exc)
                continue
            return parse_verdict(reply.text, source=self.source, latency=spent + reply.latency)
        return ReflectionVerdict(
            KEEP, rationale=f"transport failure: {last}", source=self.source,
            latency=spent, degraded=True,
        )
