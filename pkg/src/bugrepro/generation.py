"""Prompt construction and candidate sampling from LLM providers.

Three provider kinds are supported:

* ``http-chat``: a chat-completions style endpoint (one user message per request)
* ``replay``: a directory of stored responses keyed by :func:`replay_key`
* ``scripted``: an in-memory sequence of responses, for tests

Every live response can be mirrored into a replay store so later runs are
provider-free.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

import httpx

from . import DEFAULT_INSTRUCTION, DEFAULT_SAMPLES
from .corpus import BugReport
from .errors import (
    ConfigError,
    MalformedProviderReply,
    ProviderError,
    ProviderUnavailable,
    RateLimited,
    ReplayMiss,
)

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ("http-chat", "replay", "scripted")


@dataclass(frozen=True)
class Prompt:
    instruction: str
    report_text: str
    rendered: str


@dataclass(frozen=True)
class GenerationSample:
    report_key: tuple[str, str]
    sample_index: int
    raw_response: str
    provider_meta: dict = field(default_factory=dict, compare=False)


@dataclass
class ProviderConfig:
    kind: str = "replay"
    model: str = ""
    endpoint: str | None = None
    samples_per_report: int = DEFAULT_SAMPLES
    params: dict = field(default_factory=dict)
    rate_limit: float = 0.0  # requests per second, 0 disables
    max_attempts: int = 3
    backoff: float = 1.0
    replay_dir: str | None = None
    record_dir: str | None = None
    token_env: str = "BUGREPRO_API_TOKEN"
    request_timeout: float = 120.0
    script: list[str] | None = None

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.samples_per_report < 1:
            raise ConfigError("samples_per_report must be >= 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.kind == "http-chat" and not self.endpoint:
            raise ConfigError("http-chat provider requires an endpoint")
        if self.kind == "replay" and not self.replay_dir:
            raise ConfigError("replay provider requires replay_dir")


def build_prompt(
    report: BugReport, instruction: str = DEFAULT_INSTRUCTION, include_title: bool = True
) -> Prompt:
    if not instruction:
        raise ValueError("instruction must be non-empty")
    report_text = f"{report.title}\n{report.body}" if include_title else report.body
    return Prompt(instruction, report_text, f"{instruction}\n{report_text}")


def replay_key(prompt: Prompt, sample_index: int) -> str:
    h = hashlib.sha256()
    h.update(prompt.rendered.encode("utf-8"))
    h.update(b"\x00")
    h.update(str(int(sample_index)).encode("ascii"))
    return h.hexdigest()


def decode_raw(data: bytes) -> str:
    # surrogateescape keeps undecodable bytes so re-encoding is byte-exact
    return data.decode("utf-8", errors="surrogateescape")


def encode_raw(text: str) -> bytes:
    return text.encode("utf-8", errors="surrogateescape")


class RateLimiter:
    """Minimum spacing between request starts, shared by all threads."""

    def __init__(self, per_second: float, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / per_second if per_second > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            wait = self._next - now
            self._next = max(now, self._next) + self.interval
        if wait > 0:
            self._sleep(wait)


_limiters: dict[str, RateLimiter] = {}
_limiters_lock = threading.Lock()


def shared_limiter(endpoint: str, per_second: float) -> RateLimiter:
    with _limiters_lock:
        lim = _limiters.get(endpoint)
        if lim is None or lim.interval != (1.0 / per_second if per_second > 0 else 0.0):
            lim = _limiters[endpoint] = RateLimiter(per_second)
        return lim


class Provider:
    name = "provider"

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg

    def request_meta(self, prompt: Prompt, sample_index: int) -> dict:
        return {
            "provider": self.name,
            "model": self.cfg.model,
            "params": dict(self.cfg.params),
            "replay_key": replay_key(prompt, sample_index),
        }

    def complete(self, prompt: Prompt, sample_index: int) -> str:
        raise NotImplementedError


class ReplayProvider(Provider):
    name = "replay"

    def __init__(self, cfg: ProviderConfig):
        super().__init__(cfg)
        self.root = Path(cfg.replay_dir)
        if not self.root.is_dir():
            raise ProviderUnavailable(f"replay store {self.root} does not exist")

    def complete(self, prompt, sample_index):
        digest = replay_key(prompt, sample_index)
        path = self.root / digest
        if not path.is_file():
            raise ReplayMiss(digest, sample_index)
        return decode_raw(path.read_bytes())


class ScriptedProvider(Provider):
    """Serves ``script`` items in order; exception items are raised instead."""

    name = "scripted"

    def __init__(self, cfg: ProviderConfig, script: Iterable | None = None):
        super().__init__(cfg)
        items = list(script if script is not None else (cfg.script or []))
        if not items:
            raise ConfigError("scripted provider needs at least one response")
        self._items = items
        self._pos = 0
        self._lock = threading.Lock()

    def complete(self, prompt, sample_index):
        with self._lock:
            item = self._items[self._pos % len(self._items)]
            self._pos += 1
        if isinstance(item, BaseException):
            raise item
        if callable(item):
            return item(prompt, sample_index)
        return item


class HttpChatProvider(Provider):
    name = "http-chat"

    def __init__(
        self,
        cfg: ProviderConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(cfg)
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(cfg.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            headers=headers, timeout=cfg.request_timeout, transport=transport
        )
        self._sleep = sleep
        self._limiter = shared_limiter(cfg.endpoint, cfg.rate_limit)

    def payload(self, prompt: Prompt) -> dict:
        body = {"model": self.cfg.model, "messages": [{"role": "user", "content": prompt.rendered}]}
        for k, v in self.cfg.params.items():
            if k not in ("model", "messages"):
                body[k] = v
        return body

    def request_meta(self, prompt, sample_index):
        meta = super().request_meta(prompt, sample_index)
        meta["endpoint"] = self.cfg.endpoint
        return meta

    def complete(self, prompt, sample_index):
        body = self.payload(prompt)
        last_exc: ProviderError | None = None
        for attempt in range(1, self.cfg.max_attempts + 1):
            self._limiter.acquire()
            try:
                resp = self._client.post(self.cfg.endpoint, json=body)
            except httpx.TransportError as exc:
                last_exc = ProviderUnavailable(f"{type(exc).__name__}: {exc}")
                delay = None
            else:
                if resp.status_code == 200:
                    return self._parse(resp)
                if resp.status_code == 429:
                    delay = _retry_after(resp)
                    last_exc = RateLimited(delay)
                elif resp.status_code >= 500:
                    delay = None
                    last_exc = ProviderUnavailable(f"HTTP {resp.status_code}")
                else:
                    raise ProviderUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            if attempt < self.cfg.max_attempts:
                wait = delay if delay is not None else self.cfg.backoff * 2 ** (attempt - 1)
                logger.warning("%s (attempt %d/%d), retrying in %.1fs",
                               last_exc, attempt, self.cfg.max_attempts, wait)
                self._sleep(wait)
        raise last_exc

    @staticmethod
    def _parse(resp: httpx.Response) -> str:
        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedProviderReply(f"unexpected reply shape: {exc!r}") from None
        if not isinstance(content, str):
            raise MalformedProviderReply("completion content is not text")
        return content


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("Retry-After")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


def make_provider(cfg: ProviderConfig, **kwargs) -> Provider:
    if cfg.kind == "replay":
        return ReplayProvider(cfg)
    if cfg.kind == "scripted":
        return ScriptedProvider(cfg, kwargs.get("script"))
    return HttpChatProvider(cfg, transport=kwargs.get("transport"), sleep=kwargs.get("sleep", time.sleep))


@dataclass
class GenerationBatch:
    """Samples obtained for one prompt plus per-index failures."""

    samples: list[GenerationSample] = field(default_factory=list)
    errors: dict[int, ProviderError] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)


def generate_samples(
    prompt: Prompt,
    cfg: ProviderConfig,
    report_key: tuple[str, str],
    provider: Provider | None = None,
    on_sample: Callable[[GenerationSample], None] | None = None,
    indices: Iterable[int] | None = None,
) -> GenerationBatch:
    """Request ``cfg.samples_per_report`` independent completions, sequentially.

    ``on_sample`` is called as soon as each response arrives, so callers can
    persist it before anything else happens. ``indices`` restricts the run to
    a subset (used when resuming).
    """
    provider = provider or make_provider(cfg)
    batch = GenerationBatch()
    wanted = list(indices) if indices is not None else range(1, cfg.samples_per_report + 1)
    for idx in wanted:
        meta = provider.request_meta(prompt, idx)
        try:
            text = provider.complete(prompt, idx)
        except ProviderError as exc:
            logger.error("%s-%s sample %d: %s", *report_key, idx, exc)
            batch.errors[idx] = exc
            continue
        meta["timestamp"] = datetime.now(timezone.utc).isoformat()
        sample = GenerationSample(report_key, idx, text, meta)
        if cfg.record_dir:
            store = Path(cfg.record_dir)
            store.mkdir(parents=True, exist_ok=True)
            (store / meta["replay_key"]).write_bytes(encode_raw(text))
        if on_sample is not None:
            on_sample(sample)
        batch.samples.append(sample)
    return batch


def seed_replay_store(root: str | Path, prompt: Prompt, responses: list[str]) -> list[str]:
    """Write ``responses`` as samples 1..n for ``prompt``; returns the digests."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    keys = []
    for i, text in enumerate(responses, 1):
        key = replay_key(prompt, i)
        (root / key).write_bytes(encode_raw(text))
        keys.append(key)
    return keys

