from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import jsonschema

from .base import (
    BackendError,
    BackendProfile,
    RetriableBackendError,
    SchemaViolationError,
    StructuredRequest,
    TransportError,
    canonical_json,
    request_hash,
)
from .cache import MemoryCache, ResponseCache
from .transports import HTTPTransport, MockTransport, Transport

log = logging.getLogger(__name__)


class TokenBucket:
    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity or max(1.0, rate)
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


@dataclass
class ClientStats:
    calls: int = 0
    cache_hits: int = 0
    retries: int = 0
    corrective_retries: int = 0


def _check(schema, value) -> str | None:
    try:
        jsonschema.validate(value, schema)
    except jsonschema.ValidationError as e:
        return e.message
    return None


class BackendClient:
    """Cached, retrying, schema-validating front for one backend profile."""

    def __init__(
        self,
        profile: BackendProfile,
        transport: Transport | None = None,
        cache: ResponseCache | MemoryCache | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.profile = profile
        if transport is None:
            if profile.kind == "mock":
                transport = MockTransport.from_file(profile.fixtures) if profile.fixtures else MockTransport()
            else:
                transport = HTTPTransport()
        self.transport = transport
        self.cache = cache if cache is not None else MemoryCache()
        self.stats = ClientStats()
        self._sleep = sleep
        self._lock = threading.Lock()
        self._bucket = TokenBucket(profile.rate_per_sec, sleep=sleep) if profile.rate_per_sec else None

    def _bump(self, name: str) -> None:
        with self._lock:
            setattr(self.stats, name, getattr(self.stats, name) + 1)

    def _send(self, req: StructuredRequest, key: str) -> Any:
        attempts = self.profile.max_retries + 1
        last: Exception | None = None
        for i in range(attempts):
            if self._bucket:
                self._bucket.acquire()
            self._bump("calls")
            try:
                return self.transport.send(self.profile, req, key)
            except TransportError as e:
                last = e
                if i + 1 < attempts:
                    self._bump("retries")
                    self._sleep(self.profile.backoff_sec * (2**i))
        raise RetriableBackendError(
            f"{self.profile.role}/{self.profile.model_name}: gave up after {attempts} attempts: {last}"
        )

    def complete(self, req: StructuredRequest) -> Any:
        key = request_hash(self.profile, req)
        role = self.profile.role
        cached = self.cache.get(role, key)
        if cached is not None:
            self._bump("cache_hits")
            return cached
        value = self._send(req, key)
        err = _check(req.response_schema, value)
        if err is not None:
            log.warning("schema-invalid response for %s (%s); corrective retry", req.task, err)
            self._bump("corrective_retries")
            fixed = StructuredRequest(
                prompt_text=req.prompt_text
                + "\n\nYour previous reply did not match the required format. Reply with JSON that"
                " validates against this schema:\n"
                + canonical_json(req.response_schema),
                response_schema=req.response_schema,
                task=req.task,
                image=req.image,
                image_hash=req.image_hash,
                image_uri=req.image_uri,
            )
            fkey = request_hash(self.profile, fixed)
            value = self._send(fixed, fkey)
            err = _check(req.response_schema, value)
            if err is not None:
                raise SchemaViolationError(f"{req.task or 'request'}: {err}")
            self.cache.put(role, fkey, value)
        self.cache.put(role, key, value)
        return value


def make_client(profile: BackendProfile, cache_dir: str | Path | None = None, **kw) -> BackendClient:
    cache = ResponseCache(cache_dir) if cache_dir else None
    return BackendClient(profile, cache=cache, **kw)


def llm_complete(client: BackendClient, req: StructuredRequest) -> Any:
    if client.profile.role != "llm":
        raise BackendError(f"llm_complete needs an llm profile, got {client.profile.role!r}")
    return client.complete(req)
