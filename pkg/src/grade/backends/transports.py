from __future__ import annotations

import base64
import hashlib
import json
import re
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol

import httpx

from .base import BackendError, BackendProfile, StructuredRequest, TransportError


class Transport(Protocol):
    def send(self, profile: BackendProfile, req: StructuredRequest, key: str) -> Any: ...


def _as_list(x) -> list[str]:
    if x is None:
        return []
    return [x] if isinstance(x, str) else list(x)


def _unit_from_hash(key: str) -> float:
    return int(hashlib.sha256(key.encode()).hexdigest()[:16], 16) / float(1 << 64)


class MockTransport:
    """Fixture-table backend.

    Each fixture is ``{"request_hash": h, "response": r}`` or
    ``{"matcher": m, "response": r}``; the first match wins. Matcher keys:
    ``role``, ``task``, ``prompt_contains`` (all substrings must occur),
    ``prompt_regex``, ``image`` (uri substring) and ``image_regex``.

    Special responses: ``{"$sample": {value: weight, ...}}`` picks a value by
    hashing the request, so every distinct image gets a stable draw;
    ``{"$error": msg}`` raises a transport error.
    """

    def __init__(self, fixtures: Iterable[Mapping[str, Any]] = ()):
        self.fixtures = list(fixtures)
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> MockTransport:
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("//"):
                    rows.append(json.loads(line))
        return cls(rows)

    def _matches(self, m: Mapping[str, Any], profile: BackendProfile, req: StructuredRequest) -> bool:
        if "role" in m and m["role"] != profile.role:
            return False
        if "task" in m and m["task"] != req.task:
            return False
        text = req.prompt_text
        if any(s not in text for s in _as_list(m.get("prompt_contains"))):
            return False
        if "prompt_regex" in m and not re.search(m["prompt_regex"], text):
            return False
        if "image" in m and m["image"] not in req.image_uri:
            return False
        if "image_regex" in m and not re.search(m["image_regex"], req.image_uri):
            return False
        return True

    def lookup(self, profile: BackendProfile, req: StructuredRequest, key: str) -> Any:
        for fx in self.fixtures:
            if fx.get("request_hash") == key:
                return fx["response"]
            if "matcher" in fx and self._matches(fx["matcher"], profile, req):
                return fx["response"]
        raise BackendError(f"no mock fixture for task={req.task!r} request {key[:12]}")

    def send(self, profile: BackendProfile, req: StructuredRequest, key: str) -> Any:
        self.calls += 1
        resp = self.lookup(profile, req, key)
        if isinstance(resp, Mapping) and "$error" in resp:
            raise TransportError(str(resp["$error"]))
        if isinstance(resp, Mapping) and "$sample" in resp:
            return self._sample(resp["$sample"], req, key)
        return resp

    @staticmethod
    def _sample(weights: Mapping[str, float], req: StructuredRequest, key: str) -> Any:
        total = float(sum(weights.values()))
        u = _unit_from_hash(key) * total
        acc = 0.0
        pick = next(iter(weights))
        for value, w in weights.items():
            acc += w
            if u < acc:
                pick = value
                break
        if req.response_schema.get("type") == "object":
            return {"answer": pick, "value": pick}
        return pick


class HTTPTransport:
    """OpenAI-compatible chat-completions client with JSON-schema output."""

    def __init__(self, client: httpx.Client | None = None):
        self._client = client

    def _http(self, profile: BackendProfile) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=profile.request_timeout)
        return self._client

    def send(self, profile: BackendProfile, req: StructuredRequest, key: str) -> Any:
        schema = dict(req.response_schema)
        wrapped = schema.get("type") != "object"
        if wrapped:
            schema = {
                "type": "object",
                "properties": {"answer": schema},
                "required": ["answer"],
                "additionalProperties": False,
            }
        content: Any = req.prompt_text
        if req.image is not None:
            b64 = base64.b64encode(req.image).decode()
            content = [
                {"type": "text", "text": req.prompt_text},
                {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}},
            ]
        body = {
            "model": profile.model_name,
            "temperature": profile.temperature,
            "max_tokens": profile.max_tokens,
            "messages": [{"role": "user", "content": content}],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": req.task or "response", "schema": schema},
            },
        }
        body.update(profile.settings)
        url = profile.endpoint.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {profile.api_key()}"}
        try:
            r = self._http(profile).post(url, json=body, headers=headers, timeout=profile.request_timeout)
        except httpx.HTTPError as e:
            raise TransportError(f"{type(e).__name__}: {e}") from e
        if r.status_code == 429 or r.status_code >= 500:
            raise TransportError(f"HTTP {r.status_code}")
        if r.status_code >= 400:
            raise BackendError(f"HTTP {r.status_code}: {r.text[:200]}")
        try:
            text = r.json()["choices"][0]["message"]["content"]
            parsed = json.loads(text)
        except (KeyError, IndexError, ValueError) as e:
            # surfaces as a schema violation in the client
            return {"$unparseable": str(e)}
        return parsed["answer"] if wrapped and isinstance(parsed, dict) and "answer" in parsed else parsed
