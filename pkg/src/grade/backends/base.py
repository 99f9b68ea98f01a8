from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

ROLES = ("llm", "vqa", "t2i")
KINDS = ("mock", "http", "directory")


class BackendError(Exception):
    """Base class for backend failures."""


class RetriableBackendError(BackendError):
    """Transport kept failing after ``max_retries`` attempts."""


class TransportError(BackendError):
    """A single transport attempt failed; the client may retry."""


class SchemaViolationError(BackendError):
    """Response did not validate against the response schema, even after
    the corrective retry."""


class ImageUnreadableError(BackendError):
    pass


class ShortfallError(BackendError):
    def __init__(self, message: str, missing: int = 0):
        super().__init__(message)
        self.missing = missing


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass(frozen=True)
class BackendProfile:
    role: str
    name: str = "default"
    kind: str = "mock"
    endpoint: str = ""
    model_name: str = "mock"
    auth: str = ""
    temperature: float = 0.0
    max_tokens: int = 1000
    request_timeout: float = 60.0
    max_retries: int = 3
    batch_size: int = 1
    rate_per_sec: float | None = None
    backoff_sec: float = 1.0
    fixtures: str = ""
    settings: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def auth_env(self) -> str:
        return self.auth or f"GRADE_{self.name.upper().replace('-', '_')}_API_KEY"

    def api_key(self) -> str:
        key = os.environ.get(self.auth_env)
        if not key:
            raise BackendError(f"environment variable {self.auth_env} is not set")
        return key

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> BackendProfile:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown profile keys: {sorted(unknown)}")
        return cls(**dict(d))


@dataclass(frozen=True)
class StructuredRequest:
    """A prompt plus a JSON Schema the response must satisfy.

    ``image_hash`` stands in for the image bytes in the request hash; the
    bytes themselves travel in ``image``.
    """

    prompt_text: str
    response_schema: Mapping[str, Any]
    task: str = ""
    image: bytes | None = field(default=None, repr=False, compare=False)
    image_hash: str = ""
    image_uri: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        enum = self.response_schema.get("enum")
        if enum is not None and len(enum) == 0:
            raise ValueError("enumerated response schema must be non-empty")

    def body(self) -> dict[str, Any]:
        return {
            "task": self.task,
            "prompt": self.prompt_text,
            "image": self.image_hash,
            "schema": self.response_schema,
        }


def enum_schema(choices) -> dict[str, Any]:
    return {"type": "string", "enum": list(choices)}


def request_hash(profile: BackendProfile, req: StructuredRequest) -> str:
    payload = {
        "role": profile.role,
        "model": profile.model_name,
        "temperature": profile.temperature,
        "max_tokens": profile.max_tokens,
        "request": req.body(),
    }
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()
