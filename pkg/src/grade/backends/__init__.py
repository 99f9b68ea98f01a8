"""Clients for the three external roles (text LLM, VQA, text-to-image)."""

from .base import (
    BackendError,
    BackendProfile,
    ImageUnreadableError,
    RetriableBackendError,
    SchemaViolationError,
    ShortfallError,
    StructuredRequest,
    TransportError,
    enum_schema,
    request_hash,
)
from .cache import MemoryCache, ResponseCache
from .client import BackendClient, ClientStats, TokenBucket, llm_complete, make_client
from .t2i import generate_images, mock_image_bytes
from .transports import HTTPTransport, MockTransport
from .vqa import read_image_bytes, vqa_answer

__all__ = [
    "BackendClient",
    "BackendError",
    "BackendProfile",
    "ClientStats",
    "HTTPTransport",
    "ImageUnreadableError",
    "MemoryCache",
    "MockTransport",
    "ResponseCache",
    "RetriableBackendError",
    "SchemaViolationError",
    "ShortfallError",
    "StructuredRequest",
    "TokenBucket",
    "TransportError",
    "enum_schema",
    "generate_images",
    "llm_complete",
    "make_client",
    "mock_image_bytes",
    "read_image_bytes",
    "request_hash",
    "vqa_answer",
]
