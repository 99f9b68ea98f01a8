from __future__ import annotations

from pathlib import Path

from .. import templates
from ..model import SENTINEL, AnswerRecord, AttributeQuestion, ImageRecord, SupportSet
from .base import BackendError, ImageUnreadableError, StructuredRequest, enum_schema
from .client import BackendClient

MOCK_SCHEME = "mock://"


def read_image_bytes(uri: str) -> bytes:
    """Local path or ``mock://`` pseudo-uri; images are opaque bytes here."""
    if uri.startswith(MOCK_SCHEME):
        return uri.encode()
    try:
        return Path(uri).read_bytes()
    except OSError as e:
        raise ImageUnreadableError(f"cannot read image {uri}: {e}") from e


def answer_schema(support: SupportSet) -> dict:
    return {
        "type": "object",
        "properties": {"answer": {"type": "string"}, "value": enum_schema(support.choices)},
        "required": ["answer"],
    }


def vqa_answer(
    client: BackendClient,
    image: ImageRecord,
    question: AttributeQuestion,
    support: SupportSet,
    concept_name: str | None = None,
    mapper: BackendClient | None = None,
) -> AnswerRecord:
    """Ask the VQA backend one question about one image.

    The structured reply carries the free-form answer and, normally, the
    chosen option. When the backend leaves ``value`` out, a second text-only
    call through ``mapper`` (default: the same client) maps the answer onto
    the support.
    """
    if client.profile.role != "vqa":
        raise BackendError(f"vqa_answer needs a vqa profile, got {client.profile.role!r}")
    data = read_image_bytes(image.uri)
    options = ", ".join(support.choices)
    req = StructuredRequest(
        prompt_text=templates.render(
            "answer", concept=concept_name or question.concept_id, question=question.question_text, options=options
        ),
        response_schema=answer_schema(support),
        task="answer",
        image=data,
        image_hash=image.content_hash,
        image_uri=image.uri,
    )
    resp = client.complete(req)
    raw = str(resp["answer"])
    value = resp.get("value")
    if value is None:
        mreq = StructuredRequest(
            prompt_text=templates.render("map_answer", question=question.question_text, answer=raw, options=options),
            response_schema=enum_schema(support.choices),
            task="map_answer",
        )
        value = (mapper or client).complete(mreq)
    if value not in support.choices:
        value = SENTINEL
    return AnswerRecord(
        image_id=image.id,
        question_id=question.id,
        raw_answer=raw,
        mapped_value=value,
        prompt_id=image.prompt_id,
        model_id=image.model_id,
    )
