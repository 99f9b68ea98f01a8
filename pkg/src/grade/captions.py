"""Training-caption filtering and model-vs-dataset distribution comparison."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import templates
from .backends import BackendClient, BackendError, StructuredRequest, enum_schema, llm_complete, read_image_bytes
from .backends.t2i import content_hash
from .metrics import UndefinedCorrelationError, aligned_vectors, normalized_entropy, pcc, tvd
from .model import AttributeQuestion, Concept, ConceptSchema, ImageRecord, Prompt, ValueDistribution

log = logging.getLogger(__name__)

DEFAULT_CAP = 150
IMAGES_PER_CAPTION = 20


@dataclass(frozen=True)
class CaptionVerdict:
    caption: str
    keep: bool | None  # None: backend failed, caption undecided
    reason: str


def filter_caption(client: BackendClient, caption: str, concept: Concept, question: AttributeQuestion) -> CaptionVerdict:
    if not caption.strip():
        raise ValueError("caption is empty")
    req = StructuredRequest(
        templates.render(
            "caption_filter", concept=concept.name, question=question.question_text, caption=caption.strip()
        ),
        enum_schema(["yes", "no"]),
        task="caption_filter",
    )
    try:
        verdict = llm_complete(client, req)
    except BackendError as e:
        log.warning("caption undecided (%s): %r", e, caption)
        return CaptionVerdict(caption, None, f"error: {e}")
    return CaptionVerdict(caption, verdict == "yes", f"verdict: {verdict}")


@dataclass
class FilterResult:
    kept: list[dict[str, Any]] = field(default_factory=list)
    n_seen: int = 0
    n_rejected: int = 0
    n_undecided: int = 0


def collect_filtered(
    client: BackendClient,
    records: Iterable[Mapping[str, Any]],
    concept: Concept,
    question: AttributeQuestion,
    cap: int = DEFAULT_CAP,
    workers: int = 4,
) -> FilterResult:
    """Keep up to ``cap`` captions that pass :func:`filter_caption`, in input
    order. Records are ``{"caption", "image_uri"}`` mappings and are kept
    whole so the dataset images can be scored later."""
    if cap < 0:
        raise ValueError("cap must be >= 0")
    res = FilterResult()
    window = max(1, workers)
    it = iter(records)
    with ThreadPoolExecutor(max_workers=window) as ex:
        while len(res.kept) < cap:
            batch = []
            for rec in it:
                if str(rec.get("caption", "")).strip():
                    batch.append(rec)
                if len(batch) == window:
                    break
            if not batch:
                break
            verdicts = list(ex.map(lambda r: filter_caption(client, str(r["caption"]), concept, question), batch))
            for rec, v in zip(batch, verdicts):
                if len(res.kept) >= cap:
                    break
                res.n_seen += 1
                if v.keep is None:
                    res.n_undecided += 1
                elif v.keep:
                    res.kept.append(dict(rec))
                else:
                    res.n_rejected += 1
    if len(res.kept) < cap:
        log.warning("only %d of %d captions kept for %s / %s", len(res.kept), cap, concept.name, question.id)
    return res


def caption_prompts(concept: Concept, kept: Iterable[Mapping[str, Any]]) -> list[Prompt]:
    """One prompt per kept caption, for the model-side generation run.

    Captions need not contain the concept token verbatim after filtering
    (e.g. plurals), so these prompts bypass schema validation.
    """
    return [
        Prompt(f"{concept.id}-caption-{i}", concept.id, str(r["caption"]), "common", i) for i, r in enumerate(kept)
    ]


def dataset_images(concept: Concept, kept: Iterable[Mapping[str, Any]], model_id: str = "dataset") -> tuple[Prompt, list[ImageRecord]]:
    """Dataset-side images all hang off one pseudo-prompt, so the multi-prompt
    distribution equals the pooled one."""
    prompt = Prompt(f"{concept.id}-dataset", concept.id, f"dataset images of {concept.name}", "common", 0)
    images = []
    for i, r in enumerate(kept):
        uri = str(r["image_uri"])
        try:
            h = content_hash(read_image_bytes(uri))
        except BackendError as e:
            log.warning("skipping dataset image %s: %s", uri, e)
            continue
        images.append(ImageRecord(f"{model_id}/{prompt.id}/{i}", prompt.id, model_id, i, uri, h))
    return prompt, images


def with_prompts(schema: ConceptSchema, concept_id: str, prompts: Iterable[Prompt]) -> ConceptSchema:
    """Copy of ``schema`` where ``concept_id`` uses ``prompts`` instead of its own."""
    others = tuple(p for p in schema.prompts if p.concept_id != concept_id)
    return ConceptSchema(schema.concepts, others + tuple(prompts), schema.questions, schema.supports)


@dataclass(frozen=True)
class ReferenceComparison:
    question_id: str
    entropy_model: float
    entropy_dataset: float
    pcc: float | None
    tvd: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "entropy_model": self.entropy_model,
            "entropy_dataset": self.entropy_dataset,
            "pcc": self.pcc,
            "tvd": self.tvd,
        }


def compare_to_reference(model_dist: ValueDistribution, dataset_dist: ValueDistribution) -> ReferenceComparison:
    _, a, b = aligned_vectors(model_dist, dataset_dist)
    try:
        r: float | None = pcc(a, b)
    except UndefinedCorrelationError:
        r = None
    return ReferenceComparison(
        question_id=model_dist.question_id,
        entropy_model=normalized_entropy(model_dist).entropy,
        entropy_dataset=normalized_entropy(dataset_dist).entropy,
        pcc=r,
        tvd=tvd(model_dist, dataset_dist),
    )
