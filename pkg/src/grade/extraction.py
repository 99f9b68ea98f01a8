"""VQA answer extraction and single-/multi-prompt distribution estimates."""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .backends import BackendClient, BackendError, vqa_answer
from .model import (
    SENTINEL,
    AnswerRecord,
    ConceptSchema,
    ImageRecord,
    Scope,
    SupportSet,
    ValueDistribution,
)

log = logging.getLogger(__name__)

# Distributions are normalized per prompt and then averaged with equal
# prompt weights; recorded in report metadata.
NORMALIZATION = "per-prompt-then-mean"


@dataclass
class ExtractionStats:
    n_pairs: int = 0
    n_skipped: int = 0
    n_answered: int = 0
    n_failed: int = 0
    failures: list[str] = field(default_factory=list)


def extract_answers(
    schema: ConceptSchema,
    images: Sequence[ImageRecord],
    client: BackendClient,
    mapper: BackendClient | None = None,
    done: Iterable[tuple[str, str]] = (),
    workers: int = 4,
    stats: ExtractionStats | None = None,
) -> Iterator[AnswerRecord]:
    """Yield one answer per (image, question on the image's concept).

    Pairs in ``done`` (``(image_id, question_id)``) are skipped. Output order
    follows ``images`` then schema question order regardless of completion
    order. A failing pair is logged and counted, never fatal.
    """
    stats = stats if stats is not None else ExtractionStats()
    skip = set(done)
    jobs = []
    for img in images:
        if not schema.has_prompt(img.prompt_id):
            raise KeyError(f"image {img.id} references unknown prompt {img.prompt_id!r}")
        concept = schema.concept(schema.prompt(img.prompt_id).concept_id)
        for q in schema.questions_for(concept.id):
            stats.n_pairs += 1
            if (img.id, q.id) in skip:
                stats.n_skipped += 1
                continue
            jobs.append((img, q, schema.support(q.id), concept.name))

    def run(job):
        img, q, sup, name = job
        try:
            return vqa_answer(client, img, q, sup, concept_name=name, mapper=mapper)
        except BackendError as e:
            log.warning("skipping %s / %s: %s", img.id, q.id, e)
            stats.failures.append(f"{img.id}|{q.id}: {e}")
            return None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        for rec in ex.map(run, jobs):
            if rec is None:
                stats.n_failed += 1
            else:
                stats.n_answered += 1
                yield rec


def estimate_single_prompt(
    answers: Sequence[AnswerRecord], support: SupportSet, prompt_id: str | None = None
) -> ValueDistribution:
    """Normalized value frequencies for one (prompt, question).

    Sentinel answers, and any value outside the support, go to
    ``n_discarded``. Empty or all-sentinel input gives an invalid
    distribution with no probabilities.
    """
    pids = {a.prompt_id for a in answers}
    qids = {a.question_id for a in answers}
    if len(qids) > 1 or (qids and qids != {support.question_id}):
        raise ValueError("answers must all belong to the support's question")
    if len(pids) > 1:
        raise ValueError("answers must all share one prompt")
    pid = prompt_id or (next(iter(pids)) if pids else "")
    values = set(support.values)
    counts = Counter(a.mapped_value for a in answers if a.mapped_value in values)
    n_counted = sum(counts.values())
    n_discarded = len(answers) - n_counted
    probs = {v: counts.get(v, 0) / n_counted for v in support.values} if n_counted else {}
    return ValueDistribution(
        question_id=support.question_id,
        scope=Scope.single(pid),
        probabilities=probs,
        n_counted=n_counted,
        n_discarded=n_discarded,
        support=support.values,
        n_prompts=1 if n_counted else 0,
    )


def estimate_multi_prompt(single_dists: Sequence[ValueDistribution]) -> ValueDistribution:
    """Unweighted mean of the valid single-prompt distributions."""
    if not single_dists:
        raise ValueError("need at least one distribution")
    qids = {d.question_id for d in single_dists}
    if len(qids) != 1:
        raise ValueError("distributions must share a question")
    support = single_dists[0].support
    valid = [d for d in single_dists if d.valid]
    n = len(valid)
    probs: dict[str, float] = {}
    if n:
        keys = list(support) + [k for d in valid for k in d.probabilities if k not in support]
        probs = {k: sum(d.probabilities.get(k, 0.0) for d in valid) / n for k in dict.fromkeys(keys)}
    return ValueDistribution(
        question_id=single_dists[0].question_id,
        scope=Scope.multi(),
        probabilities=probs,
        n_counted=sum(d.n_counted for d in single_dists),
        n_discarded=sum(d.n_discarded for d in single_dists),
        support=support,
        n_prompts=n,
    )


def estimate_distributions(
    schema: ConceptSchema, answers: Iterable[AnswerRecord]
) -> list[ValueDistribution]:
    """All single-prompt distributions plus one multi-prompt distribution per
    question, in schema order. Prompts without answers are left out."""
    grouped: dict[tuple[str, str], list[AnswerRecord]] = defaultdict(list)
    for a in answers:
        grouped[(a.question_id, a.prompt_id)].append(a)
    out: list[ValueDistribution] = []
    for q in schema.questions:
        sup = schema.support(q.id)
        singles = [
            estimate_single_prompt(grouped[(q.id, p.id)], sup, p.id)
            for p in schema.prompts_for(q.concept_id)
            if (q.id, p.id) in grouped
        ]
        if not singles:
            continue
        out.extend(singles)
        out.append(estimate_multi_prompt(singles))
    return out


def write_answers(path: str | Path, answers: Iterable[AnswerRecord], append: bool = True) -> int:
    n = 0
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for a in answers:
            fh.write(json.dumps(a.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
            fh.flush()
            n += 1
    return n


def sentinel_count(answers: Iterable[AnswerRecord]) -> int:
    return sum(a.mapped_value == SENTINEL for a in answers)
