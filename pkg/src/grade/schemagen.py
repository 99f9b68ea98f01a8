"""Concept schema construction through the LLM backend."""

from __future__ import annotations

import logging
import re
from typing import Iterable, Sequence

from . import templates
from .backends import BackendClient, BackendError, ShortfallError, StructuredRequest, llm_complete
from .model import (
    SENTINEL,
    AttributeQuestion,
    Concept,
    ConceptSchema,
    Prompt,
    SupportSet,
    mentions_concept,
    normalize_value,
    slugify,
)

log = logging.getLogger(__name__)

MAX_ROUNDS = 3

# Generic descriptors that pin down an attribute if they appear in a prompt.
GENERIC_ATTRIBUTE_WORDS = frozenset(
    """
    red orange yellow green blue purple violet pink brown black white gray grey silver gold golden
    beige teal turquoise colorful multicolored striped spotted
    round square rectangular circular oval triangular spherical cylindrical heart-shaped star-shaped
    flat curved tall short long wide narrow
    wooden metal metallic plastic glass ceramic porcelain leather fabric paper stone steel iron
    cotton wool silk rubber
    """.split()
)


def _strings_schema(key: str) -> dict:
    return {
        "type": "object",
        "properties": {key: {"type": "array", "items": {"type": "string"}}},
        "required": [key],
    }


def _ask(client: BackendClient, task: str, template: str, key: str, **kw) -> list[str]:
    req = StructuredRequest(templates.render(template, **kw), _strings_schema(key), task=task)
    return [str(x) for x in llm_complete(client, req)[key]]


def generate_concepts(client: BackendClient, n: int, seed_concepts: Iterable[str] = ()) -> list[Concept]:
    """``n`` distinct lowercase concepts; re-asks for any shortfall."""
    if n < 1:
        raise ValueError("n must be >= 1")
    names: list[str] = []
    for name in seed_concepts:
        name = normalize_value(name)
        if name and name not in names:
            names.append(name)
    for _ in range(MAX_ROUNDS):
        if len(names) >= n:
            break
        want = n - len(names)
        exclude = ", ".join(names) if names else "(none)"
        for raw in _ask(client, "concepts", "concepts", "concepts", n=want, exclude=exclude):
            name = normalize_value(raw)
            if name and name != SENTINEL and name not in names:
                names.append(name)
    if len(names) < n:
        raise ShortfallError(f"only {len(names)} distinct concepts after {MAX_ROUNDS} rounds", n - len(names))
    return [Concept(slugify(x), x) for x in names[:n]]


def blocked_words(text: str, blocklist: Iterable[str]) -> list[str]:
    norm = normalize_value(text)
    hits = []
    for w in blocklist:
        w = normalize_value(w)
        if w and re.search(rf"(?<![\w-]){re.escape(w)}(?![\w-])", norm):
            hits.append(w)
    return hits


def generate_prompts(
    client: BackendClient,
    concept: Concept,
    kind: str,
    n: int = 3,
    blocklist: Iterable[str] | None = None,
) -> list[Prompt]:
    """Underspecified prompts mentioning ``concept``.

    A prompt is rejected if it lacks the concept token or contains a
    blocklisted attribute word; rejected slots are re-requested.
    """
    if kind not in ("common", "uncommon"):
        raise ValueError(f"bad prompt kind {kind!r}")
    block = sorted(set(GENERIC_ATTRIBUTE_WORDS if blocklist is None else blocklist))
    kept: list[str] = []
    for _ in range(MAX_ROUNDS):
        if len(kept) >= n:
            break
        for raw in _ask(
            client,
            f"prompts.{kind}",
            f"prompts_{kind}",
            "prompts",
            concept=concept.name,
            n=n - len(kept),
            avoid=", ".join(block) or "(none)",
        ):
            text = " ".join(raw.split())
            if not mentions_concept(text, concept.name):
                log.info("rejecting prompt without concept token: %r", text)
                continue
            hits = blocked_words(text, block)
            if hits:
                log.info("rejecting prompt %r: specifies %s", text, hits)
                continue
            if text.lower() not in (k.lower() for k in kept):
                kept.append(text)
    if len(kept) < n:
        raise ShortfallError(
            f"only {len(kept)} valid {kind} prompts for {concept.name!r} after {MAX_ROUNDS} rounds", n - len(kept)
        )
    return [Prompt(f"{concept.id}-{kind}-{i}", concept.id, t, kind, i) for i, t in enumerate(kept[:n])]


def _attributes_schema() -> dict:
    item = {
        "type": "object",
        "properties": {"attribute": {"type": "string"}, "question": {"type": "string"}},
        "required": ["attribute", "question"],
    }
    return {
        "type": "object",
        "properties": {"attributes": {"type": "array", "items": item}},
        "required": ["attributes"],
    }


def generate_attributes(client: BackendClient, concept: Concept, n: int = 4) -> list[AttributeQuestion]:
    req = StructuredRequest(
        templates.render("attributes", concept=concept.name, n=n), _attributes_schema(), task="attributes"
    )
    items = llm_complete(client, req)["attributes"]
    out: list[AttributeQuestion] = []
    ids: set[str] = set()
    for it in items:
        label = normalize_value(it["attribute"])
        question = " ".join(it["question"].split())
        if not label or not question:
            continue
        if not question.endswith("?"):
            question = question.rstrip(".!") + "?"
        qid = f"{concept.id}-{slugify(label)}"
        i = 2
        while qid in ids:
            qid = f"{concept.id}-{slugify(label)}-{i}"
            i += 1
        ids.add(qid)
        out.append(AttributeQuestion(qid, concept.id, label, question))
    if not out:
        raise BackendError(f"no attributes returned for {concept.name!r}")
    return out


def _groups_schema() -> dict:
    return {
        "type": "object",
        "properties": {"groups": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}}},
        "required": ["groups"],
    }


def unify_synonyms(values: Sequence[str], groups: Iterable[Sequence[str]]) -> list[str]:
    """Collapse each synonym group to its lexicographically smallest member.

    Overlapping groups are merged; strings not in ``values`` are ignored.
    """
    parent = {v: v for v in values}

    def find(v: str) -> str:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for g in groups:
        members = [normalize_value(x) for x in g]
        members = [m for m in members if m in parent]
        for m in members[1:]:
            ra, rb = find(members[0]), find(m)
            if ra != rb:
                lo, hi = sorted((ra, rb))
                parent[hi] = lo
    return sorted({find(v) for v in values})


def generate_value_support(
    client: BackendClient,
    concept: Concept,
    question: AttributeQuestion,
    prompts: Sequence[Prompt],
) -> SupportSet:
    """Union of per-prompt candidate values, then a synonym-merging pass."""
    if not prompts:
        raise ValueError("need at least one prompt")
    union: set[str] = set()
    for p in prompts:
        for raw in _ask(
            client, "values", "values", "values", concept=concept.name, question=question.question_text, prompt=p.text
        ):
            v = normalize_value(raw)
            if v and v != SENTINEL and v.replace(" ", "_") != SENTINEL:
                union.add(v)
    if not union:
        raise BackendError(f"empty value support for question {question.id!r}")
    values = sorted(union)
    if len(values) > 1:
        req = StructuredRequest(
            templates.render(
                "synonyms",
                concept=concept.name,
                question=question.question_text,
                values=", ".join(f'"{v}"' for v in values),
            ),
            _groups_schema(),
            task="synonyms",
        )
        values = unify_synonyms(values, llm_complete(client, req)["groups"])
    return SupportSet(question.id, tuple(values))


def build_schema(
    client: BackendClient,
    concepts: Sequence[str] = (),
    n_concepts: int | None = None,
    n_common: int = 3,
    n_uncommon: int = 3,
    n_attributes: int = 4,
) -> ConceptSchema:
    """Run the whole generation chain for the named (or generated) concepts."""
    n = n_concepts if n_concepts is not None else len(concepts)
    cs = generate_concepts(client, n, seed_concepts=concepts)
    prompts: list[Prompt] = []
    questions: list[AttributeQuestion] = []
    supports: list[SupportSet] = []
    for c in cs:
        ps = generate_prompts(client, c, "common", n_common) + generate_prompts(client, c, "uncommon", n_uncommon)
        qs = generate_attributes(client, c, n_attributes)
        for q in qs:
            sup = generate_value_support(client, c, q, ps)
            supports.append(sup)
            # the support is only known now; flag prompts that name one of its values
            for p in ps:
                hits = blocked_words(p.text, [v for v in sup.values if v not in ("yes", "no")])
                if hits:
                    log.warning("prompt %s names value(s) %s of %s", p.id, hits, q.id)
        prompts.extend(ps)
        questions.extend(qs)
    return ConceptSchema(tuple(cs), tuple(prompts), tuple(questions), tuple(supports))
