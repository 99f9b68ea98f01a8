"""Shared data vocabulary: concepts, prompts, questions, supports, answers,
distributions and scores, plus schema (de)serialization and validation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

SENTINEL = "none_of_the_above"
PROMPT_KINDS = ("common", "uncommon")

_WS = re.compile(r"\s+")


def normalize_value(text: str) -> str:
    """Trim, lowercase and collapse internal whitespace."""
    return _WS.sub(" ", text.strip()).lower()


def slugify(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", normalize_value(text)).strip("-") or "x"


def mentions_concept(text: str, concept_name: str) -> bool:
    """True if ``concept_name`` appears as a whole token (plural allowed)."""
    name = re.escape(normalize_value(concept_name))
    return re.search(rf"\b{name}(?:s|es)?\b", normalize_value(text)) is not None


@dataclass(frozen=True)
class Concept:
    id: str
    name: str


@dataclass(frozen=True)
class Prompt:
    id: str
    concept_id: str
    text: str
    kind: str
    ordinal: int


@dataclass(frozen=True)
class AttributeQuestion:
    id: str
    concept_id: str
    attribute_label: str
    question_text: str


@dataclass(frozen=True)
class SupportSet:
    question_id: str
    values: tuple[str, ...]
    sentinel: str = SENTINEL

    @property
    def cardinality(self) -> int:
        return len(self.values)

    @property
    def choices(self) -> tuple[str, ...]:
        return self.values + (self.sentinel,)


@dataclass(frozen=True)
class ImageRecord:
    id: str
    prompt_id: str
    model_id: str
    seed: int
    uri: str
    content_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "prompt_id": self.prompt_id,
            "model_id": self.model_id,
            "seed": self.seed,
            "uri": self.uri,
            "content_hash": self.content_hash,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ImageRecord:
        return cls(
            id=str(d["id"]),
            prompt_id=str(d["prompt_id"]),
            model_id=str(d["model_id"]),
            seed=int(d["seed"]),
            uri=str(d["uri"]),
            content_hash=str(d["content_hash"]),
        )


@dataclass(frozen=True)
class AnswerRecord:
    """One VQA answer. ``prompt_id``/``model_id`` are carried so answers can
    be grouped without the image manifest."""

    image_id: str
    question_id: str
    raw_answer: str
    mapped_value: str
    prompt_id: str = ""
    model_id: str = ""

    @property
    def is_sentinel(self) -> bool:
        return self.mapped_value == SENTINEL

    def to_dict(self) -> dict[str, Any]:
        return {
            "image_id": self.image_id,
            "question_id": self.question_id,
            "raw_answer": self.raw_answer,
            "mapped_value": self.mapped_value,
            "prompt_id": self.prompt_id,
            "model_id": self.model_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> AnswerRecord:
        return cls(
            image_id=str(d["image_id"]),
            question_id=str(d["question_id"]),
            raw_answer=str(d.get("raw_answer", "")),
            mapped_value=str(d["mapped_value"]),
            prompt_id=str(d.get("prompt_id", "")),
            model_id=str(d.get("model_id", "")),
        )


@dataclass(frozen=True, order=True)
class Scope:
    kind: str  # "multi" | "single"
    prompt_id: str | None = None

    @classmethod
    def multi(cls) -> Scope:
        return cls("multi")

    @classmethod
    def single(cls, prompt_id: str) -> Scope:
        return cls("single", prompt_id)

    @classmethod
    def parse(cls, text: str) -> Scope:
        if text == "multi":
            return cls.multi()
        kind, _, pid = text.partition(":")
        if kind != "single" or not pid:
            raise ValueError(f"bad scope {text!r}")
        return cls.single(pid)

    def __str__(self) -> str:
        return "multi" if self.kind == "multi" else f"single:{self.prompt_id}"


@dataclass(frozen=True)
class ValueDistribution:
    """Estimated attribute-value frequencies for one question in one scope.

    ``probabilities`` lists every support value (zero-filled) in support
    order. It is empty when nothing was counted; such a distribution is
    invalid and never aggregated.
    """

    question_id: str
    scope: Scope
    probabilities: Mapping[str, float]
    n_counted: int
    n_discarded: int
    support: tuple[str, ...]
    n_prompts: int = 1

    @property
    def valid(self) -> bool:
        return self.n_counted > 0 and bool(self.probabilities)

    @property
    def n_answers(self) -> int:
        return self.n_counted + self.n_discarded

    def vector(self) -> list[float]:
        return [self.probabilities.get(v, 0.0) for v in self.support]

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "scope": str(self.scope),
            "valid": self.valid,
            "support": list(self.support),
            "probabilities": dict(self.probabilities),
            "n_counted": self.n_counted,
            "n_discarded": self.n_discarded,
            "n_prompts": self.n_prompts,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ValueDistribution:
        return cls(
            question_id=str(d["question_id"]),
            scope=Scope.parse(d["scope"]),
            probabilities={str(k): float(v) for k, v in d.get("probabilities", {}).items()},
            n_counted=int(d["n_counted"]),
            n_discarded=int(d["n_discarded"]),
            support=tuple(d["support"]),
            n_prompts=int(d.get("n_prompts", 1)),
        )


@dataclass(frozen=True)
class GradeScore:
    question_id: str
    scope: Scope
    entropy: float
    support_cardinality: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "scope": str(self.scope),
            "entropy": self.entropy,
            "support_cardinality": self.support_cardinality,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> GradeScore:
        return cls(
            question_id=str(d["question_id"]),
            scope=Scope.parse(d["scope"]),
            entropy=float(d["entropy"]),
            support_cardinality=int(d["support_cardinality"]),
        )


@dataclass(frozen=True)
class DefaultBehavior:
    question_id: str
    scope: Scope
    value: str
    frequency: float
    tau: float = 0.8


@dataclass(frozen=True)
class DefaultSummary:
    pct_at_least_one: float
    pct_total: float
    n_flagged: int
    n_distributions: int
    n_concepts_flagged: int
    n_concepts: int


@dataclass(frozen=True)
class ModelReport:
    model_id: str
    per_distribution_scores: tuple[GradeScore, ...]
    mean_multi: float | None
    mean_single: float | None
    standard_error_multi: float | None
    standard_error_single: float | None
    default_behavior_stats: Mapping[str, DefaultSummary]
    default_behaviors: tuple[DefaultBehavior, ...]
    nota_rate: float
    n_excluded: int = 0
    distributions: tuple[ValueDistribution, ...] = ()
    metadata: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class PermutationTestResult:
    d_obs: float
    p_value: float
    n_permutations: int
    alpha: float
    significant: bool
    count: int = 0


@dataclass(frozen=True)
class Violation:
    obj_id: str
    rule: str
    message: str


@dataclass(frozen=True)
class ConceptSchema:
    concepts: tuple[Concept, ...]
    prompts: tuple[Prompt, ...] = ()
    questions: tuple[AttributeQuestion, ...] = ()
    supports: tuple[SupportSet, ...] = ()

    @cached_property
    def _concepts(self) -> dict[str, Concept]:
        return {c.id: c for c in self.concepts}

    @cached_property
    def _prompts(self) -> dict[str, Prompt]:
        return {p.id: p for p in self.prompts}

    @cached_property
    def _questions(self) -> dict[str, AttributeQuestion]:
        return {q.id: q for q in self.questions}

    @cached_property
    def _supports(self) -> dict[str, SupportSet]:
        return {s.question_id: s for s in self.supports}

    def concept(self, concept_id: str) -> Concept:
        return self._concepts[concept_id]

    def prompt(self, prompt_id: str) -> Prompt:
        return self._prompts[prompt_id]

    def question(self, question_id: str) -> AttributeQuestion:
        return self._questions[question_id]

    def support(self, question_id: str) -> SupportSet:
        return self._supports[question_id]

    def has_prompt(self, prompt_id: str) -> bool:
        return prompt_id in self._prompts

    def prompts_for(self, concept_id: str) -> list[Prompt]:
        return [p for p in self.prompts if p.concept_id == concept_id]

    def questions_for(self, concept_id: str) -> list[AttributeQuestion]:
        return [q for q in self.questions if q.concept_id == concept_id]

    def concept_of_question(self) -> dict[str, str]:
        return {q.id: q.concept_id for q in self.questions}

    def to_dict(self) -> dict[str, Any]:
        out = []
        for c in self.concepts:
            out.append(
                {
                    "id": c.id,
                    "name": c.name,
                    "prompts": [
                        {"id": p.id, "text": p.text, "kind": p.kind, "ordinal": p.ordinal}
                        for p in self.prompts_for(c.id)
                    ],
                    "questions": [
                        {
                            "id": q.id,
                            "attribute_label": q.attribute_label,
                            "question_text": q.question_text,
                            "support": list(self._supports[q.id].values)
                            if q.id in self._supports
                            else [],
                        }
                        for q in self.questions_for(c.id)
                    ],
                }
            )
        return {"concepts": out}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ConceptSchema:
        """Parse without enforcing invariants; see :func:`validate_schema`."""
        concepts, prompts, questions, supports = [], [], [], []
        for c in d.get("concepts", []):
            cid = str(c.get("id", ""))
            concepts.append(Concept(cid, str(c.get("name", ""))))
            kinds: dict[str, int] = {}
            for p in c.get("prompts", []):
                if isinstance(p, str):
                    p = {"text": p}
                kind = str(p.get("kind", "common"))
                ordinal = int(p.get("ordinal", kinds.get(kind, 0)))
                kinds[kind] = ordinal + 1
                pid = str(p.get("id", f"{cid}-{kind}-{ordinal}"))
                prompts.append(Prompt(pid, cid, str(p.get("text", "")), kind, ordinal))
            for q in c.get("questions", []):
                qid = str(q.get("id", ""))
                questions.append(
                    AttributeQuestion(
                        qid, cid, str(q.get("attribute_label", "")), str(q.get("question_text", ""))
                    )
                )
                supports.append(SupportSet(qid, tuple(str(v) for v in q.get("support", []))))
        return cls(tuple(concepts), tuple(prompts), tuple(questions), tuple(supports))


def dump_schema(schema: ConceptSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2, ensure_ascii=False) + "\n")


def load_schema(path: str | Path) -> ConceptSchema:
    return ConceptSchema.from_dict(json.loads(Path(path).read_text()))


def validate_schema(schema: ConceptSchema) -> list[Violation]:
    """Check every type invariant; collect all violations rather than stopping."""
    out: list[Violation] = []

    def dup_ids(kind: str, ids: Iterable[str]) -> None:
        seen: set[str] = set()
        for i in ids:
            if not i:
                out.append(Violation(i, f"{kind}.id", f"{kind} has an empty id"))
            elif i in seen:
                out.append(Violation(i, f"{kind}.id.unique", f"duplicate {kind} id {i!r}"))
            seen.add(i)

    dup_ids("concept", (c.id for c in schema.concepts))
    dup_ids("prompt", (p.id for p in schema.prompts))
    dup_ids("question", (q.id for q in schema.questions))

    names = {}
    for c in schema.concepts:
        if not c.name.strip():
            out.append(Violation(c.id, "concept.name", "concept name is empty"))
        elif c.name != normalize_value(c.name):
            out.append(Violation(c.id, "concept.name.normalized", f"name {c.name!r} not normalized"))
        names[c.id] = c.name

    for p in schema.prompts:
        if p.concept_id not in names:
            out.append(Violation(p.id, "prompt.concept", f"unknown concept {p.concept_id!r}"))
        elif not mentions_concept(p.text, names[p.concept_id]):
            out.append(
                Violation(p.id, "prompt.contains_concept", f"prompt does not mention {names[p.concept_id]!r}")
            )
        if p.kind not in PROMPT_KINDS:
            out.append(Violation(p.id, "prompt.kind", f"kind {p.kind!r} not in {PROMPT_KINDS}"))

    for q in schema.questions:
        if q.concept_id not in names:
            out.append(Violation(q.id, "question.concept", f"unknown concept {q.concept_id!r}"))
        if not q.attribute_label.strip():
            out.append(Violation(q.id, "question.attribute_label", "empty attribute label"))
        if not q.question_text.rstrip().endswith("?"):
            out.append(Violation(q.id, "question.text", "question does not end with '?'"))

    qids = {q.id for q in schema.questions}
    for s in schema.supports:
        if s.question_id not in qids:
            out.append(Violation(s.question_id, "support.question", "support for unknown question"))
        if not s.values:
            out.append(Violation(s.question_id, "support.nonempty", "support has no values"))
        seen: set[str] = set()
        for v in s.values:
            nv = normalize_value(v)
            if v != nv:
                out.append(Violation(s.question_id, "support.normalized", f"value {v!r} not normalized"))
            if nv == SENTINEL:
                out.append(Violation(s.question_id, "support.sentinel", "sentinel listed as a value"))
            elif nv in seen:
                out.append(Violation(s.question_id, "support.unique", f"duplicate value {nv!r}"))
            seen.add(nv)
    return out


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_answers(path: str | Path) -> list[AnswerRecord]:
    return [AnswerRecord.from_dict(d) for d in read_jsonl(path)]


def read_images(path: str | Path) -> list[ImageRecord]:
    return [ImageRecord.from_dict(d) for d in read_jsonl(path)]
