"""Assemble a model report from answers."""

from __future__ import annotations

from typing import Any, Mapping, Sequence

from .extraction import NORMALIZATION, estimate_distributions
from .metrics import DEFAULT_TAU, detect_default_behaviors, model_score, normalized_entropy, nota_rate
from .model import AnswerRecord, ConceptSchema, ModelReport


def build_report(
    schema: ConceptSchema,
    answers: Sequence[AnswerRecord],
    model_id: str | None = None,
    tau: float = DEFAULT_TAU,
    metadata: Mapping[str, Any] | None = None,
) -> ModelReport:
    if not answers:
        raise ValueError("no answers to score")
    if model_id is None:
        ids = sorted({a.model_id for a in answers if a.model_id})
        model_id = ids[0] if len(ids) == 1 else "+".join(ids) or "model"
    dists = estimate_distributions(schema, answers)
    valid = [d for d in dists if d.valid]
    scores = tuple(normalized_entropy(d) for d in valid)
    multi = [s for s in scores if s.scope.kind == "multi"]
    single = [s for s in scores if s.scope.kind == "single"]
    ms = model_score(multi) if multi else None
    ss = model_score(single) if single else None

    concept_of = schema.concept_of_question()
    flagged_m, sum_m = detect_default_behaviors([d for d in valid if d.scope.kind == "multi"], tau, concept_of)
    flagged_s, sum_s = detect_default_behaviors([d for d in valid if d.scope.kind == "single"], tau, concept_of)

    meta = {
        "tau": tau,
        "normalization": NORMALIZATION,
        "prompt_weights": "equal",
        "n_answers": len(answers),
    }
    meta.update(metadata or {})
    return ModelReport(
        model_id=model_id,
        per_distribution_scores=scores,
        mean_multi=ms.mean if ms else None,
        mean_single=ss.mean if ss else None,
        standard_error_multi=ms.standard_error if ms else None,
        standard_error_single=ss.standard_error if ss else None,
        default_behavior_stats={"multi": sum_m, "single": sum_s},
        default_behaviors=tuple(flagged_m + flagged_s),
        nota_rate=nota_rate(answers),
        n_excluded=len(dists) - len(valid),
        distributions=tuple(dists),
        metadata=meta,
    )
