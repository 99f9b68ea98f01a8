"""Attribute-level diversity evaluation for text-to-image models."""

from .metrics import detect_default_behaviors, model_score, normalized_entropy, nota_rate, pcc, spearman, tvd
from .model import (
    SENTINEL,
    AnswerRecord,
    AttributeQuestion,
    Concept,
    ConceptSchema,
    GradeScore,
    ImageRecord,
    ModelReport,
    Prompt,
    Scope,
    SupportSet,
    ValueDistribution,
    validate_schema,
)
from .stats import correlation_pvalue, permutation_test

__version__ = "0.1.0"

__all__ = [
    "SENTINEL",
    "AnswerRecord",
    "AttributeQuestion",
    "Concept",
    "ConceptSchema",
    "GradeScore",
    "ImageRecord",
    "ModelReport",
    "Prompt",
    "Scope",
    "SupportSet",
    "ValueDistribution",
    "correlation_pvalue",
    "detect_default_behaviors",
    "model_score",
    "normalized_entropy",
    "nota_rate",
    "pcc",
    "permutation_test",
    "spearman",
    "tvd",
    "validate_schema",
]
