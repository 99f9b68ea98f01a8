"""Numerical core: normalized entropy, aggregation, default behaviors,
none-of-the-above rates and distribution distances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .model import (
    AnswerRecord,
    DefaultBehavior,
    DefaultSummary,
    GradeScore,
    ValueDistribution,
)

DEFAULT_TAU = 0.8
# multi-prompt averages can land an ulp below an exact threshold
_TAU_SLACK = 1e-12


class InvalidDistributionError(ValueError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


def shannon_entropy_bits(probs: Iterable[float]) -> float:
    return -sum(p * math.log2(p) for p in probs if p > 0)


def normalized_entropy(dist: ValueDistribution) -> GradeScore:
    """Entropy in bits divided by log2 of the full support size.

    Values never observed still count toward the denominator. A one-value
    support scores 0.
    """
    if not dist.valid:
        raise InvalidDistributionError(f"distribution {dist.question_id} [{dist.scope}] is invalid")
    k = len(dist.support)
    if k < 1:
        raise InvalidDistributionError(f"distribution {dist.question_id} has an empty support")
    if k == 1:
        h = 0.0
    else:
        h = shannon_entropy_bits(dist.probabilities.values()) / math.log2(k)
        h = min(1.0, max(0.0, h))
    return GradeScore(dist.question_id, dist.scope, h, k)


@dataclass(frozen=True)
class ScoreSummary:
    mean: float
    standard_error: float
    k: int


def model_score(scores: Sequence[GradeScore] | Sequence[float]) -> ScoreSummary:
    """Mean and standard error (sample std / sqrt(k)) of a set of scores."""
    vals = np.array([s.entropy if isinstance(s, GradeScore) else float(s) for s in scores], dtype=float)
    if vals.size == 0:
        raise ValueError("model_score needs at least one score")
    se = 0.0 if vals.size == 1 else float(vals.std(ddof=1) / math.sqrt(vals.size))
    return ScoreSummary(float(vals.mean()), se, int(vals.size))


def dominant_value(dist: ValueDistribution) -> tuple[str, float]:
    # ties resolve to the earliest support value
    best, freq = "", -1.0
    for v in dist.support:
        p = dist.probabilities.get(v, 0.0)
        if p > freq:
            best, freq = v, p
    return best, freq


def detect_default_behaviors(
    dists: Iterable[ValueDistribution],
    tau: float = DEFAULT_TAU,
    concept_of: Mapping[str, str] | None = None,
) -> tuple[list[DefaultBehavior], DefaultSummary]:
    """Flag distributions whose dominant value has frequency >= ``tau``.

    ``pct_at_least_one`` is the share of concepts with at least one flagged
    distribution; ``pct_total`` the share of flagged distributions. Both are
    percentages. Without ``concept_of`` each question is its own group.
    """
    flagged: list[DefaultBehavior] = []
    by_concept: dict[str, bool] = {}
    n = 0
    for d in dists:
        if not d.valid:
            continue
        n += 1
        concept = (concept_of or {}).get(d.question_id, d.question_id)
        value, freq = dominant_value(d)
        hit = freq >= tau - _TAU_SLACK
        if hit:
            flagged.append(DefaultBehavior(d.question_id, d.scope, value, freq, tau))
        by_concept[concept] = by_concept.get(concept, False) or hit
    n_conc = len(by_concept)
    n_conc_hit = sum(by_concept.values())
    summary = DefaultSummary(
        pct_at_least_one=100.0 * n_conc_hit / n_conc if n_conc else 0.0,
        pct_total=100.0 * len(flagged) / n if n else 0.0,
        n_flagged=len(flagged),
        n_distributions=n,
        n_concepts_flagged=n_conc_hit,
        n_concepts=n_conc,
    )
    return flagged, summary


def nota_rate(answers: Sequence[AnswerRecord]) -> float:
    if not answers:
        raise ValueError("nota_rate needs at least one answer")
    return sum(a.is_sentinel for a in answers) / len(answers)


def aligned_vectors(p: ValueDistribution, q: ValueDistribution) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Zero-filled frequency vectors over the union of value names."""
    keys = list(p.support)
    seen = set(keys)
    for v in list(q.support) + list(p.probabilities) + list(q.probabilities):
        if v not in seen:
            keys.append(v)
            seen.add(v)
    a = np.array([p.probabilities.get(v, 0.0) for v in keys], dtype=float)
    b = np.array([q.probabilities.get(v, 0.0) for v in keys], dtype=float)
    return keys, a, b


def tvd(p: ValueDistribution, q: ValueDistribution) -> float:
    if not (p.valid and q.valid):
        raise InvalidDistributionError("tvd needs two valid distributions")
    _, a, b = aligned_vectors(p, q)
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def mean_tvd(a: Iterable[ValueDistribution], b: Iterable[ValueDistribution]) -> tuple[float, int]:
    """Mean TVD over distributions present and valid in both sets, matched
    by (question_id, scope)."""
    left = {(d.question_id, str(d.scope)): d for d in a if d.valid}
    vals = [tvd(left[(d.question_id, str(d.scope))], d) for d in b if d.valid and (d.question_id, str(d.scope)) in left]
    if not vals:
        raise ValueError("no distributions in common")
    return float(np.mean(vals)), len(vals)


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d vectors of equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    return x, y


def pcc(x, y) -> float:
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x, y) -> float:
    x, y = _check_pair(x, y)
    return pcc(rankdata(x), rankdata(y))
