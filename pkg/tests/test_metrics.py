import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grade.metrics import (
    InvalidDistributionError,
    UndefinedCorrelationError,
    detect_default_behaviors,
    mean_tvd,
    model_score,
    normalized_entropy,
    nota_rate,
    pcc,
    spearman,
    tvd,
)
from grade.model import SENTINEL, AnswerRecord, Scope, ValueDistribution


def dist(probs, support=None, qid="q", scope=None):
    support = tuple(support or probs)
    return ValueDistribution(qid, scope or Scope.multi(), dict(probs), 100, 0, support)


def brute_entropy(ps):
    # independent oracle: natural-log entropy converted to bits
    return -sum(p * math.log(p) for p in ps if p > 0) / math.log(2)


class TestNormalizedEntropy:
    def test_uniform_is_one(self):
        vals = [f"v{i}" for i in range(6)]
        assert normalized_entropy(dist({v: 1 / 6 for v in vals})).entropy == pytest.approx(1.0, abs=1e-12)

    def test_point_mass_is_zero(self):
        assert normalized_entropy(dist({"a": 1.0, "b": 0.0, "c": 0.0})).entropy == 0.0

    def test_oracle_value(self):
        d = dist({"a": 0.8, "b": 0.1, "c": 0.1}, support=("a", "b", "c", "d"))
        s = normalized_entropy(d)
        assert s.support_cardinality == 4
        assert s.entropy == pytest.approx(brute_entropy([0.8, 0.1, 0.1]) / 2, abs=1e-12)
        assert s.entropy == pytest.approx(0.4610, abs=1e-4)

    def test_unobserved_values_count_in_denominator(self):
        d2 = dist({"a": 0.5, "b": 0.5})
        d4 = dist({"a": 0.5, "b": 0.5}, support=("a", "b", "c", "d"))
        assert normalized_entropy(d2).entropy == pytest.approx(1.0)
        assert normalized_entropy(d4).entropy == pytest.approx(0.5)

    def test_single_value_support(self):
        assert normalized_entropy(dist({"a": 1.0})).entropy == 0.0

    def test_invalid(self):
        with pytest.raises(InvalidDistributionError):
            normalized_entropy(ValueDistribution("q", Scope.multi(), {}, 0, 5, ("a", "b")))

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12), st.randoms(use_true_random=False))
    def test_permutation_invariant_and_bounded(self, w, rnd):
        p = np.array(w) / sum(w)
        labels = [f"v{i}" for i in range(len(p))]
        h = normalized_entropy(dist(dict(zip(labels, p)))).entropy
        perm = list(p)
        rnd.shuffle(perm)
        assert normalized_entropy(dist(dict(zip(labels, perm)))).entropy == pytest.approx(h, abs=1e-12)
        assert 0.0 <= h <= 1.0
        if np.ptp(p) > 1e-3:
            assert h < 1.0


class TestModelScore:
    def test_oracle(self):
        s = model_score([0.2, 0.6, 1.0])
        assert s.mean == pytest.approx(0.6)
        # sample std of (0.2, 0.6, 1.0) is 0.4
        assert s.standard_error == pytest.approx(0.4 / math.sqrt(3), abs=1e-12)
        assert s.standard_error == pytest.approx(0.2309, abs=1e-4)

    def test_single(self):
        s = model_score([0.5])
        assert (s.mean, s.standard_error) == (0.5, 0.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            model_score([])


class TestDefaultBehaviors:
    def test_cookie_round(self):
        flagged, _ = detect_default_behaviors([dist({"round": 0.98, "square": 0.02})])
        assert [(b.value, b.frequency) for b in flagged] == [("round", 0.98)]

    def test_below_threshold(self):
        assert detect_default_behaviors([dist({"a": 0.5, "b": 0.5})])[0] == []

    def test_inclusive_boundary(self):
        assert len(detect_default_behaviors([dist({"a": 0.8, "b": 0.2})], tau=0.8)[0]) == 1
        # an average that lands an ulp under 0.8
        assert len(detect_default_behaviors([dist({"a": (0.7 + 0.9) / 2, "b": 0.2})], tau=0.8)[0]) == 1

    def test_summary(self):
        concept_of = {"q1": "c1", "q2": "c1", "q3": "c2", "q4": "c3", "q5": "c4"}
        ds = [
            dist({"a": 0.9, "b": 0.1}, qid="q1"),
            dist({"a": 0.5, "b": 0.5}, qid="q2"),
            dist({"a": 0.85, "b": 0.15}, qid="q3"),
            dist({"a": 1.0, "b": 0.0}, qid="q4"),
            dist({"a": 0.6, "b": 0.4}, qid="q5"),
        ]
        _, s = detect_default_behaviors(ds, 0.8, concept_of)
        assert s.pct_at_least_one == 75.0
        assert s.pct_total == 60.0
        assert (s.n_concepts_flagged, s.n_concepts, s.n_flagged, s.n_distributions) == (3, 4, 3, 5)

    def test_binary_flagged_entropy_bound(self):
        bound = normalized_entropy(dist({"a": 0.8, "b": 0.2})).entropy
        assert bound == pytest.approx(brute_entropy([0.8, 0.2]), abs=1e-12)
        assert bound == pytest.approx(0.7219, abs=1e-4)
        for p in np.linspace(0.8, 1.0, 41):
            d = dist({"a": float(p), "b": float(1 - p)})
            assert detect_default_behaviors([d])[0]
            assert normalized_entropy(d).entropy <= bound + 1e-12


class TestNota:
    def answers(self, n_sent, n):
        return [AnswerRecord(str(i), "q", "", SENTINEL if i < n_sent else "a") for i in range(n)]

    @pytest.mark.parametrize("n_sent,n,rate", [(115, 1000, 0.115), (0, 10, 0.0), (7, 7, 1.0)])
    def test_rates(self, n_sent, n, rate):
        assert nota_rate(self.answers(n_sent, n)) == rate

    def test_empty(self):
        with pytest.raises(ValueError):
            nota_rate([])


class TestTVD:
    def test_identical(self):
        d = dist({"a": 0.3, "b": 0.7})
        assert tvd(d, d) == 0.0

    def test_disjoint(self):
        assert tvd(dist({"a": 1.0}), dist({"b": 1.0})) == 1.0

    def test_oracle(self):
        assert tvd(dist({"a": 0.8, "b": 0.2}), dist({"a": 0.5, "b": 0.5})) == pytest.approx(0.5 * (0.3 + 0.3))

    def test_union_alignment(self):
        assert tvd(dist({"a": 0.5, "b": 0.5}), dist({"b": 0.5, "c": 0.5})) == pytest.approx(0.5)

    def test_invalid(self):
        bad = ValueDistribution("q", Scope.multi(), {}, 0, 1, ("a",))
        with pytest.raises(InvalidDistributionError):
            tvd(bad, bad)

    @settings(max_examples=200)
    @given(
        st.lists(st.floats(0, 1), min_size=3, max_size=3),
        st.lists(st.floats(0, 1), min_size=3, max_size=3),
        st.lists(st.floats(0, 1), min_size=3, max_size=3),
    )
    def test_metric(self, x, y, z):
        vecs = []
        for w in (x, y, z):
            w = np.array(w) + 1e-3
            vecs.append(w / w.sum())
        ds = [dist(dict(zip("abc", v))) for v in vecs]
        a, b, c = ds
        assert tvd(a, b) == pytest.approx(tvd(b, a), abs=1e-12)
        assert tvd(a, c) <= tvd(a, b) + tvd(b, c) + 1e-12
        assert tvd(a, b) == pytest.approx(0.5 * np.abs(vecs[0] - vecs[1]).sum(), abs=1e-12)

    def test_mean_tvd(self):
        a = [dist({"a": 1.0, "b": 0.0}, qid="q1"), dist({"a": 0.5, "b": 0.5}, qid="q2")]
        b = [dist({"a": 0.0, "b": 1.0}, qid="q1"), dist({"a": 0.5, "b": 0.5}, qid="q2"), dist({"x": 1.0}, qid="q3")]
        assert mean_tvd(a, b) == (0.5, 2)


class TestCorrelation:
    def test_perfect(self):
        assert pcc([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pcc([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)

    def test_oracle(self):
        # cov = 0.5, var = 1 and 1 (population-free closed form: sum dx*dy / sqrt(sum dx^2 sum dy^2) = 1/2)
        assert pcc([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-9)

    def test_spearman(self):
        assert spearman([1, 2, 3, 4], [1, 8, 27, 64]) == pytest.approx(1.0)
        assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)

    def test_zero_variance(self):
        with pytest.raises(UndefinedCorrelationError):
            pcc([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pcc([1, 2], [1, 2, 3])
