import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grade.backends import BackendProfile, generate_images
from grade.extraction import (
    ExtractionStats,
    estimate_distributions,
    estimate_multi_prompt,
    estimate_single_prompt,
    extract_answers,
    sentinel_count,
    write_answers,
)
from grade.metrics import normalized_entropy
from grade.model import SENTINEL, AnswerRecord, Scope, SupportSet, ValueDistribution, read_answers

from .conftest import mock_client

SHAPE = SupportSet("cookie-shape", ("round", "square", "star", "heart-shaped"))


def answers(values, pid="p0", qid="cookie-shape"):
    return [AnswerRecord(f"{pid}/{i}", qid, v, v, pid, "m") for i, v in enumerate(values)]


def vqa_fixtures():
    return [
        {"matcher": {"task": "answer", "prompt_contains": "shape"}, "response": {"$sample": {"round": 3, "square": 1}}},
        {"matcher": {"task": "answer", "prompt_contains": "color"}, "response": {"$sample": {"brown": 1, SENTINEL: 1}}},
    ]


def images_for(schema, n, model="mock-t2i"):
    prof = BackendProfile(role="t2i", model_name=model)
    return [r for p in schema.prompts for r in generate_images(prof, p, n)]


class TestExtract:
    def test_one_answer_per_pair(self, cookie_schema):
        imgs = images_for(cookie_schema, 100)[:200]
        c = mock_client("vqa", vqa_fixtures())
        got = list(extract_answers(cookie_schema, imgs, c))
        # 200 images x 2 questions
        assert len(got) == 400
        assert [(a.image_id, a.question_id) for a in got[:2]] == [(imgs[0].id, "cookie-shape"), (imgs[0].id, "cookie-color")]
        assert {a.mapped_value for a in got} <= {"round", "square", "brown", SENTINEL}

    def test_order_independent_of_workers(self, cookie_schema):
        imgs = images_for(cookie_schema, 10)
        a = list(extract_answers(cookie_schema, imgs, mock_client("vqa", vqa_fixtures()), workers=1))
        b = list(extract_answers(cookie_schema, imgs, mock_client("vqa", vqa_fixtures()), workers=8))
        assert a == b

    def test_resume_only_missing(self, cookie_schema, tmp_path):
        imgs = images_for(cookie_schema, 100)[:200]
        out = tmp_path / "answers.jsonl"
        first = list(extract_answers(cookie_schema, imgs, mock_client("vqa", vqa_fixtures())))
        write_answers(out, first[:200])
        done = {(a.image_id, a.question_id) for a in read_answers(out)}
        c = mock_client("vqa", vqa_fixtures())
        stats = ExtractionStats()
        write_answers(out, extract_answers(cookie_schema, imgs, c, done=done, stats=stats))
        assert c.stats.calls == 200
        assert (stats.n_skipped, stats.n_answered) == (200, 200)
        assert sorted(read_answers(out), key=lambda a: (a.image_id, a.question_id)) == sorted(
            first, key=lambda a: (a.image_id, a.question_id)
        )

    def test_failures_are_counted_not_fatal(self, cookie_schema):
        imgs = images_for(cookie_schema, 2)
        fx = [{"matcher": {"prompt_contains": "color"}, "response": {"$error": "down"}}] + vqa_fixtures()
        c = mock_client("vqa", fx, max_retries=0)
        stats = ExtractionStats()
        got = list(extract_answers(cookie_schema, imgs, c, stats=stats))
        assert len(got) == 12 and stats.n_failed == 12
        assert {a.question_id for a in got} == {"cookie-shape"}

    def test_unknown_prompt(self, cookie_schema, four_concept_schema):
        imgs = images_for(four_concept_schema, 1)
        with pytest.raises(KeyError):
            list(extract_answers(cookie_schema, imgs, mock_client("vqa", vqa_fixtures())))


class TestSinglePrompt:
    def test_sentinels_discarded(self):
        vals = ["round"] * 40 + ["square"] * 10 + [SENTINEL] * 50
        d = estimate_single_prompt(answers(vals), SHAPE)
        assert (d.n_counted, d.n_discarded) == (50, 50)
        assert d.probabilities == {"round": 0.8, "square": 0.2, "star": 0.0, "heart-shaped": 0.0}
        assert SENTINEL not in d.probabilities

    def test_cookie_default(self):
        d = estimate_single_prompt(answers(["round"] * 98 + ["square"] * 2), SHAPE)
        assert d.probabilities["round"] == 0.98 and d.probabilities["square"] == 0.02

    def test_nota_fixture(self):
        vals = [SENTINEL] * 115 + ["round"] * 885
        d = estimate_single_prompt(answers(vals), SHAPE)
        assert d.n_discarded == 115 and d.n_counted == 885
        assert sentinel_count(answers(vals)) == 115

    def test_all_sentinel_invalid(self):
        d = estimate_single_prompt(answers([SENTINEL] * 7), SHAPE)
        assert not d.valid and d.probabilities == {} and d.n_discarded == 7

    def test_mixed_prompts_rejected(self):
        with pytest.raises(ValueError):
            estimate_single_prompt(answers(["round"], "p0") + answers(["round"], "p1"), SHAPE)


def single(probs, pid):
    return ValueDistribution("q", Scope.single(pid), probs, 10, 0, ("a", "b", "c"))


class TestMultiPrompt:
    def test_two_prompt_mean(self):
        m = estimate_multi_prompt([single({"a": 1.0, "b": 0.0, "c": 0.0}, "p1"), single({"a": 0.0, "b": 1.0, "c": 0.0}, "p2")])
        assert m.probabilities == {"a": 0.5, "b": 0.5, "c": 0.0}
        assert normalized_entropy(m).entropy == pytest.approx(np.log2(2) / np.log2(3))

    def test_equal_weights_regardless_of_count(self):
        # a prompt with more counted answers must not dominate
        big = ValueDistribution("q", Scope.single("p1"), {"a": 1.0, "b": 0.0, "c": 0.0}, 1000, 0, ("a", "b", "c"))
        small = ValueDistribution("q", Scope.single("p2"), {"a": 0.0, "b": 0.0, "c": 1.0}, 3, 0, ("a", "b", "c"))
        assert estimate_multi_prompt([big, small]).probabilities["a"] == 0.5

    def test_invalid_prompt_dropped(self):
        bad = ValueDistribution("q", Scope.single("p3"), {}, 0, 9, ("a", "b", "c"))
        m = estimate_multi_prompt([single({"a": 0.2, "b": 0.8, "c": 0.0}, "p1"), bad])
        assert m.probabilities["b"] == 0.8 and m.n_prompts == 1 and m.n_discarded == 9

    @settings(max_examples=100)
    @given(st.lists(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), min_size=1, max_size=8), st.randoms())
    def test_conservation_and_order(self, rows, rnd):
        rows = [np.array(r) + 1e-3 for r in rows]
        ds = [single(dict(zip("abc", r / r.sum())), f"p{i}") for i, r in enumerate(rows)]
        m = estimate_multi_prompt(ds)
        assert sum(m.probabilities.values()) == pytest.approx(1.0, abs=1e-12)
        oracle = np.mean([r / r.sum() for r in rows], axis=0)
        assert np.allclose([m.probabilities[k] for k in "abc"], oracle, atol=1e-12)
        shuffled = list(ds)
        rnd.shuffle(shuffled)
        m2 = estimate_multi_prompt(shuffled)
        assert all(abs(m.probabilities[k] - m2.probabilities[k]) <= 1e-12 for k in "abc")


def test_estimate_distributions_layout(cookie_schema):
    rng = random.Random(0)
    recs = []
    for p in cookie_schema.prompts[:4]:
        for i in range(20):
            recs.append(AnswerRecord(f"{p.id}/{i}", "cookie-shape", "", rng.choice(["round", "star"]), p.id, "m"))
    ds = estimate_distributions(cookie_schema, recs)
    assert [str(d.scope) for d in ds] == [f"single:{p.id}" for p in cookie_schema.prompts[:4]] + ["multi"]
    assert all(d.question_id == "cookie-shape" for d in ds)
