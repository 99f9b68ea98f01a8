import csv
import itertools
import json

import numpy as np
import pytest

from grade.model import SENTINEL, AnswerRecord
from grade.pipeline import build_report
from grade.reporting import (
    SUMMARY_COLUMNS,
    emit_histogram,
    emit_pairwise_matrix,
    emit_report,
    load_report,
    pairwise_matrix,
    report_to_dict,
    score_rows,
)


@pytest.fixture
def report(cookie_schema):
    recs = []
    for k, p in enumerate(cookie_schema.prompts):
        for i in range(10):
            shape = "round" if i < 8 + (k % 2) else "star"
            recs.append(AnswerRecord(f"{p.id}/{i}", "cookie-shape", shape, shape, p.id, "m1"))
            color = SENTINEL if i == 0 else ("brown", "white")[i % 2]
            recs.append(AnswerRecord(f"{p.id}/{i}", "cookie-color", color, color, p.id, "m1"))
    return build_report(cookie_schema, recs)


def test_report_fields(report):
    assert report.model_id == "m1"
    assert report.nota_rate == pytest.approx(6 / 120)
    assert report.metadata["normalization"] == "per-prompt-then-mean"
    assert report.metadata["prompt_weights"] == "equal"
    assert report.n_excluded == 0
    flagged = {(b.question_id, b.value) for b in report.default_behaviors if b.scope.kind == "multi"}
    assert flagged == {("cookie-shape", "round")}


def test_json_round_trip_and_bytes(report, tmp_path):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    emit_report(report, p1)
    emit_report(load_report(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    d = json.loads(p1.read_text())
    assert d["mean_multi"] == round(report.mean_multi, 4)


def test_csv_columns(report, tmp_path):
    p = emit_report([report], tmp_path / "r.csv", "csv")
    rows = list(csv.reader(p.open()))
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert rows[1][0] == "m1" and len(rows) == 2
    assert rows[1][1] == f"{report.mean_multi:.4f}"


def test_csv_exclusion_footer(cookie_schema, tmp_path):
    recs = [AnswerRecord("i", "cookie-shape", "", "round", "cookie-common-0", "m"), AnswerRecord("j", "cookie-shape", "", SENTINEL, "cookie-common-1", "m")]
    r = build_report(cookie_schema, recs)
    assert r.n_excluded == 1
    text = emit_report([r], tmp_path / "r.csv", "csv").read_text()
    assert text.endswith("# excluded_invalid_distributions,1\n")


def test_score_rows(report):
    assert score_rows([report])[0].startswith("m1  0.")


@pytest.mark.parametrize(
    "values,expected",
    [
        ([0.0] * 5, [5] + [0] * 19),
        (list(np.linspace(0.025, 0.975, 20)), [1] * 20),
        ([0.01] * 3 + [0.99] * 4, [3] + [0] * 18 + [4]),
        ([1.0, 0.5], [0] * 10 + [1] + [0] * 8 + [1]),
    ],
)
def test_histogram_bins(values, expected, tmp_path):
    counts = emit_histogram(values, tmp_path / "h.svg")
    assert list(counts) == expected
    assert (tmp_path / "h.svg").read_text().startswith("<svg")


def test_histogram_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_histogram([], tmp_path / "h.svg")


def test_twelve_model_matrix(tmp_path):
    models = [f"model{i:02d}" for i in range(12)]
    rng = np.random.default_rng(0)
    vals = {(a, b): float(rng.random()) for a, b in itertools.combinations(models, 2)}
    vals[("model00", "model01")] = 0.22
    jp, cp = emit_pairwise_matrix(models, vals, tmp_path / "tvd")
    d = json.loads(jp.read_text())
    assert len(d["pairs"]) == 66
    m = np.array(d["matrix"])
    assert np.array_equal(m, m.T) and np.all(np.diag(m) == 0)
    rows = list(csv.reader(cp.open()))
    assert rows[1][2] == "22.0000"
    assert float(rows[2][1]) == pytest.approx(22.0)


def test_missing_pair():
    with pytest.raises(KeyError, match="m2"):
        pairwise_matrix(["m1", "m2", "m3"], {("m1", "m3"): 0.1, ("m3", "m2"): 0.2})
    assert pairwise_matrix(["a", "b"], {("b", "a"): 0.4}) == [[0.0, 0.4], [0.4, 0.0]]


def test_report_dict_is_rounded(report):
    d = report_to_dict(report)
    for s in d["per_distribution_scores"]:
        assert s["entropy"] == round(s["entropy"], 4)
