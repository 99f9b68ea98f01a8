"""Report JSON/CSV, SVG histograms and pairwise comparison matrices.

Every emitter is a pure function of its inputs: floats are rounded to four
decimals and nothing time-dependent is written into file contents.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .model import (
    DefaultBehavior,
    DefaultSummary,
    GradeScore,
    ModelReport,
    Scope,
    ValueDistribution,
)

DECIMALS = 4
SUMMARY_COLUMNS = ("model", "multi_mean", "multi_se", "single_mean", "single_se")


def rnd(x: float | None) -> float | None:
    if x is None:
        return None
    v = round(float(x), DECIMALS)
    return 0.0 if v == 0 else v  # no "-0.0"


def fmt(x: float | None) -> str:
    return "" if x is None else f"{rnd(x):.{DECIMALS}f}"


def _round_tree(obj: Any) -> Any:
    if isinstance(obj, float):
        return rnd(obj)
    if isinstance(obj, Mapping):
        return {k: _round_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v) for v in obj]
    return obj


def report_to_dict(report: ModelReport) -> dict[str, Any]:
    d = {
        "model_id": report.model_id,
        "mean_multi": report.mean_multi,
        "standard_error_multi": report.standard_error_multi,
        "mean_single": report.mean_single,
        "standard_error_single": report.standard_error_single,
        "nota_rate": report.nota_rate,
        "n_excluded": report.n_excluded,
        "default_behavior_stats": {k: asdict(v) for k, v in report.default_behavior_stats.items()},
        "default_behaviors": [
            {"question_id": b.question_id, "scope": str(b.scope), "value": b.value, "frequency": b.frequency, "tau": b.tau}
            for b in report.default_behaviors
        ],
        "per_distribution_scores": [s.to_dict() for s in report.per_distribution_scores],
        "distributions": [d.to_dict() for d in report.distributions],
        "metadata": dict(report.metadata),
    }
    return _round_tree(d)


def report_from_dict(d: Mapping[str, Any]) -> ModelReport:
    return ModelReport(
        model_id=d["model_id"],
        per_distribution_scores=tuple(GradeScore.from_dict(s) for s in d.get("per_distribution_scores", [])),
        mean_multi=d.get("mean_multi"),
        mean_single=d.get("mean_single"),
        standard_error_multi=d.get("standard_error_multi"),
        standard_error_single=d.get("standard_error_single"),
        default_behavior_stats={k: DefaultSummary(**v) for k, v in d.get("default_behavior_stats", {}).items()},
        default_behaviors=tuple(
            DefaultBehavior(b["question_id"], Scope.parse(b["scope"]), b["value"], b["frequency"], b["tau"])
            for b in d.get("default_behaviors", [])
        ),
        nota_rate=d.get("nota_rate", 0.0),
        n_excluded=d.get("n_excluded", 0),
        distributions=tuple(ValueDistribution.from_dict(x) for x in d.get("distributions", [])),
        metadata=d.get("metadata", {}),
    )


def load_report(path: str | Path) -> ModelReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def _write(path: str | Path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return p


def score_table_csv(reports: Sequence[ModelReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in reports:
        w.writerow(
            [r.model_id, fmt(r.mean_multi), fmt(r.standard_error_multi), fmt(r.mean_single), fmt(r.standard_error_single)]
        )
    excluded = sum(r.n_excluded for r in reports)
    if excluded:
        buf.write(f"# excluded_invalid_distributions,{excluded}\n")
    return buf.getvalue()


def emit_report(report: ModelReport | Sequence[ModelReport], path: str | Path, format: str = "json") -> Path:
    """Write one report as JSON, or one or more reports as a score table CSV."""
    reports = [report] if isinstance(report, ModelReport) else list(report)
    if format == "json":
        if len(reports) != 1:
            raise ValueError("json format takes a single report")
        return _write(path, dumps(report_to_dict(reports[0])))
    if format == "csv":
        return _write(path, score_table_csv(reports))
    raise ValueError(f"unknown format {format!r}")


def score_rows(reports: Sequence[ModelReport]) -> list[str]:
    """Two-decimal rows like ``name  0.64  0.49``."""
    return [f"{r.model_id}  {r.mean_multi:.2f}  {r.mean_single:.2f}" for r in reports]


def _svg_bars(labels: Sequence[str], heights: Sequence[float], title: str, ymax: float | None = None) -> str:
    width, height, pad = 640, 320, 40
    n = max(1, len(heights))
    top = ymax if ymax else (max(heights) if heights and max(heights) > 0 else 1.0)
    bw = (width - 2 * pad) / n
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<title>{escape(title)}</title>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for i, (lab, h) in enumerate(zip(labels, heights)):
        bh = (height - 2 * pad - 20) * (h / top if top else 0.0)
        x = pad + i * bw
        y = height - pad - bh
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{max(bw - 1, 0.5):.2f}" height="{bh:.2f}" fill="steelblue">'
            f"<title>{escape(lab)}: {h:g}</title></rect>"
        )
        if len(labels) <= 24:
            parts.append(
                f'<text x="{x + bw / 2:.2f}" y="{height - pad + 14}" text-anchor="middle" font-size="9">{escape(lab)}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_counts(values: Sequence[float], bins: int = 20) -> np.ndarray:
    counts, _ = np.histogram(np.clip(np.asarray(values, dtype=float), 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return counts


def emit_histogram(
    scores: Sequence[GradeScore] | Sequence[float], path: str | Path, bins: int = 20, title: str = "GRADE scores"
) -> np.ndarray:
    """SVG histogram of scores over uniform bins on [0, 1]; returns the counts."""
    if len(scores) == 0:
        raise ValueError("need at least one score")
    vals = [s.entropy if isinstance(s, GradeScore) else float(s) for s in scores]
    counts = histogram_counts(vals, bins)
    edges = np.linspace(0.0, 1.0, bins + 1)
    labels = [f"{edges[i]:.2f}" for i in range(bins)]
    _write(path, _svg_bars(labels, [int(c) for c in counts], title))
    return counts


def emit_distribution_histogram(dist: ValueDistribution, path: str | Path) -> Path:
    labels = list(dist.support)
    heights = [rnd(dist.probabilities.get(v, 0.0)) or 0.0 for v in labels]
    return _write(path, _svg_bars(labels, heights, f"{dist.question_id} [{dist.scope}]", ymax=1.0))


def pairwise_matrix(
    models: Sequence[str], values: Mapping[tuple[str, str], float], diagonal: float = 0.0
) -> list[list[float]]:
    """Symmetric matrix from unordered pair values; a missing pair raises."""
    n = len(models)
    m = [[diagonal] * n for _ in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        a, b = models[i], models[j]
        if (a, b) in values:
            v = values[(a, b)]
        elif (b, a) in values:
            v = values[(b, a)]
        else:
            raise KeyError(f"missing pair ({a}, {b})")
        m[i][j] = m[j][i] = float(v)
    return m


def emit_pairwise_matrix(
    models: Sequence[str],
    values: Mapping[tuple[str, str], float],
    out_prefix: str | Path,
    kind: str = "tvd",
) -> tuple[Path, Path]:
    """``<prefix>.json`` keeps [0, 1] values; ``<prefix>.csv`` shows TVD x100."""
    diagonal = 0.0 if kind == "tvd" else 1.0
    m = pairwise_matrix(models, values, diagonal)
    pairs = [
        {"a": models[i], "b": models[j], "value": m[i][j]} for i, j in itertools.combinations(range(len(models)), 2)
    ]
    jpath = _write(
        f"{out_prefix}.json",
        dumps(_round_tree({"kind": kind, "models": list(models), "matrix": m, "pairs": pairs})),
    )
    scale = 100.0 if kind == "tvd" else 1.0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", *models])
    for name, row in zip(models, m):
        w.writerow([name, *(fmt(v * scale) for v in row)])
    cpath = _write(f"{out_prefix}.csv", buf.getvalue())
    return jpath, cpath


def write_json(path: str | Path, obj: Any) -> Path:
    return _write(path, dumps(_round_tree(obj)))
