"""``grade`` command line: schema | generate | extract | score | compare |
filter-captions | report."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import config as cfgmod
from .backends import BackendError, generate_images, make_client
from .captions import (
    caption_prompts,
    collect_filtered,
    compare_to_reference,
    dataset_images,
    with_prompts,
)
from .extraction import ExtractionStats, extract_answers, write_answers
from .metrics import mean_tvd
from .model import (
    ConceptSchema,
    dump_schema,
    load_schema,
    mentions_concept,
    read_answers,
    read_images,
    read_jsonl,
    validate_schema,
)
from .pipeline import build_report
from .reporting import (
    emit_distribution_histogram,
    emit_histogram,
    emit_pairwise_matrix,
    emit_report,
    load_report,
    write_json,
)
from .schemagen import build_schema
from .stats import permutation_test

log = logging.getLogger("grade")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND = 2
EXIT_USAGE = 64


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2, which means backend failure here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--cache-dir", dest="cache_dir", help="backend response cache directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grade", description="Attribute-level diversity evaluation for text-to-image models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("schema", help="generate or validate a concept schema")
    _common(p)
    p.add_argument("--out", help="where to write the generated schema")
    p.add_argument("--concepts", help="comma-separated concept names to use")
    p.add_argument("--n-concepts", dest="n_concepts", type=int)
    p.add_argument("--n-common", dest="n_common", type=int)
    p.add_argument("--n-uncommon", dest="n_uncommon", type=int)
    p.add_argument("--n-attributes", dest="n_attributes", type=int)
    p.add_argument("--validate", metavar="SCHEMA", help="only validate an existing schema file")

    p = sub.add_parser("generate", help="generate (or collect) images for every prompt")
    _common(p)
    p.add_argument("--schema", required=True)
    p.add_argument("--out-dir", dest="out_dir", default="runs")
    p.add_argument("--images-per-prompt", dest="images_per_prompt", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument("--manifest", help="manifest path (default <out-dir>/<model>/manifest.jsonl)")

    p = sub.add_parser("extract", help="answer every attribute question on every image")
    _common(p)
    p.add_argument("--schema", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="answers.jsonl")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("score", help="estimate distributions and score a model")
    _common(p)
    p.add_argument("--answers", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--model-id", dest="model_id")
    p.add_argument("--out", default="report.json")
    p.add_argument("--csv", help="also write the score table CSV here")

    p = sub.add_parser("compare", help="pairwise permutation tests and TVD between model reports")
    _common(p)
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--reference", help="dataset-side report; compare each report against it")
    p.add_argument("--permutations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--small-sample-correction", dest="small_sample_correction", action="store_true", default=None)
    p.add_argument("--out", default="compare.json")
    p.add_argument("--matrix-prefix", dest="matrix_prefix", help="write tvd_matrix files with this prefix")

    p = sub.add_parser("filter-captions", help="keep captions that leave an attribute unspecified")
    _common(p)
    p.add_argument("--captions", required=True, help="JSONL of {caption, image_uri}")
    p.add_argument("--schema", required=True)
    p.add_argument("--question", required=True, help="question id from the schema")
    p.add_argument("--cap", type=int)
    p.add_argument("--images-per-caption", dest="images_per_caption", type=int)
    p.add_argument("--out", default="filtered.jsonl")
    p.add_argument("--out-dir", dest="out_dir", help="also write caption/dataset schemas and dataset manifest here")

    p = sub.add_parser("report", help="score tables, histograms and TVD matrices for reports")
    _common(p)
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out-dir", dest="out_dir", default="reports")
    p.add_argument("--bins", type=int, default=20)
    return parser


def _load_valid_schema(path: str) -> ConceptSchema:
    schema = load_schema(path)
    problems = validate_schema(schema)
    if problems:
        for v in problems:
            log.error("schema: %s [%s] %s", v.obj_id, v.rule, v.message)
        raise ValidationFailure(f"{len(problems)} schema violation(s) in {path}")
    return schema


def _client(cfg: dict[str, Any], role: str):
    return make_client(cfgmod.profile(cfg, role), cache_dir=cfg.get("cache_dir"))


def cmd_schema(args, cfg) -> int:
    if args.validate:
        _load_valid_schema(args.validate)
        print(f"{args.validate}: ok")
        return EXIT_OK
    if not args.out:
        raise ValidationFailure("--out is required unless --validate is given")
    names = [c.strip() for c in (args.concepts or "").split(",") if c.strip()]
    n = cfg.get("n_concepts") or len(names)
    if n < 1:
        raise ValidationFailure("give --concepts or --n-concepts")
    client = _client(cfg, "llm")
    schema = build_schema(
        client, names, n, n_common=cfg["n_common"], n_uncommon=cfg["n_uncommon"], n_attributes=cfg["n_attributes"]
    )
    problems = validate_schema(schema)
    dump_schema(schema, args.out)
    if problems:
        for v in problems:
            log.error("schema: %s [%s] %s", v.obj_id, v.rule, v.message)
        return EXIT_VALIDATION
    log.info("schema: %d concepts, %d prompts, %d questions", len(schema.concepts), len(schema.prompts), len(schema.questions))
    return EXIT_OK


def cmd_generate(args, cfg) -> int:
    schema = _load_valid_schema(args.schema)
    prof = cfgmod.profile(cfg, "t2i")
    n, base = cfg["images_per_prompt"], cfg["base_seed"]
    manifest = Path(args.manifest or Path(args.out_dir) / prof.model_name / "manifest.jsonl")
    manifest.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for prompt in schema.prompts:
        for rec in generate_images(prof, prompt, n, base, out_dir=args.out_dir):
            lines.append(json.dumps(rec.to_dict(), sort_keys=True))
    manifest.write_text("".join(line + "\n" for line in lines))
    log.info("generate: %d images -> %s", len(lines), manifest)
    return EXIT_OK


def cmd_extract(args, cfg) -> int:
    schema = _load_valid_schema(args.schema)
    images = read_images(args.manifest)
    out = Path(args.out)
    existing = read_answers(out) if out.exists() else []
    done = {(a.image_id, a.question_id) for a in existing}
    vqa = _client(cfg, "vqa")
    stats = ExtractionStats()
    write_answers(out, extract_answers(schema, images, vqa, done=done, workers=cfg["workers"], stats=stats))

    # rewrite in canonical (manifest, question) order so reruns give identical files
    by_key = {(a.image_id, a.question_id): a for a in read_answers(out)}
    order = []
    for img in images:
        for q in schema.questions_for(schema.prompt(img.prompt_id).concept_id):
            if (img.id, q.id) in by_key:
                order.append(by_key.pop((img.id, q.id)))
    order.extend(by_key.values())
    write_answers(out, order, append=False)
    print(
        f"extract: pairs={stats.n_pairs} skipped={stats.n_skipped} answered={stats.n_answered} "
        f"failed={stats.n_failed} backend_calls={vqa.stats.calls} cache_hits={vqa.stats.cache_hits}",
        file=sys.stderr,
    )
    if stats.n_failed and not stats.n_answered and not stats.n_skipped:
        return EXIT_BACKEND
    return EXIT_OK


def cmd_score(args, cfg) -> int:
    schema = _load_valid_schema(args.schema)
    answers = read_answers(args.answers)
    meta = {"config": cfgmod.provenance(cfg, ("tau",))}
    report = build_report(schema, answers, model_id=cfg.get("model_id"), tau=cfg["tau"], metadata=meta)
    emit_report(report, args.out, "json")
    if args.csv:
        emit_report(report, args.csv, "csv")
    log.info("score: %s multi=%s single=%s", report.model_id, report.mean_multi, report.mean_single)
    return EXIT_OK


def _scores_by_scope(report, kind: str) -> list[float]:
    return [s.entropy for s in report.per_distribution_scores if s.scope.kind == kind]


def cmd_compare(args, cfg) -> int:
    reports = [load_report(p) for p in args.reports]
    names = [r.model_id for r in reports]
    if len(set(names)) != len(names):
        raise ValidationFailure(f"duplicate model ids among reports: {names}")
    out: dict[str, Any] = {
        "config": cfgmod.provenance(cfg, ("permutations", "seed", "alpha", "small_sample_correction")),
        "statistic": "difference of mean per-distribution GRADE scores",
        "models": names,
    }
    if args.reference:
        ref = load_report(args.reference)
        ref_multi = {d.question_id: d for d in ref.distributions if d.scope.kind == "multi" and d.valid}
        rows = []
        for r in reports:
            per_q = [
                compare_to_reference(d, ref_multi[d.question_id]).to_dict()
                for d in r.distributions
                if d.scope.kind == "multi" and d.valid and d.question_id in ref_multi
            ]
            rows.append({"model": r.model_id, "dataset": ref.model_id, **_mean_row(per_q), "per_question": per_q})
        out["reference"] = rows
        write_json(args.out, out)
        return EXIT_OK

    by_model = {r.model_id: r for r in reports}
    for kind in ("multi", "single"):
        pairs = []
        tvds = {}
        for a, b in itertools.combinations(names, 2):
            xa, xb = _scores_by_scope(by_model[a], kind), _scores_by_scope(by_model[b], kind)
            row: dict[str, Any] = {"a": a, "b": b}
            if xa and xb:
                res = permutation_test(
                    xa,
                    xb,
                    cfg["permutations"],
                    cfg["alpha"],
                    cfg["seed"],
                    pair_id=f"{kind}|{a}|{b}",
                    small_sample_correction=cfg["small_sample_correction"],
                )
                row.update(d_obs=res.d_obs, p_value=res.p_value, significant=res.significant, count=res.count)
            try:
                t, k = mean_tvd(
                    [d for d in by_model[a].distributions if d.scope.kind == kind],
                    [d for d in by_model[b].distributions if d.scope.kind == kind],
                )
                row.update(mean_tvd=t, n_matched=k)
                tvds[(a, b)] = t
            except ValueError:
                pass
            pairs.append(row)
        out[kind] = {"pairs": pairs}
        if args.matrix_prefix and len(tvds) == len(pairs) and pairs:
            emit_pairwise_matrix(names, tvds, f"{args.matrix_prefix}_{kind}", "tvd")
    write_json(args.out, out)
    return EXIT_OK


def _mean_row(per_q: list[dict[str, Any]]) -> dict[str, Any]:
    def mean(key):
        vals = [r[key] for r in per_q if r[key] is not None]
        return sum(vals) / len(vals) if vals else None

    return {k: mean(k) for k in ("entropy_model", "entropy_dataset", "pcc", "tvd")} | {"n_questions": len(per_q)}


def cmd_filter_captions(args, cfg) -> int:
    schema = _load_valid_schema(args.schema)
    q = schema.question(args.question)
    concept = schema.concept(q.concept_id)
    client = _client(cfg, "llm")
    res = collect_filtered(client, read_jsonl(args.captions), concept, q, cap=cfg["cap"], workers=cfg["workers"])
    Path(args.out).write_text("".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in res.kept))
    print(
        f"filter-captions: seen={res.n_seen} kept={len(res.kept)} rejected={res.n_rejected} undecided={res.n_undecided}",
        file=sys.stderr,
    )
    if args.out_dir:
        od = Path(args.out_dir)
        od.mkdir(parents=True, exist_ok=True)
        usable = [r for r in res.kept if mentions_concept(str(r["caption"]), concept.name)]
        if len(usable) < len(res.kept):
            log.warning("%d kept captions lack the concept token; left out of the generation schema", len(res.kept) - len(usable))
        only = ConceptSchema((concept,), (), (q,), (schema.support(q.id),))
        dump_schema(with_prompts(only, concept.id, caption_prompts(concept, usable)), od / "caption_schema.json")
        prompt, images = dataset_images(concept, res.kept)
        dump_schema(with_prompts(only, concept.id, [prompt]), od / "dataset_schema.json")
        (od / "dataset_manifest.jsonl").write_text(
            "".join(json.dumps(i.to_dict(), sort_keys=True) + "\n" for i in images)
        )
        (od / "generation.json").write_text(
            json.dumps({"images_per_prompt": cfg["images_per_caption"], "base_seed": cfg["base_seed"]}, indent=2) + "\n"
        )
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    reports = [load_report(p) for p in args.reports]
    od = Path(args.out_dir)
    emit_report(reports, od / "report.csv", "csv")
    for r in reports:
        for kind in ("multi", "single"):
            vals = _scores_by_scope(r, kind)
            if vals:
                emit_histogram(vals, od / f"hist_{r.model_id}_{kind}.svg", bins=args.bins, title=f"{r.model_id} ({kind})")
        for d in r.distributions:
            if d.scope.kind == "multi" and d.valid:
                emit_distribution_histogram(d, od / r.model_id / f"hist_{d.question_id}.svg")
    if len(reports) > 1:
        names = [r.model_id for r in reports]
        for kind in ("multi", "single"):
            vals = {}
            for a, b in itertools.combinations(reports, 2):
                try:
                    vals[(a.model_id, b.model_id)] = mean_tvd(
                        [d for d in a.distributions if d.scope.kind == kind],
                        [d for d in b.distributions if d.scope.kind == kind],
                    )[0]
                except ValueError:
                    break
            else:
                emit_pairwise_matrix(names, vals, od / f"tvd_matrix_{kind}", "tvd")
    return EXIT_OK


COMMANDS = {
    "schema": cmd_schema,
    "generate": cmd_generate,
    "extract": cmd_extract,
    "score": cmd_score,
    "compare": cmd_compare,
    "filter-captions": cmd_filter_captions,
    "report": cmd_report,
}

_FLAG_KEYS = (
    "cache_dir", "n_concepts", "n_common", "n_uncommon", "n_attributes", "images_per_prompt", "base_seed",
    "workers", "tau", "model_id", "permutations", "seed", "alpha", "small_sample_correction", "cap",
    "images_per_caption",
)  # fmt: skip


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    flags = {k: getattr(args, k, None) for k in _FLAG_KEYS}
    try:
        cfg = cfgmod.resolve(args.config, flags)
        return COMMANDS[args.command](args, cfg)
    except BackendError as e:
        log.error("backend failure: %s", e)
        return EXIT_BACKEND
    except (ValidationFailure, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as e:
        log.error("%s", e)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
