import json

import pytest

from grade.backends import BackendClient, BackendProfile, MemoryCache, MockTransport
from grade.model import (
    AttributeQuestion,
    Concept,
    ConceptSchema,
    Prompt,
    SupportSet,
)


def mock_client(role, fixtures=(), cache=None, **profile_kw):
    profile = BackendProfile(role=role, kind="mock", model_name=f"mock-{role}", backoff_sec=0.0, **profile_kw)
    return BackendClient(profile, transport=MockTransport(fixtures), cache=cache or MemoryCache(), sleep=lambda s: None)


@pytest.fixture
def make_client():
    return mock_client


@pytest.fixture
def four_concept_schema():
    """Four concepts with one question each and hand-written supports."""
    rows = [
        ("teapot", "What shape is the teapot?", "shape",
         ["rectangular", "spherical", "oval", "round", "square", "cylindrical"]),
        ("person", "Does the person appear to be alone or with others?", "company", ["alone", "with others"]),
        ("suitcase", "Is this a vintage suitcase?", "vintage", ["yes", "no"]),
        ("bear", "What species of bear is depicted in the image?", "species",
         ["polar bear", "black bear", "sloth bear", "grizzly bear", "sun bear", "panda bear"]),
    ]  # fmt: skip
    concepts, prompts, questions, supports = [], [], [], []
    for name, q, label, values in rows:
        concepts.append(Concept(name, name))
        prompts.append(Prompt(f"{name}-common-0", name, f"a {name} in a living room", "common", 0))
        prompts.append(Prompt(f"{name}-uncommon-0", name, f"a {name} on the moon", "uncommon", 0))
        questions.append(AttributeQuestion(f"{name}-{label}", name, label, q))
        supports.append(SupportSet(f"{name}-{label}", tuple(values)))
    return ConceptSchema(tuple(concepts), tuple(prompts), tuple(questions), tuple(supports))


@pytest.fixture
def cookie_schema():
    c = Concept("cookie", "cookie")
    prompts = tuple(
        Prompt(f"cookie-{k}-{i}", "cookie", t, k, i)
        for k, texts in (
            ("common", ["a cookie during Christmas festivities", "a cookie in a bakery", "a cookie on a plate"]),
            ("uncommon", ["a cookie in a volcano crater", "a cookie on the moon", "a cookie under the sea"]),
        )
        for i, t in enumerate(texts)
    )
    qs = (
        AttributeQuestion("cookie-shape", "cookie", "shape", "What is the shape of the cookie?"),
        AttributeQuestion("cookie-color", "cookie", "color", "What color is the cookie?"),
    )
    sups = (
        SupportSet("cookie-shape", ("round", "square", "star", "heart-shaped")),
        SupportSet("cookie-color", ("brown", "golden brown", "white")),
    )
    return ConceptSchema((c,), prompts, qs, sups)


def mock_pipeline(work, model="mock-t2i", images_per_prompt=10, concepts="cookie,teapot"):
    """schema -> generate -> extract -> score against the bundled mock backends.

    Returns the report path. ``work`` holds the config, cache and outputs."""
    from grade.cli import main

    work.mkdir(parents=True, exist_ok=True)
    cfg = work / "config.json"
    cfg.write_text(json.dumps({"profiles": {"t2i": {"model_name": model}}, "cache_dir": str(work / "cache")}))
    common = ["--config", str(cfg)]
    schema, runs, answers, report = work / "schema.json", work / "runs", work / "answers.jsonl", work / "report.json"
    steps = [
        ["schema", "--out", str(schema), "--concepts", concepts, "--n-attributes", "2"],
        ["generate", "--schema", str(schema), "--out-dir", str(runs), "--images-per-prompt", str(images_per_prompt)],
        ["extract", "--schema", str(schema), "--manifest", str(runs / model / "manifest.jsonl"), "--out", str(answers)],
        ["score", "--schema", str(schema), "--answers", str(answers), "--out", str(report)],
    ]
    for argv in steps:
        rc = main(argv + common)
        assert rc == 0, (argv, rc)
    return report
