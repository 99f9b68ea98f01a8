"""Run configuration: built-in defaults, optional JSON file, CLI flags."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .backends import BackendProfile

DEMO_FIXTURES = "@demo"

DEFAULTS: dict[str, Any] = {
    "n_common": 3,
    "n_uncommon": 3,
    "n_attributes": 4,
    "images_per_prompt": 100,
    "base_seed": 0,
    "tau": 0.8,
    "permutations": 100_000,
    "alpha": 0.05,
    "seed": 0,
    "small_sample_correction": False,
    "cap": 150,
    "images_per_caption": 20,
    "workers": 4,
    "cache_dir": ".grade-cache",
    "profiles": {
        "llm": {"role": "llm", "name": "llm", "kind": "mock", "model_name": "mock-llm", "fixtures": DEMO_FIXTURES},
        "vqa": {"role": "vqa", "name": "vqa", "kind": "mock", "model_name": "mock-vqa", "fixtures": DEMO_FIXTURES},
        "t2i": {"role": "t2i", "name": "t2i", "kind": "mock", "model_name": "mock-t2i"},
    },
}


def deep_merge(base: Mapping[str, Any], over: Mapping[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(dict(base))
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(config_path: str | Path | None = None, flags: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """flags > config file > defaults. ``None`` flag values count as unset."""
    cfg = copy.deepcopy(DEFAULTS)
    if config_path:
        cfg = deep_merge(cfg, json.loads(Path(config_path).read_text()))
    if flags:
        cfg = deep_merge(cfg, {k: v for k, v in flags.items() if v is not None})
    return cfg


def demo_fixtures_path() -> str:
    return str(resources.files("grade").joinpath("data/demo_fixtures.jsonl"))


def profile(cfg: Mapping[str, Any], role: str) -> BackendProfile:
    d = dict(cfg["profiles"][role])
    d.setdefault("role", role)
    d.setdefault("name", role)
    if d.get("fixtures") == DEMO_FIXTURES:
        d["fixtures"] = demo_fixtures_path()
    return BackendProfile.from_dict(d)


def provenance(cfg: Mapping[str, Any], keys: tuple[str, ...]) -> dict[str, Any]:
    """The subset of the resolved config worth embedding in an output."""
    out = {k: cfg[k] for k in keys if k in cfg}
    if "profiles" in keys:
        out["profiles"] = {
            r: {k: v for k, v in p.items() if k not in ("auth", "endpoint")} for r, p in cfg["profiles"].items()
        }
    return out
