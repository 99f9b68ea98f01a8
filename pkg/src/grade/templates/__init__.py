"""Editable prompt templates with ``{name}`` placeholders."""

from __future__ import annotations

import os
from functools import lru_cache
from importlib import resources
from pathlib import Path

# Point GRADE_TEMPLATE_DIR at a directory of same-named .txt files to override.
_ENV = "GRADE_TEMPLATE_DIR"


@lru_cache(maxsize=None)
def _load(name: str, override: str | None) -> str:
    if override:
        p = Path(override) / f"{name}.txt"
        if p.exists():
            return p.read_text(encoding="utf-8")
    return resources.files(__name__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def load(name: str) -> str:
    return _load(name, os.environ.get(_ENV))


def render(name: str, **values: object) -> str:
    text = load(name)
    for k, v in values.items():
        text = text.replace("{" + k + "}", str(v))
    return text.strip()
