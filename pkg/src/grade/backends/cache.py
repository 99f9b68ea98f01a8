from __future__ import annotations

import json
import os
import tempfile
import time
from pathlib import Path
from typing import Any

from .base import canonical_json


class ResponseCache:
    """Content-addressed response store, ``<root>/<role>/<hh>/<hash>.json``.

    Writes go through a temp file plus ``os.replace`` so concurrent readers
    never observe a partial entry.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, role: str, key: str) -> Path:
        return self.root / role / key[:2] / f"{key}.json"

    def get(self, role: str, key: str) -> Any | None:
        p = self.path(role, key)
        try:
            entry = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        return json.loads(entry["response"])

    def put(self, role: str, key: str, response: Any) -> None:
        p = self.path(role, key)
        p.parent.mkdir(parents=True, exist_ok=True)
        entry = {"request_hash": key, "response": canonical_json(response), "timestamp": time.time()}
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh)
            os.replace(tmp, p)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def __contains__(self, item: tuple[str, str]) -> bool:
        return self.path(*item).exists()


class MemoryCache:
    def __init__(self) -> None:
        self._d: dict[tuple[str, str], str] = {}

    def get(self, role: str, key: str) -> Any | None:
        raw = self._d.get((role, key))
        return None if raw is None else json.loads(raw)

    def put(self, role: str, key: str, response: Any) -> None:
        self._d[(role, key)] = canonical_json(response)

    def __contains__(self, item: tuple[str, str]) -> bool:
        return item in self._d
