from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import struct
import time
import zlib
from pathlib import Path

import httpx

from ..model import ImageRecord, Prompt
from .base import BackendError, BackendProfile, RetriableBackendError, ShortfallError, canonical_json
from .vqa import MOCK_SCHEME

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def _png(width: int, height: int, rgb: bytes) -> bytes:
    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    rows = b"".join(b"\x00" + rgb * width for _ in range(height))
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(rows, 9)) + chunk(b"IEND", b"")


def mock_image_bytes(model_name: str, prompt_text: str, seed: int) -> bytes:
    """A deterministic 8x8 solid-color PNG."""
    h = hashlib.sha256(canonical_json([model_name, prompt_text, seed]).encode()).digest()
    return _png(8, 8, h[:3])


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def image_path(out_dir: str | Path, model_id: str, prompt: Prompt, seed: int) -> Path:
    return Path(out_dir) / model_id / prompt.concept_id / prompt.id / f"{seed}.png"


def _record(model_id: str, prompt: Prompt, seed: int, uri: str, data: bytes) -> ImageRecord:
    return ImageRecord(
        id=f"{model_id}/{prompt.id}/{seed}",
        prompt_id=prompt.id,
        model_id=model_id,
        seed=seed,
        uri=uri,
        content_hash=content_hash(data),
    )


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".part")
    tmp.write_bytes(data)
    tmp.replace(path)


def _http_generate(profile: BackendProfile, prompt: Prompt, seed: int, client: httpx.Client) -> bytes:
    body = {"model": profile.model_name, "prompt": prompt.text, "seed": seed, **profile.settings}
    key = os.environ.get(profile.auth_env)
    headers = {"Authorization": f"Bearer {key}"} if key else {}
    last = None
    for i in range(profile.max_retries + 1):
        try:
            r = client.post(profile.endpoint, json=body, headers=headers, timeout=profile.request_timeout)
            if r.status_code < 400:
                if r.headers.get("content-type", "").startswith("application/json"):
                    return base64.b64decode(r.json()["image_b64"])
                return r.content
            if r.status_code < 500 and r.status_code != 429:
                raise BackendError(f"HTTP {r.status_code}: {r.text[:200]}")
            last = f"HTTP {r.status_code}"
        except httpx.HTTPError as e:
            last = f"{type(e).__name__}: {e}"
        if i < profile.max_retries:
            time.sleep(profile.backoff_sec * 2**i)
    raise RetriableBackendError(f"t2i {profile.model_name}: gave up on seed {seed}: {last}")


def generate_images(
    profile: BackendProfile,
    prompt: Prompt,
    n: int,
    base_seed: int = 0,
    out_dir: str | Path | None = None,
    http: httpx.Client | None = None,
) -> list[ImageRecord]:
    """Produce ``n`` images for ``prompt`` with seeds ``base_seed .. base_seed+n-1``.

    Images already present under ``out_dir`` are reused, so reruns only
    fill gaps. The directory backend never generates; it pairs files listed
    in ``<endpoint>/manifest.json`` (``{prompt_id: [file, ...]}``) with seeds.
    """
    if profile.role != "t2i":
        raise BackendError(f"generate_images needs a t2i profile, got {profile.role!r}")
    if n < 0:
        raise ValueError("n must be >= 0")
    model_id = profile.model_name
    seeds = range(base_seed, base_seed + n)

    if profile.kind == "directory":
        root = Path(profile.endpoint)
        manifest = json.loads((root / MANIFEST).read_text())
        files = list(manifest.get(prompt.id, []))
        if len(files) < n:
            missing = n - len(files)
            raise ShortfallError(
                f"directory backend has {len(files)} images for prompt {prompt.id}, need {n} ({missing} missing)",
                missing=missing,
            )
        out = []
        for seed, f in zip(seeds, files):
            p = root / f
            out.append(_record(model_id, prompt, seed, str(p), p.read_bytes()))
        return out

    records = []
    for seed in seeds:
        if profile.kind == "mock":
            if out_dir is None:
                uri = f"{MOCK_SCHEME}{model_id}/{prompt.id}/{seed}"
                records.append(_record(model_id, prompt, seed, uri, uri.encode()))
                continue
            path = image_path(out_dir, model_id, prompt, seed)
            if not path.exists():
                _write(path, mock_image_bytes(model_id, prompt.text, seed))
        else:
            if out_dir is None:
                raise ValueError("http t2i backend needs an output directory")
            path = image_path(out_dir, model_id, prompt, seed)
            if not path.exists():
                if http is None:
                    http = httpx.Client()
                _write(path, _http_generate(profile, prompt, seed, http))
        records.append(_record(model_id, prompt, seed, str(path), path.read_bytes()))
    return records
