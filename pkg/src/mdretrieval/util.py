"""Small shared helpers: stable seed derivation, content hashing, canonical JSON."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def derive_seed(root: int, *labels: object) -> int:
    """Derive a child seed from a root seed and a label path.

    Stable across runs and platforms (unlike Python's builtin hash), so any
    stage of a pipeline can get its own reproducible RNG stream.
    """
    key = "/".join([str(root), *(str(x) for x in labels)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj: object) -> str:
    """Deterministic JSON rendering (sorted keys, no whitespace jitter)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
