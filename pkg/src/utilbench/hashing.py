"""Stable hashing helpers: prompt hashes, config hashes, derived RNG seeds.

Everything here must be stable across processes and platforms, so the
builtin ``hash`` (randomized per process for str) is never used.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

_SEP = b"\x1f"


def text_hash(text: str) -> str:
    """Hex SHA-256 of a string. Used as the prompt hash everywhere."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def config_hash(obj: Any) -> str:
    """Short stable hash of a JSON-serializable config object."""
    canonical = json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def derive_seed(*parts: object) -> int:
    """Derive a 64-bit RNG seed from an arbitrary tuple of parts.

    Any sub-task that needs randomness seeds its own generator through this,
    so parallel execution order never affects the draws.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(_SEP)
    return int.from_bytes(h.digest()[:8], "big")
