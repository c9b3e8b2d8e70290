"""Canonical serialization and digests.

Every hashed or signed structure in the system is a JSON-compatible dict
reduced to canonical bytes: keys sorted, no insignificant whitespace,
UTF-8.  Two structurally equal dicts always produce identical bytes, which
is what makes block digests and signatures comparable across nodes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

# Only these leaf types may appear in canonical structures.  Floats are
# excluded on purpose: protocol values are ints, strings, bools, or None.
_LEAF_TYPES = (str, int, bool, type(None))


def _check(obj: Any, path: str = "$") -> None:
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return
    if isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(obj, dict):
        for key, value in obj.items():
            if not isinstance(key, str):
                raise TypeError(f"non-string key at {path}: {key!r}")
            _check(value, f"{path}.{key}")
        return
    raise TypeError(f"non-canonical value at {path}: {type(obj).__name__}")


def canonical_bytes(obj: Any) -> bytes:
    """Serialize obj to canonical JSON bytes.

    Raises TypeError for values outside the canonical subset (floats,
    bytes, custom classes, non-string keys).
    """
    _check(obj)
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_hex(obj: Any) -> str:
    """SHA-256 of the canonical serialization, as lowercase hex."""
    return sha256_hex(canonical_bytes(obj))


def derive_seed(root_seed: int, label: str) -> int:
    """Derive an independent integer seed for a named RNG stream."""
    raw = hashlib.sha256(f"{root_seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(raw[:8], "big")
