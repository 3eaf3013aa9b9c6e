"""Canonical JSON helpers used for golden files and content digests."""

import hashlib
import json
from typing import Any


def _round_floats(value: Any) -> Any:
    if isinstance(value, float):
        return round(value, 6)
    if isinstance(value, dict):
        return {k: _round_floats(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_round_floats(v) for v in value]
    return value


def canonical_dumps(obj: Any) -> str:
    """Serialize with sorted keys and floats rounded to 6 decimals."""
    return json.dumps(_round_floats(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(obj: Any) -> str:
    """Stable sha256 hex digest of a JSON-serializable object."""
    return hashlib.sha256(canonical_dumps(obj).encode("utf-8")).hexdigest()
