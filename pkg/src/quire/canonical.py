"""Canonical serialization helpers.

All persisted documents (templates, records, curation state, mappings,
reports) are canonical JSON: UTF-8, sorted keys, two-space indent, LF line
endings, trailing newline. Identical values always produce identical bytes,
which makes version diffs meaningful and content hashes stable.
"""

from __future__ import annotations

import hashlib
import json


def canonical_json_bytes(obj) -> bytes:
    return (json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n").encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
