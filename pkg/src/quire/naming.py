"""Identifier and IRI construction.

Every generated identifier in the engine is a pure function of its inputs:
slugs and value hashes for resource tails, anchor hashes for local-instance
ids, position hashes for intermediate nodes. Re-running any pipeline stage
over the same inputs therefore reproduces the same IRIs, which is what makes
graph refreshes diffable and idempotent.

IRIs follow a three-part shape: a common prefix, a type segment, and a tail
derived from the resource's content or position.
"""

from __future__ import annotations

import hashlib
from urllib.parse import quote

from .errors import EmptySlug

# joins multi-part hash inputs unambiguously (US, "unit separator")
_SEP = "\x1f"

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
XSD = "http://www.w3.org/2001/XMLSchema#"


def slug(text: str) -> str:
    """Lower-case ``text``, collapse runs of whitespace/punctuation to "-".

    Raises EmptySlug when nothing survives (all-punctuation input); callers
    that mint IRIs fall back to a content hash in that case.
    """
    out: list[str] = []
    pending_sep = False
    for ch in text.lower():
        if ch.isalnum():
            if pending_sep and out:
                out.append("-")
            pending_sep = False
            out.append(ch)
        else:
            pending_sep = True
    if not out:
        raise EmptySlug(f"no usable characters in {text!r}")
    return "".join(out)


def slug_or_hash(text: str) -> str:
    try:
        return slug(text)
    except EmptySlug:
        return content_hash(text)


def content_hash(*args: str) -> str:
    """SHA-256 over the UTF-8 of ``args`` joined by the unit separator, first 32 hex chars."""
    digest = hashlib.sha256(_SEP.join(args).encode("utf-8")).hexdigest()
    return digest[:32]


def short_hash(*args: str, length: int = 16) -> str:
    return hashlib.sha256(_SEP.join(args).encode("utf-8")).hexdigest()[:length]


def local_instance_id(entity_type: str, record_id: str, table: str, row: int, columns: tuple[str, ...]) -> str:
    """Stable id of one entity occurrence, keyed by its anchor."""
    return "l" + short_hash(entity_type, record_id, table, str(row), *columns)


def singleton_master_id(local_id: str) -> str:
    return "m" + local_id[1:]


def node_id(record_id: str, table: str, row: int, role: str) -> str:
    """Deterministic id for an intermediate node (one per row and role)."""
    return content_hash(record_id, table, str(row), role)


def encode_segment(raw: str) -> str:
    """Percent-encode an arbitrary identifier into one IRI path segment (bijective)."""
    return quote(raw, safe="")


def local_instance_iri(prefix: str, entity_type: str, local_id: str) -> str:
    return f"{prefix}/{slug_or_hash(entity_type)}/local/{local_id}"


def record_iri(prefix: str, record_id: str) -> str:
    return f"{prefix}/record/{encode_segment(record_id)}"


def provenance_node_iri(prefix: str, record_id: str, table: str, row: int, subject_iri: str) -> str:
    return f"{prefix}/provenance/{content_hash(record_id, table, str(row), subject_iri)}"
