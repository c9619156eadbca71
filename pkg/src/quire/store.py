"""Versioned storage for templates and records.

Every save appends a new immutable version; nothing is ever rewritten, so any
historical state can be reproduced exactly. Files are canonical JSON, one per
version, named by zero-padded version number; the directory listing is the
version index, and two stores holding the same content are byte-identical.

Publishing marks one version of a record as the one downstream stages see.
The published version drives curation and transformation; draft saves above
it change nothing downstream until published.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from .canonical import canonical_json_bytes, sha256_hex
from .errors import (
    DocumentParseError,
    RecordInvalid,
    RecordNotFound,
    StoreCorrupt,
    TemplateInvalid,
    TemplateNotFound,
    VersionNotFound,
)
from .records import (
    Record,
    Template,
    TemplateChange,
    evolve_template,
    extract_mentions,
    record_bytes,
    record_from_doc,
    record_to_doc,
    template_bytes,
    template_from_doc,
    validate_record,
)


@dataclass(frozen=True)
class VersionInfo:
    version: int
    timestamp: str
    author: str
    content_hash: str


def _write_atomic(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _version_path(directory: Path, version: int) -> Path:
    return directory / f"{version:06d}.json"


def _versions_on_disk(directory: Path) -> list[int]:
    if not directory.is_dir():
        return []
    versions = []
    for name in os.listdir(directory):
        stem, dot, ext = name.partition(".")
        if ext == "json" and stem.isdigit():
            versions.append(int(stem))
    return sorted(versions)


class RecordStore:
    """Append-only store of templates and records under one directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.templates_dir = self.root / "templates"
        self.records_dir = self.root / "records"
        self.templates_dir.mkdir(parents=True, exist_ok=True)
        self.records_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # --- templates -----------------------------------------------------

    def put_template(self, template: Template) -> VersionInfo:
        """Store a template version. The version must be exactly one above
        the latest stored (or 1 for a new template)."""
        with self._lock:
            directory = self.templates_dir / template.id
            versions = _versions_on_disk(directory)
            expected = (versions[-1] + 1) if versions else 1
            if template.version != expected:
                raise TemplateInvalid(
                    f"template {template.id!r}: expected version {expected}, got {template.version}"
                )
            directory.mkdir(parents=True, exist_ok=True)
            data = template_bytes(template)
            _write_atomic(_version_path(directory, template.version), data)
            return VersionInfo(template.version, "", "", sha256_hex(data))

    def get_template(self, template_id: str, version: int | None = None) -> Template:
        directory = self.templates_dir / template_id
        versions = _versions_on_disk(directory)
        if not versions:
            raise TemplateNotFound(f"no template {template_id!r}")
        if version is None:
            version = versions[-1]
        elif version not in versions:
            raise VersionNotFound(f"template {template_id!r} has no version {version}")
        return template_from_doc(self._load(_version_path(directory, version)))

    def evolve_template(self, template_id: str, change: TemplateChange) -> Template:
        with self._lock:
            directory = self.templates_dir / template_id
            versions = _versions_on_disk(directory)
            if not versions:
                raise TemplateNotFound(f"no template {template_id!r}")
            current = template_from_doc(self._load(_version_path(directory, versions[-1])))
            evolved = evolve_template(current, change)
            data = template_bytes(evolved)
            _write_atomic(_version_path(directory, evolved.version), data)
            return evolved

    def list_templates(self) -> list[tuple[str, int]]:
        out = []
        for entry in sorted(os.listdir(self.templates_dir)):
            versions = _versions_on_disk(self.templates_dir / entry)
            if versions:
                out.append((entry, versions[-1]))
        return out

    # --- records ---------------------------------------------------------

    def put_record(self, record: Record, author: str = "", timestamp: str = "") -> VersionInfo:
        """Append a record version after validating it.

        Per-table row counts may only grow (rows are tombstoned, not removed),
        so an anchor that was ever valid stays resolvable in every later
        version.
        """
        with self._lock:
            template = self.get_template(record.template_id)
            violations = validate_record(record, template)
            if violations:
                raise RecordInvalid(
                    f"record {record.id!r} fails validation: " + "; ".join(str(v) for v in violations),
                    violations=violations,
                )
            directory = self.records_dir / record.id
            versions = _versions_on_disk(directory)
            if versions:
                previous = self._read_record(record.id, versions[-1])
                if previous.template_id != record.template_id:
                    raise RecordInvalid(
                        f"record {record.id!r} cannot switch template "
                        f"{previous.template_id!r} -> {record.template_id!r}",
                        violations=[],
                    )
                for name, rows in previous.tables.items():
                    if len(record.tables.get(name, ())) < len(rows):
                        raise RecordInvalid(
                            f"record {record.id!r} shrinks table {name!r}; delete rows by tombstone",
                            violations=[],
                        )
            version = (versions[-1] + 1) if versions else 1
            directory.mkdir(parents=True, exist_ok=True)
            body = record_to_doc(record)
            data = canonical_json_bytes(
                {"author": author, "record": body, "timestamp": timestamp, "version": version}
            )
            _write_atomic(_version_path(directory, version), data)
            return VersionInfo(version, timestamp, author, sha256_hex(record_bytes(record)))

    def get_record(self, record_id: str, version: int | None = None) -> Record:
        directory = self.records_dir / record_id
        versions = _versions_on_disk(directory)
        if not versions:
            raise RecordNotFound(f"no record {record_id!r}")
        if version is None:
            version = versions[-1]
        elif version not in versions:
            raise VersionNotFound(f"record {record_id!r} has no version {version}")
        return self._read_record(record_id, version)

    def record_versions(self, record_id: str) -> list[VersionInfo]:
        directory = self.records_dir / record_id
        versions = _versions_on_disk(directory)
        if not versions:
            raise RecordNotFound(f"no record {record_id!r}")
        out = []
        for v in versions:
            doc = self._load(_version_path(directory, v))
            out.append(
                VersionInfo(
                    version=v,
                    timestamp=doc.get("timestamp", ""),
                    author=doc.get("author", ""),
                    content_hash=sha256_hex(canonical_json_bytes(doc["record"])),
                )
            )
        return out

    def list_records(self) -> list[str]:
        return sorted(
            entry for entry in os.listdir(self.records_dir) if _versions_on_disk(self.records_dir / entry)
        )

    # --- publishing ------------------------------------------------------

    def publish_record(self, record_id: str, version: int | None = None):
        """Mark a version as published and hand back its curation input."""
        with self._lock:
            directory = self.records_dir / record_id
            versions = _versions_on_disk(directory)
            if not versions:
                raise RecordNotFound(f"no record {record_id!r}")
            if version is None:
                version = versions[-1]
            elif version not in versions:
                raise VersionNotFound(f"record {record_id!r} has no version {version}")
            record = self._read_record(record_id, version)
            template = self.get_template(record.template_id)
            _write_atomic(directory / "publish.json", canonical_json_bytes({"version": version}))
            return record, extract_mentions(record, template)

    def published_version(self, record_id: str) -> int | None:
        path = self.records_dir / record_id / "publish.json"
        if not path.exists():
            if not _versions_on_disk(self.records_dir / record_id):
                raise RecordNotFound(f"no record {record_id!r}")
            return None
        return int(self._load(path)["version"])

    def published_record(self, record_id: str) -> Record | None:
        version = self.published_version(record_id)
        if version is None:
            return None
        return self._read_record(record_id, version)

    def published_records(self) -> list[Record]:
        out = []
        for record_id in self.list_records():
            record = self.published_record(record_id)
            if record is not None:
                out.append(record)
        return out

    # --- internals -------------------------------------------------------

    def _read_record(self, record_id: str, version: int) -> Record:
        doc = self._load(_version_path(self.records_dir / record_id, version))
        return record_from_doc(doc["record"])

    def _load(self, path: Path) -> dict:
        try:
            with open(path, "rb") as fh:
                return json.load(fh)
        except FileNotFoundError:
            raise StoreCorrupt(f"missing version file {path}", path=str(path)) from None
        except json.JSONDecodeError as exc:
            raise StoreCorrupt(f"unreadable store file {path}: {exc}", path=str(path)) from exc
