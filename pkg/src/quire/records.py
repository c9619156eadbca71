"""Templates, records, and mention extraction.

A template defines the tables and columns of one source type; a record holds
the transcribed content of one archival document against a pinned template
version. Transcription is verbatim: cells keep exactly what was entered
(no trimming, no case changes), missing source data stays an empty cell, and
deleted rows become tombstones so row indexes (the anchor unit of the whole
provenance chain) never shift.

Templates evolve additively: new tables and columns may be added and existing
ones renamed (the former name is kept as an alias), so every record written
against version v still validates against v+1 with absent columns read as
empty cells. Destructive changes are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .canonical import canonical_json_bytes
from .errors import DocumentParseError, TemplateChangeRejected, TemplateInvalid, TemplateNotFound
from .naming import local_instance_id

LITERAL_KINDS = ("text", "date", "number")
REF_KINDS = ("entity-ref", "vocab-term")

FORMAT_VERSION = 1


@dataclass(frozen=True)
class FieldKind:
    """What a column holds: a plain value, or a reference to be curated."""

    kind: str
    ref: str | None = None  # entity type for entity-ref, vocabulary for vocab-term

    def __post_init__(self):
        if self.kind in LITERAL_KINDS:
            if self.ref is not None:
                raise TemplateInvalid(f"field kind {self.kind!r} takes no reference")
        elif self.kind in REF_KINDS:
            if not self.ref:
                raise TemplateInvalid(f"field kind {self.kind!r} requires a reference name")
        else:
            raise TemplateInvalid(f"unknown field kind {self.kind!r}")

    def token(self) -> str:
        return self.kind if self.ref is None else f"{self.kind}:{self.ref}"

    @classmethod
    def parse(cls, token: str) -> "FieldKind":
        if ":" in token:
            kind, ref = token.split(":", 1)
            return cls(kind, ref)
        return cls(token)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: FieldKind
    required: bool = False
    # columns sharing an entity_group (and entity type) form one entity
    # occurrence per row; an ungrouped entity-ref column is its own group
    entity_group: str | None = None
    # attribute role the column fills on the curated entity; defaults to name
    role: str | None = None
    former_names: tuple[str, ...] = ()

    @property
    def effective_role(self) -> str:
        return self.role if self.role is not None else self.name


@dataclass(frozen=True)
class TableSpec:
    name: str
    columns: tuple[ColumnSpec, ...]
    multi_row: bool = True
    former_names: tuple[str, ...] = ()

    def column(self, name: str) -> ColumnSpec | None:
        for col in self.columns:
            if col.name == name or name in col.former_names:
                return col
        return None


@dataclass(frozen=True)
class EntityGroup:
    """One group of entity-ref columns that together describe one entity."""

    key: str
    entity_type: str
    columns: tuple[str, ...]  # current names, in template order
    anchor_columns: tuple[str, ...]  # original names, same order
    roles: tuple[str, ...]


@dataclass(frozen=True)
class Template:
    id: str
    name: str
    version: int
    tables: tuple[TableSpec, ...]

    def __post_init__(self):
        if self.version < 1:
            raise TemplateInvalid("template version must be >= 1")
        seen: set[str] = set()
        for table in self.tables:
            for alias in (table.name, *table.former_names):
                if alias in seen:
                    raise TemplateInvalid(f"duplicate table name {alias!r}")
                seen.add(alias)
            col_names: set[str] = set()
            for col in table.columns:
                for alias in (col.name, *col.former_names):
                    if alias in col_names:
                        raise TemplateInvalid(f"duplicate column {alias!r} in table {table.name!r}")
                    col_names.add(alias)
            by_group: dict[str, str] = {}
            for col in table.columns:
                if col.entity_group is not None and col.kind.kind != "entity-ref":
                    raise TemplateInvalid(
                        f"column {table.name}.{col.name} has an entity_group but is not entity-ref"
                    )
                if col.kind.kind == "entity-ref" and col.entity_group is not None:
                    prev = by_group.setdefault(col.entity_group, col.kind.ref)
                    if prev != col.kind.ref:
                        raise TemplateInvalid(
                            f"entity_group {col.entity_group!r} in table {table.name!r} mixes entity types"
                        )

    def table(self, name: str) -> TableSpec | None:
        for table in self.tables:
            if table.name == name or name in table.former_names:
                return table
        return None

    def entity_groups(self, table_name: str) -> tuple[EntityGroup, ...]:
        """Entity groups of a table, in order of first appearance.

        Ungrouped entity-ref columns each form a singleton group keyed by
        their column name.
        """
        table = self.table(table_name)
        if table is None:
            return ()
        order: list[str] = []
        members: dict[str, list[ColumnSpec]] = {}
        for col in table.columns:
            if col.kind.kind != "entity-ref":
                continue
            key = col.entity_group if col.entity_group is not None else col.name
            if key not in members:
                members[key] = []
                order.append(key)
            members[key].append(col)
        groups = []
        for key in order:
            cols = members[key]
            groups.append(
                EntityGroup(
                    key=key,
                    entity_type=cols[0].kind.ref,
                    columns=tuple(c.name for c in cols),
                    anchor_columns=tuple(original_column_name(c) for c in cols),
                    roles=tuple(c.effective_role for c in cols),
                )
            )
        return tuple(groups)

    def check_references(self, entity_types: set[str] | None, vocabularies: set[str] | None) -> list[str]:
        """Names used by entity-ref/vocab-term columns against the configured sets."""
        problems = []
        for table in self.tables:
            for col in table.columns:
                if col.kind.kind == "entity-ref" and entity_types is not None and col.kind.ref not in entity_types:
                    problems.append(f"{table.name}.{col.name}: unknown entity type {col.kind.ref!r}")
                if col.kind.kind == "vocab-term" and vocabularies and col.kind.ref not in vocabularies:
                    problems.append(f"{table.name}.{col.name}: undeclared vocabulary {col.kind.ref!r}")
        return problems


@dataclass(frozen=True)
class Cell:
    raw: str = ""
    note: str | None = None


@dataclass(frozen=True)
class Row:
    cells: dict[str, Cell] = field(default_factory=dict)
    deleted: bool = False


@dataclass(frozen=True)
class RecordMetadata:
    created: str = ""
    modified: str = ""
    transcriber: str = ""


@dataclass(frozen=True)
class Record:
    id: str
    template_id: str
    template_version: int
    metadata: RecordMetadata = field(default_factory=RecordMetadata)
    tables: dict[str, tuple[Row, ...]] = field(default_factory=dict)

    def cell(self, table: str, row: int, column: str) -> Cell:
        """Cell at a position; absent columns read as empty cells."""
        rows = self.tables.get(table, ())
        if row >= len(rows):
            return Cell()
        return rows[row].cells.get(column, Cell())


def original_table_name(spec: TableSpec) -> str:
    """The first name the table ever had; renames never change it."""
    return spec.former_names[0] if spec.former_names else spec.name


def original_column_name(col: ColumnSpec) -> str:
    return col.former_names[0] if col.former_names else col.name


def table_rows(record: Record, template: Template, table_name: str) -> tuple[Row, ...]:
    """Rows of a table under any of its names, current or former."""
    spec = template.table(table_name)
    if spec is None:
        return record.tables.get(table_name, ())
    for name in (spec.name, *spec.former_names):
        if name in record.tables:
            return record.tables[name]
    return ()


def cell_raw(record: Record, template: Template, table_name: str, row: int, column_name: str) -> str:
    """Verbatim cell value, resolving renamed tables and columns.

    Records keep the names in force when they were saved; anchors keep the
    original names. Both must read the same cell whatever the template has
    been renamed to since.
    """
    rows = table_rows(record, template, table_name)
    if row >= len(rows):
        return ""
    cells = rows[row].cells
    spec = template.table(table_name)
    col = spec.column(column_name) if spec is not None else None
    names = (col.name, *col.former_names) if col is not None else (column_name,)
    for name in names:
        if name in cells:
            return cells[name].raw
    return ""


@dataclass(frozen=True)
class Anchor:
    """Position of a data element: the provenance unit of the whole system.

    Table and column names in anchors are the original ones, so anchors (and
    every id derived from them) are stable under template renames.
    """

    record_id: str
    table: str
    row: int
    columns: tuple[str, ...]

    def to_obj(self) -> dict:
        return {
            "record_id": self.record_id,
            "table": self.table,
            "row": self.row,
            "columns": list(self.columns),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Anchor":
        return cls(obj["record_id"], obj["table"], int(obj["row"]), tuple(obj["columns"]))


@dataclass(frozen=True)
class Mention:
    """One entity occurrence or one vocabulary-term occurrence in a record."""

    kind: str  # "entity" | "term"
    anchor: Anchor
    entity_type: str | None = None
    attributes: tuple[tuple[str, str], ...] = ()  # (role, raw), template order
    vocabulary: str | None = None
    raw: str | None = None

    @property
    def local_id(self) -> str:
        if self.kind != "entity":
            raise ValueError("local ids exist for entity mentions only")
        return local_instance_id(
            self.entity_type, self.anchor.record_id, self.anchor.table, self.anchor.row, self.anchor.columns
        )


@dataclass(frozen=True)
class Violation:
    rule: str
    table: str | None = None
    column: str | None = None
    row: int | None = None
    message: str = ""

    def __str__(self) -> str:
        where = ".".join(p for p in (self.table, self.column) if p)
        if self.row is not None:
            where += f"[{self.row}]"
        return f"{self.rule}@{where}" if where else self.rule


def resolve_entity_group(template: Template, table_name: str, group_name: str) -> EntityGroup | None:
    """Entity group by its key, or by any name of its single column."""
    groups = template.entity_groups(table_name)
    for g in groups:
        if g.key == group_name:
            return g
    table = template.table(table_name)
    col = table.column(group_name) if table is not None else None
    if col is not None and col.kind.kind == "entity-ref" and col.entity_group is None:
        for g in groups:
            if g.key == col.name:
                return g
    return None


def validate_record(record: Record, template: Template) -> list[Violation]:
    """Check a record's structure against its template.

    Total and deterministic: an empty result means every structural
    invariant holds, and extraction cannot fail afterwards. The template
    may be a newer version than the record references (additive evolution
    keeps old records valid); a different template id is an error.
    """
    if template.id != record.template_id:
        raise TemplateNotFound(
            f"record {record.id!r} references template {record.template_id!r}, got {template.id!r}"
        )
    if template.version < record.template_version:
        raise TemplateNotFound(
            f"record {record.id!r} references version {record.template_version}, "
            f"got older version {template.version}"
        )
    violations = []
    for table_name, rows in record.tables.items():
        table = template.table(table_name)
        if table is None:
            violations.append(Violation("unknown-table", table=table_name, message=f"table {table_name!r} not in template"))
            continue
        live = sum(1 for r in rows if not r.deleted)
        if not table.multi_row and live > 1:
            violations.append(
                Violation("row-cardinality", table=table_name, message=f"single-row table holds {live} rows")
            )
        for idx, row in enumerate(rows):
            for col_name in row.cells:
                if table.column(col_name) is None:
                    violations.append(
                        Violation(
                            "unknown-column",
                            table=table_name,
                            column=col_name,
                            row=idx,
                            message=f"column {col_name!r} not in table {table_name!r}",
                        )
                    )
    return violations


def extract_mentions(record: Record, template: Template) -> list[Mention]:
    """Copy out every data element that needs curation.

    One mention per entity occurrence (the entity-group columns of one row)
    and one per non-empty vocab-term cell. Rows whose group cells are all
    empty yield no mention; tombstoned rows yield nothing. Raw values are
    verbatim copies.
    """
    mentions: list[Mention] = []
    for table in template.tables:
        rows = table_rows(record, template, table.name)
        anchor_table = original_table_name(table)
        groups = template.entity_groups(table.name)
        term_columns = [c for c in table.columns if c.kind.kind == "vocab-term"]
        for idx, row in enumerate(rows):
            if row.deleted:
                continue
            for group in groups:
                values = [cell_raw(record, template, table.name, idx, col) for col in group.columns]
                if all(v == "" for v in values):
                    continue
                mentions.append(
                    Mention(
                        kind="entity",
                        entity_type=group.entity_type,
                        attributes=tuple(zip(group.roles, values)),
                        anchor=Anchor(record.id, anchor_table, idx, group.anchor_columns),
                    )
                )
            for col in term_columns:
                raw = cell_raw(record, template, table.name, idx, col.name)
                if raw == "":
                    continue
                mentions.append(
                    Mention(
                        kind="term",
                        vocabulary=col.kind.ref,
                        raw=raw,
                        anchor=Anchor(record.id, anchor_table, idx, (original_column_name(col),)),
                    )
                )
    return mentions


# --- template evolution ----------------------------------------------------

ADDITIVE_OPS = ("add-table", "add-column", "rename-table", "rename-column")
DESTRUCTIVE_OPS = ("drop-table", "drop-column")


@dataclass(frozen=True)
class ChangeOp:
    op: str
    table: str | None = None
    column: ColumnSpec | None = None
    table_spec: TableSpec | None = None
    old: str | None = None
    new: str | None = None


@dataclass(frozen=True)
class TemplateChange:
    ops: tuple[ChangeOp, ...]


def evolve_template(template: Template, change: TemplateChange) -> Template:
    """Apply an additive change, bumping the version.

    Renames keep the former name as an alias so existing records (and the
    anchors pointing into them) still resolve. Deletions and empty changes
    are rejected.
    """
    if not change.ops:
        raise TemplateChangeRejected("empty-change: nothing to apply", code="empty-change")
    tables = list(template.tables)
    for op in change.ops:
        if op.op in DESTRUCTIVE_OPS:
            raise TemplateChangeRejected(f"destructive-change: {op.op} is not allowed")
        if op.op == "add-table":
            if op.table_spec is None:
                raise TemplateChangeRejected("add-table requires a table spec", code="invalid-change")
            tables.append(op.table_spec)
        elif op.op == "add-column":
            idx = _table_index(tables, op.table)
            if op.column is None:
                raise TemplateChangeRejected("add-column requires a column spec", code="invalid-change")
            tables[idx] = replace(tables[idx], columns=tables[idx].columns + (op.column,))
        elif op.op == "rename-table":
            idx = _table_index(tables, op.old)
            spec = tables[idx]
            tables[idx] = replace(spec, name=op.new, former_names=spec.former_names + (spec.name,))
        elif op.op == "rename-column":
            idx = _table_index(tables, op.table)
            spec = tables[idx]
            cols = list(spec.columns)
            for i, col in enumerate(cols):
                if col.name == op.old:
                    cols[i] = replace(col, name=op.new, former_names=col.former_names + (col.name,))
                    break
            else:
                raise TemplateChangeRejected(f"no column {op.old!r} in table {spec.name!r}", code="invalid-change")
            tables[idx] = replace(spec, columns=tuple(cols))
        else:
            raise TemplateChangeRejected(f"unknown change op {op.op!r}", code="invalid-change")
    return Template(id=template.id, name=template.name, version=template.version + 1, tables=tuple(tables))


def _table_index(tables: list[TableSpec], name: str | None) -> int:
    for i, t in enumerate(tables):
        if t.name == name or (name and name in t.former_names):
            return i
    raise TemplateChangeRejected(f"no table {name!r} in template", code="invalid-change")


# --- document (de)serialization ---------------------------------------------


def column_to_obj(col: ColumnSpec) -> dict:
    obj: dict = {"name": col.name, "kind": col.kind.token()}
    if col.required:
        obj["required"] = True
    if col.entity_group is not None:
        obj["entity_group"] = col.entity_group
    if col.role is not None:
        obj["role"] = col.role
    if col.former_names:
        obj["former_names"] = list(col.former_names)
    return obj


def column_from_obj(obj: dict) -> ColumnSpec:
    return ColumnSpec(
        name=obj["name"],
        kind=FieldKind.parse(obj["kind"]),
        required=bool(obj.get("required", False)),
        entity_group=obj.get("entity_group"),
        role=obj.get("role"),
        former_names=tuple(obj.get("former_names", ())),
    )


def template_to_doc(template: Template) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "id": template.id,
        "name": template.name,
        "version": template.version,
        "tables": [
            {
                "name": t.name,
                "multi_row": t.multi_row,
                "columns": [column_to_obj(c) for c in t.columns],
                **({"former_names": list(t.former_names)} if t.former_names else {}),
            }
            for t in template.tables
        ],
    }


def template_from_doc(doc: dict) -> Template:
    try:
        return Template(
            id=doc["id"],
            name=doc.get("name", doc["id"]),
            version=int(doc["version"]),
            tables=tuple(
                TableSpec(
                    name=t["name"],
                    multi_row=bool(t.get("multi_row", True)),
                    columns=tuple(column_from_obj(c) for c in t["columns"]),
                    former_names=tuple(t.get("former_names", ())),
                )
                for t in doc["tables"]
            ),
        )
    except (KeyError, TypeError) as exc:
        raise DocumentParseError(f"malformed template document: {exc}") from exc


def template_bytes(template: Template) -> bytes:
    return canonical_json_bytes(template_to_doc(template))


def record_to_doc(record: Record) -> dict:
    tables: dict = {}
    for name, rows in record.tables.items():
        out_rows = []
        for row in rows:
            cells = {}
            for col, cell in row.cells.items():
                cell_obj: dict = {"raw": cell.raw}
                if cell.note is not None:
                    cell_obj["note"] = cell.note
                cells[col] = cell_obj
            row_obj: dict = {"cells": cells}
            if row.deleted:
                row_obj["deleted"] = True
            out_rows.append(row_obj)
        tables[name] = out_rows
    return {
        "format_version": FORMAT_VERSION,
        "id": record.id,
        "template_id": record.template_id,
        "template_version": record.template_version,
        "metadata": {
            "created": record.metadata.created,
            "modified": record.metadata.modified,
            "transcriber": record.metadata.transcriber,
        },
        "tables": tables,
    }


def record_from_doc(doc: dict) -> Record:
    try:
        meta = doc.get("metadata", {})
        tables = {}
        for name, rows in doc["tables"].items():
            parsed = []
            for row in rows:
                cells = {
                    col: Cell(raw=c["raw"], note=c.get("note"))
                    for col, c in row.get("cells", {}).items()
                }
                parsed.append(Row(cells=cells, deleted=bool(row.get("deleted", False))))
            tables[name] = tuple(parsed)
        return Record(
            id=doc["id"],
            template_id=doc["template_id"],
            template_version=int(doc["template_version"]),
            metadata=RecordMetadata(
                created=meta.get("created", ""),
                modified=meta.get("modified", ""),
                transcriber=meta.get("transcriber", ""),
            ),
            tables=tables,
        )
    except (KeyError, TypeError) as exc:
        raise DocumentParseError(f"malformed record document: {exc}") from exc


def record_bytes(record: Record) -> bytes:
    return canonical_json_bytes(record_to_doc(record))


def change_from_doc(doc: dict) -> TemplateChange:
    ops = []
    try:
        for op in doc["ops"]:
            ops.append(
                ChangeOp(
                    op=op["op"],
                    table=op.get("table"),
                    column=column_from_obj(op["column"]) if "column" in op else None,
                    table_spec=(
                        TableSpec(
                            name=op["table_spec"]["name"],
                            multi_row=bool(op["table_spec"].get("multi_row", True)),
                            columns=tuple(column_from_obj(c) for c in op["table_spec"]["columns"]),
                        )
                        if "table_spec" in op
                        else None
                    ),
                    old=op.get("old"),
                    new=op.get("new"),
                )
            )
    except (KeyError, TypeError) as exc:
        raise DocumentParseError(f"malformed template change: {exc}") from exc
    return TemplateChange(ops=tuple(ops))
