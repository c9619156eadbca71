"""Shared fixture documents: a miniature maritime archive.

Builders return plain dicts in the engine's document formats so tests can
tweak copies freely. The scenario: crew lists and a ship register feeding
one knowledge graph about ships, people, and ports.
"""

from __future__ import annotations

import copy

from quire.graphstore import Literal

PREFIX = "https://rs.sealitproject.eu/kb"

ONTOLOGY_DOC = {
    "classes": [
        {"name": "Resource"},
        {"name": "Ship", "subclass_of": "Resource"},
        {"name": "Person", "subclass_of": "Resource"},
        {"name": "Location", "subclass_of": "Resource"},
        {"name": "Port", "subclass_of": "Location"},
        {"name": "LegalEntity", "subclass_of": "Resource"},
        {"name": "Event"},
        {"name": "ConstructionEvent", "subclass_of": "Event"},
        {"name": "CrewMembership"},
        {"name": "ShipType", "subclass_of": "Resource"},
        {"name": "Rank", "subclass_of": "Resource"},
    ],
    "properties": [
        {"name": "name", "domain": "Resource", "range": "text"},
        {"name": "tonnage", "domain": "Ship", "range": "decimal"},
        {"name": "ship-type", "domain": "Ship", "range": "ShipType"},
        {"name": "registry-port", "domain": "Ship", "range": "Location"},
        {"name": "owner", "domain": "Ship", "range": "LegalEntity"},
        {"name": "construction", "domain": "Ship", "range": "ConstructionEvent"},
        {"name": "event-date", "domain": "Event", "range": "date"},
        {"name": "event-place", "domain": "Event", "range": "Location"},
        {"name": "person", "domain": "CrewMembership", "range": "Person"},
        {"name": "rank", "domain": "CrewMembership", "range": "Rank"},
        {"name": "age", "domain": "CrewMembership", "range": "integer"},
        {"name": "embarked", "domain": "CrewMembership", "range": "date"},
    ],
}

CREW_TEMPLATE = {
    "id": "crew-list",
    "name": "Crew and passenger list",
    "version": 1,
    "tables": [
        {
            "name": "Ship",
            "multi_row": False,
            "columns": [
                {"name": "Ship name", "kind": "entity-ref:ship", "entity_group": "ship", "role": "name"},
                {"name": "Ship type", "kind": "vocab-term:ship-type"},
                {"name": "Tonnage", "kind": "number"},
                {"name": "Construction year", "kind": "date"},
                {
                    "name": "Construction place",
                    "kind": "entity-ref:location",
                    "entity_group": "construction-place",
                    "role": "name",
                },
                {
                    "name": "Registry port",
                    "kind": "entity-ref:location",
                    "entity_group": "registry-port",
                    "role": "name",
                    "required": True,
                },
                {"name": "Owner", "kind": "entity-ref:legal-entity", "entity_group": "owner", "role": "name"},
            ],
        },
        {
            "name": "Crew",
            "multi_row": True,
            "columns": [
                {"name": "First name", "kind": "entity-ref:person", "entity_group": "person", "role": "first_name"},
                {"name": "Last name", "kind": "entity-ref:person", "entity_group": "person", "role": "last_name"},
                {"name": "Rank", "kind": "vocab-term:rank"},
                {"name": "Age", "kind": "number"},
                {"name": "Embarkation date", "kind": "date"},
            ],
        },
    ],
}

CREW_MAPPING = {
    "template": "crew-list",
    "entities": [
        {
            "table": "Ship",
            "class": "Ship",
            "uri": "local(ship)",
            "links": [
                {"property": "name", "target": "literal", "column": "Ship name"},
                {"property": "ship-type", "target": "vocab-term", "column": "Ship type"},
                {"property": "tonnage", "target": "literal", "column": "Tonnage"},
                {"property": "registry-port", "target": "entity-ref", "column": "Registry port"},
                {"property": "owner", "target": "entity-ref", "column": "Owner"},
                {
                    "property": "construction",
                    "target": "entity",
                    "entity": {
                        "class": "ConstructionEvent",
                        "uri": "node(construction)",
                        "links": [
                            {"property": "event-date", "target": "literal", "column": "Construction year"},
                            {"property": "event-place", "target": "entity-ref", "column": "Construction place"},
                        ],
                    },
                },
            ],
        },
        {
            "table": "Crew",
            "class": "CrewMembership",
            "uri": "node(membership)",
            "links": [
                {"property": "person", "target": "entity-ref", "column": "First name"},
                {"property": "rank", "target": "vocab-term", "column": "Rank"},
                {"property": "age", "target": "literal", "column": "Age"},
                {"property": "embarked", "target": "literal", "column": "Embarkation date"},
            ],
        },
    ],
}

REGISTER_TEMPLATE = {
    "id": "ship-register",
    "name": "Ship register",
    "version": 1,
    "tables": [
        {
            "name": "Entry",
            "multi_row": False,
            "columns": [
                {"name": "Name of ship", "kind": "entity-ref:ship", "entity_group": "ship", "role": "name"},
                {"name": "Tonnage", "kind": "number"},
                {"name": "Port", "kind": "entity-ref:location", "entity_group": "port", "role": "name"},
            ],
        }
    ],
}

REGISTER_MAPPING = {
    "template": "ship-register",
    "entities": [
        {
            "table": "Entry",
            "class": "Ship",
            "uri": "local(ship)",
            "links": [
                {"property": "name", "target": "literal", "column": "Name of ship"},
                {"property": "tonnage", "target": "literal", "column": "Tonnage"},
                {"property": "registry-port", "target": "entity-ref", "column": "Port"},
            ],
        }
    ],
}

MATCH_RULES = {
    "rules": [
        {"entity_type": "person", "key_roles": ["first_name", "last_name"]},
        {"entity_type": "ship", "key_roles": ["name"]},
        {"entity_type": "location", "key_roles": ["name"]},
        {"entity_type": "legal-entity", "key_roles": ["name"]},
    ]
}


def crew_record(
    record_id: str,
    ship: str = "Elisa",
    ship_type: str = "brig",
    tonnage: str = "120.50",
    year: str = "1855-04-01",
    place: str = "Genoa",
    port: str = "Sardinia",
    owner: str = "Rubattino & C.",
    crew: tuple = (("Agostino", "Brondi", "master", "42", "1855-05-02"),),
) -> dict:
    rows = []
    for first, last, rank, age, embarked in crew:
        rows.append(
            {
                "cells": {
                    "First name": {"raw": first},
                    "Last name": {"raw": last},
                    "Rank": {"raw": rank},
                    "Age": {"raw": age},
                    "Embarkation date": {"raw": embarked},
                }
            }
        )
    return {
        "id": record_id,
        "template_id": "crew-list",
        "template_version": 1,
        "metadata": {"created": "1855-06-01", "transcriber": "archivist"},
        "tables": {
            "Ship": [
                {
                    "cells": {
                        "Ship name": {"raw": ship},
                        "Ship type": {"raw": ship_type},
                        "Tonnage": {"raw": tonnage},
                        "Construction year": {"raw": year},
                        "Construction place": {"raw": place},
                        "Registry port": {"raw": port},
                        "Owner": {"raw": owner},
                    }
                }
            ],
            "Crew": rows,
        },
    }


def register_record(record_id: str, ship: str = "Elisa", tonnage: str = "120", port: str = "Sardinia") -> dict:
    return {
        "id": record_id,
        "template_id": "ship-register",
        "template_version": 1,
        "metadata": {"created": "1856-01-01", "transcriber": "archivist"},
        "tables": {
            "Entry": [
                {
                    "cells": {
                        "Name of ship": {"raw": ship},
                        "Tonnage": {"raw": tonnage},
                        "Port": {"raw": port},
                    }
                }
            ]
        },
    }


def variant(doc: dict, **top_level) -> dict:
    out = copy.deepcopy(doc)
    out.update(top_level)
    return out


# --- converters between engine terms and the oracle's plain tuples ----------------


def plain_term(value):
    if value is None:
        return None
    if isinstance(value, Literal):
        return ("l", value.kind, value.lexical)
    return ("i", value)


def plain_quads(quads):
    return [(plain_term(q.s), plain_term(q.p), plain_term(q.o), plain_term(q.g)) for q in quads]


def plain_from_obj(obj):
    """Query-result JSON value back into plain-term form."""
    if obj is None:
        return None
    if isinstance(obj, str):
        return obj
    if "iri" in obj:
        return ("i", obj["iri"])
    if "datatype" in obj:
        return ("l", obj["datatype"], obj["value"])
    kind, lexical = next(iter(obj.items()))
    return ("l", kind, lexical)
