"""Workspace configuration.

Everything the engine mints IRIs from lives here, so two workspaces with the
same configuration and the same inputs produce byte-identical output. The
three namespaces default to paths under the URI prefix; projects that serve
their vocabulary elsewhere can point them apart.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DocumentParseError

DEFAULT_ENTITY_TYPES = ("person", "ship", "location", "legal-entity")


@dataclass(frozen=True)
class EngineConfig:
    uri_prefix: str = "https://example.org/kb"
    ontology_namespace: str = ""  # classes and properties
    artifact_namespace: str = ""  # engine-owned link properties
    graph_namespace: str = ""  # named graphs
    entity_types: tuple[str, ...] = DEFAULT_ENTITY_TYPES
    # empty means unrestricted: templates may introduce vocabularies freely
    vocabularies: tuple[str, ...] = ()

    def __post_init__(self):
        prefix = self.uri_prefix.rstrip("/")
        if prefix == "":
            raise DocumentParseError("uri_prefix must not be empty")
        object.__setattr__(self, "uri_prefix", prefix)
        if not self.ontology_namespace:
            object.__setattr__(self, "ontology_namespace", prefix + "/ontology/")
        if not self.artifact_namespace:
            object.__setattr__(self, "artifact_namespace", prefix + "/ns/")
        if not self.graph_namespace:
            object.__setattr__(self, "graph_namespace", prefix + "/graph/")
        if not self.entity_types:
            raise DocumentParseError("entity_types must not be empty")

    def to_doc(self) -> dict:
        return {
            "artifact_namespace": self.artifact_namespace,
            "entity_types": list(self.entity_types),
            "format_version": 1,
            "graph_namespace": self.graph_namespace,
            "ontology_namespace": self.ontology_namespace,
            "uri_prefix": self.uri_prefix,
            "vocabularies": list(self.vocabularies),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "EngineConfig":
        try:
            return cls(
                uri_prefix=doc.get("uri_prefix", "https://example.org/kb"),
                ontology_namespace=doc.get("ontology_namespace", ""),
                artifact_namespace=doc.get("artifact_namespace", ""),
                graph_namespace=doc.get("graph_namespace", ""),
                entity_types=tuple(doc.get("entity_types", DEFAULT_ENTITY_TYPES)),
                vocabularies=tuple(doc.get("vocabularies", ())),
            )
        except TypeError as exc:
            raise DocumentParseError(f"malformed configuration: {exc}") from exc
