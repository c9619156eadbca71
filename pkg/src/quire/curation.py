"""Identity curation: local instances, master instances, vocabulary terms.

Publishing a record copies its data elements out of the transcription into
this catalogue: one local instance per entity occurrence, one term
appearance per controlled-vocabulary cell. Locals keep verbatim values and
their anchor; nothing here ever edits the transcription.

Identity statements live one level up. Every local belongs to exactly one
master instance; merging masters is how a curator (or a matching rule)
says "these occurrences are the same real-world thing". Masters merge as
atomic units and the lexicographically smallest id survives, so replaying
the same decisions from any equivalent state lands on the same ids.

Unmatching splits a local back out and leaves an exception behind: the old
co-members may never be auto-joined to this local again, and if a matching
rule was in force, the local's key under that rule is blocked for it too.
Manual matches override key-class blocks but still refuse peer blocks,
surfacing the conflict instead of silently undoing a curator's split.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote

from .canonical import canonical_json_bytes
from .errors import (
    AlreadySingleton,
    CycleDetected,
    DocumentParseError,
    MatchConflict,
    TypeMismatch,
    UnknownRole,
    UnknownTarget,
)
from .naming import short_hash, singleton_master_id
from .records import Anchor, Mention

# preferred values under these roles describe the identity itself rather
# than a transcribed attribute, so they bypass the known-role check
ENRICHMENT_ROLES = frozenset({"coordinates", "external_id", "secondary_name"})

_WS_RUN = re.compile(r"\s+")

FORMAT_VERSION = 1


@dataclass(frozen=True)
class NormalizeFlags:
    trim: bool = True
    case_fold: bool = True
    collapse_whitespace: bool = True

    def apply(self, raw: str) -> str:
        v = raw
        if self.trim:
            v = v.strip()
        if self.collapse_whitespace:
            v = _WS_RUN.sub(" ", v)
        if self.case_fold:
            v = v.casefold()
        return v

    def to_obj(self) -> dict:
        return {
            "case_fold": self.case_fold,
            "collapse_whitespace": self.collapse_whitespace,
            "trim": self.trim,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "NormalizeFlags":
        return cls(
            trim=bool(obj.get("trim", True)),
            case_fold=bool(obj.get("case_fold", True)),
            collapse_whitespace=bool(obj.get("collapse_whitespace", True)),
        )


@dataclass(frozen=True)
class MatchRule:
    entity_type: str
    key_roles: tuple[str, ...]
    normalize: NormalizeFlags = NormalizeFlags()

    def key_of(self, attributes: dict[str, str]) -> tuple[str, ...] | None:
        """Normalized key of one local, or None when a component is empty.

        Locals with an empty key component carry too little signal to match
        mechanically; they are left for manual curation.
        """
        values = tuple(self.normalize.apply(attributes.get(role, "")) for role in self.key_roles)
        if any(v == "" for v in values):
            return None
        return values


def match_rules_from_doc(doc) -> list[MatchRule]:
    if isinstance(doc, dict):
        doc = doc.get("rules", None)
    if not isinstance(doc, list):
        raise DocumentParseError("rules document must be a list or hold a 'rules' list")
    rules = []
    for i, obj in enumerate(doc):
        try:
            roles = tuple(obj["key_roles"])
            if not roles:
                raise DocumentParseError(f"rule {i}: key_roles must not be empty")
            rules.append(
                MatchRule(
                    entity_type=obj["entity_type"],
                    key_roles=roles,
                    normalize=NormalizeFlags.from_obj(obj.get("normalize", {})),
                )
            )
        except (KeyError, TypeError) as exc:
            raise DocumentParseError(f"rule {i}: {exc}") from exc
    return rules


@dataclass
class LocalInstance:
    id: str
    anchor: Anchor
    attributes: dict[str, str]


@dataclass
class MasterInstance:
    id: str
    members: set[str]
    preferred_attributes: dict[str, str] = field(default_factory=dict)
    enrichments: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class BlockedKey:
    key_roles: tuple[str, ...]
    normalize: NormalizeFlags
    values: tuple[str, ...]


@dataclass(frozen=True)
class UnmatchException:
    local_id: str
    blocked_peers: tuple[str, ...]
    blocked_key: BlockedKey | None


@dataclass
class Term:
    appearances: list[Anchor] = field(default_factory=list)
    preferred: str | None = None
    broader: set[str] = field(default_factory=set)


@dataclass
class EntityState:
    entity_type: str
    locals: dict[str, LocalInstance] = field(default_factory=dict)
    masters: dict[str, MasterInstance] = field(default_factory=dict)
    redirects: dict[str, str] = field(default_factory=dict)
    exceptions: list[UnmatchException] = field(default_factory=list)
    last_rule: MatchRule | None = None
    master_of: dict[str, str] = field(default_factory=dict)  # derived index


@dataclass
class VocabularyState:
    name: str
    terms: dict[str, Term] = field(default_factory=dict)


@dataclass(frozen=True)
class MergeEvent:
    entity_type: str
    survivor: str
    merged: tuple[str, ...]
    origin: str  # "rule:<index>" or "manual"
    key: tuple[str, ...] | None = None
    # (role, kept value, dropped value): disagreements between merged masters
    conflicts: tuple[tuple[str, str, str], ...] = ()

    def to_obj(self) -> dict:
        return {
            "conflicts": [{"dropped": d, "kept": k, "role": r} for r, k, d in self.conflicts],
            "entity_type": self.entity_type,
            "key": list(self.key) if self.key is not None else None,
            "merged": list(self.merged),
            "origin": self.origin,
            "survivor": self.survivor,
        }


@dataclass(frozen=True)
class DuplicateCandidate:
    entity_type: str
    rule_index: int
    key: tuple[str, ...]
    masters: tuple[str, str]


def _peer_blocked(state: EntityState, a: MasterInstance, b: MasterInstance) -> bool:
    for exc in state.exceptions:
        if exc.local_id in a.members and any(p in b.members for p in exc.blocked_peers):
            return True
        if exc.local_id in b.members and any(p in a.members for p in exc.blocked_peers):
            return True
    return False


def _key_blocked(state: EntityState, master: MasterInstance, rule: MatchRule, key: tuple[str, ...]) -> bool:
    for exc in state.exceptions:
        bk = exc.blocked_key
        if bk is None or exc.local_id not in master.members:
            continue
        if bk.key_roles == rule.key_roles and bk.normalize == rule.normalize and bk.values == key:
            return True
    return False


def _anchor_sort_key(anchor: Anchor):
    return (anchor.record_id, anchor.table, anchor.row, anchor.columns)


def _exception_sort_key(exc: UnmatchException):
    key_repr = ""
    if exc.blocked_key is not None:
        key_repr = json.dumps(
            [list(exc.blocked_key.key_roles), exc.blocked_key.normalize.to_obj(), list(exc.blocked_key.values)]
        )
    return (exc.local_id, exc.blocked_peers, key_repr)


class CurationStore:
    """Curated identity state, one file per entity type or vocabulary."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.entities_dir = self.root / "entities"
        self.vocabularies_dir = self.root / "vocabularies"
        self.entities_dir.mkdir(parents=True, exist_ok=True)
        self.vocabularies_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._entities: dict[str, EntityState] = {}
        self._vocabs: dict[str, VocabularyState] = {}
        for name in sorted(os.listdir(self.entities_dir)):
            if name.endswith(".json"):
                state = _entity_state_from_doc(self._load(self.entities_dir / name))
                self._entities[state.entity_type] = state
        for name in sorted(os.listdir(self.vocabularies_dir)):
            if name.endswith(".json"):
                state = _vocab_state_from_doc(self._load(self.vocabularies_dir / name))
                self._vocabs[state.name] = state

    def _load(self, path: Path) -> dict:
        with open(path, "rb") as fh:
            return json.load(fh)

    # --- ingest ----------------------------------------------------------

    def ingest(self, record_id: str, mentions: list[Mention]):
        """Fold one published record's mentions into the catalogue.

        Upserts are keyed by anchor, so retranscription updates values in
        place and curation decisions survive it. Occurrences the record no
        longer produces (tombstoned rows, emptied groups) are withdrawn,
        along with exceptions that name them.
        """
        with self._lock:
            entities, vocabs = self._ingest_locked(record_id, mentions)
            self._save_touched(entities, vocabs)

    def ingest_many(self, batch: list[tuple[str, list[Mention]]]):
        """ingest() for a load of records, saving each touched state once.

        Per-record saves dominate bulk loads (every save rewrites the whole
        entity file), so batching them is what makes large imports viable.
        """
        with self._lock:
            entities: set[str] = set()
            vocabs: set[str] = set()
            for record_id, mentions in batch:
                e, v = self._ingest_locked(record_id, mentions)
                entities |= e
                vocabs |= v
            self._save_touched(entities, vocabs)

    def _save_touched(self, entities: set[str], vocabs: set[str]):
        for etype in sorted(entities):
            self._save_entity(self._entities[etype])
        for name in sorted(vocabs):
            self._save_vocab(self._vocabs[name])

    def _ingest_locked(self, record_id: str, mentions: list[Mention]) -> tuple[set[str], set[str]]:
        by_type: dict[str, dict[str, Mention]] = {}
        for m in mentions:
            if m.kind == "entity":
                by_type.setdefault(m.entity_type, {})[m.local_id] = m
        touched = set(by_type)
        for etype, state in self._entities.items():
            if any(loc.anchor.record_id == record_id for loc in state.locals.values()):
                touched.add(etype)
        for etype in sorted(touched):
            state = self._entity_state(etype)
            fresh = by_type.get(etype, {})
            for lid in sorted(fresh):
                m = fresh[lid]
                existing = state.locals.get(lid)
                if existing is None:
                    state.locals[lid] = LocalInstance(id=lid, anchor=m.anchor, attributes=dict(m.attributes))
                    mid = self._fresh_master_id(state, lid)
                    state.masters[mid] = MasterInstance(id=mid, members={lid})
                    state.master_of[lid] = mid
                else:
                    existing.attributes = dict(m.attributes)
            stale = sorted(
                lid
                for lid, loc in state.locals.items()
                if loc.anchor.record_id == record_id and lid not in fresh
            )
            for lid in stale:
                self._remove_local(state, lid)

        by_vocab: dict[str, list[Mention]] = {}
        for m in mentions:
            if m.kind == "term":
                by_vocab.setdefault(m.vocabulary, []).append(m)
        touched_vocabs = set(by_vocab)
        for name, vstate in self._vocabs.items():
            if any(a.record_id == record_id for t in vstate.terms.values() for a in t.appearances):
                touched_vocabs.add(name)
        for name in sorted(touched_vocabs):
            vstate = self._vocab_state(name)
            for term in vstate.terms.values():
                term.appearances = [a for a in term.appearances if a.record_id != record_id]
            for m in by_vocab.get(name, ()):
                term = vstate.terms.setdefault(m.raw, Term())
                term.appearances.append(m.anchor)
            for term in vstate.terms.values():
                term.appearances = sorted(set(term.appearances), key=_anchor_sort_key)
            referenced = {b for t in vstate.terms.values() for b in t.broader}
            vstate.terms = {
                raw: t
                for raw, t in vstate.terms.items()
                if t.appearances or t.preferred is not None or t.broader or raw in referenced
            }
        return touched, touched_vocabs

    def _remove_local(self, state: EntityState, lid: str):
        mid = state.master_of.pop(lid)
        master = state.masters[mid]
        master.members.discard(lid)
        if not master.members:
            del state.masters[mid]
            state.redirects = {k: v for k, v in state.redirects.items() if v != mid}
        del state.locals[lid]
        state.exceptions = [e for e in state.exceptions if e.local_id != lid]

    def _fresh_master_id(self, state: EntityState, local_id: str) -> str:
        candidate = singleton_master_id(local_id)
        n = 0
        while candidate in state.masters or candidate in state.redirects:
            n += 1
            candidate = "m" + short_hash(local_id, str(n))
        return candidate

    # --- matching ----------------------------------------------------------

    def auto_match(self, rules: list[MatchRule]) -> list[MergeEvent]:
        """Apply matching rules in order; returns the merges performed.

        Per rule: locals are grouped by normalized key, each group's masters
        are clustered greedily in id order (an unmatch exception between two
        masters keeps them in separate clusters; a blocked key keeps its
        master out of the group entirely), and every cluster of two or more
        collapses into its smallest id.
        """
        with self._lock:
            for rule in rules:
                state = self._entities.get(rule.entity_type)
                if state is None or not state.locals:
                    continue
                known_roles = set()
                for local in state.locals.values():
                    known_roles.update(local.attributes)
                for role in rule.key_roles:
                    if role not in known_roles:
                        raise UnknownRole(f"no {rule.entity_type} occurrence carries role {role!r}")
            events = []
            touched = set()
            for index, rule in enumerate(rules):
                state = self._entities.get(rule.entity_type)
                if state is None or not state.locals:
                    continue
                groups: dict[tuple[str, ...], set[str]] = {}
                for local in state.locals.values():
                    key = rule.key_of(local.attributes)
                    if key is not None:
                        groups.setdefault(key, set()).add(state.master_of[local.id])
                for key in sorted(groups):
                    live: list[str] = []
                    for mid in groups[key]:
                        mid = self._resolve_redirects(state, mid)
                        if mid not in live:
                            live.append(mid)
                    live.sort()
                    candidates = [
                        state.masters[mid]
                        for mid in live
                        if not _key_blocked(state, state.masters[mid], rule, key)
                    ]
                    clusters: list[list[MasterInstance]] = []
                    for master in candidates:
                        for cluster in clusters:
                            if all(not _peer_blocked(state, master, other) for other in cluster):
                                cluster.append(master)
                                break
                        else:
                            clusters.append([master])
                    for cluster in clusters:
                        if len(cluster) < 2:
                            continue
                        events.append(self._merge(state, [m.id for m in cluster], f"rule:{index}", key))
                state.last_rule = rule
                touched.add(rule.entity_type)
            for etype in sorted(touched):
                self._save_entity(self._entities[etype])
            return events

    def manual_match(self, entity_type: str, ids: list[str]) -> MergeEvent:
        """Merge the named instances (master or local ids) into one identity."""
        with self._lock:
            state = self._entity_state(entity_type)
            resolved: list[str] = []
            for raw_id in ids:
                mid = self._find_master(entity_type, raw_id)
                if mid not in resolved:
                    resolved.append(mid)
            if len(resolved) < 2:
                raise MatchConflict("ids already name one identity", code="already-merged")
            for i in range(len(resolved)):
                for j in range(i + 1, len(resolved)):
                    a, b = state.masters[resolved[i]], state.masters[resolved[j]]
                    if _peer_blocked(state, a, b):
                        raise MatchConflict(f"an unmatch exception separates {a.id} and {b.id}")
            event = self._merge(state, resolved, "manual", None)
            self._save_entity(state)
            return event

    def _merge(self, state: EntityState, ids: list[str], origin: str, key) -> MergeEvent:
        ids = sorted(ids)
        survivor = state.masters[ids[0]]
        losers = set(ids[1:])
        conflicts = []
        for loser_id in ids[1:]:
            loser = state.masters.pop(loser_id)
            survivor.members |= loser.members
            for lid in loser.members:
                state.master_of[lid] = survivor.id
            for role in sorted(loser.preferred_attributes):
                value = loser.preferred_attributes[role]
                kept = survivor.preferred_attributes.setdefault(role, value)
                if kept != value:
                    conflicts.append((role, kept, value))
            for k in sorted(loser.enrichments):
                value = loser.enrichments[k]
                kept = survivor.enrichments.setdefault(k, value)
                if kept != value:
                    conflicts.append((k, kept, value))
            state.redirects[loser_id] = survivor.id
        for old, target in list(state.redirects.items()):
            if target in losers:
                state.redirects[old] = survivor.id
        return MergeEvent(
            entity_type=state.entity_type,
            survivor=survivor.id,
            merged=tuple(ids[1:]),
            origin=origin,
            key=key,
            conflicts=tuple(conflicts),
        )

    def unmatch(self, entity_type: str, local_id: str) -> str:
        """Pull one local out of its master into a fresh singleton.

        Leaves an exception blocking re-joining: always against the old
        co-members, and against the local's current key when a matching
        rule has been applied to this entity type.
        """
        with self._lock:
            state = self._entity_state(entity_type)
            if local_id not in state.locals:
                raise UnknownTarget(f"no {entity_type} occurrence {local_id!r}")
            master = state.masters[state.master_of[local_id]]
            if len(master.members) < 2:
                raise AlreadySingleton(f"{local_id} already stands alone in {master.id}")
            peers = tuple(sorted(master.members - {local_id}))
            master.members.discard(local_id)
            new_id = self._fresh_master_id(state, local_id)
            state.masters[new_id] = MasterInstance(id=new_id, members={local_id})
            state.master_of[local_id] = new_id
            blocked_key = None
            if state.last_rule is not None:
                values = state.last_rule.key_of(state.locals[local_id].attributes)
                if values is not None:
                    blocked_key = BlockedKey(state.last_rule.key_roles, state.last_rule.normalize, values)
            state.exceptions.append(UnmatchException(local_id, peers, blocked_key))
            state.exceptions.sort(key=_exception_sort_key)
            self._save_entity(state)
            return new_id

    def duplicate_candidates(self, rules: list[MatchRule]) -> list[DuplicateCandidate]:
        """Master pairs a rule run would merge: the remaining duplication.

        Shares the exception semantics of auto_match, so running auto_match
        with the same rules empties this list.
        """
        with self._lock:
            out = []
            for index, rule in enumerate(rules):
                state = self._entities.get(rule.entity_type)
                if state is None or not state.locals:
                    continue
                groups: dict[tuple[str, ...], set[str]] = {}
                for local in state.locals.values():
                    key = rule.key_of(local.attributes)
                    if key is not None:
                        groups.setdefault(key, set()).add(state.master_of[local.id])
                for key in sorted(groups):
                    live = sorted(set(groups[key]))
                    unblocked = [
                        state.masters[mid]
                        for mid in live
                        if not _key_blocked(state, state.masters[mid], rule, key)
                    ]
                    for i in range(len(unblocked)):
                        for j in range(i + 1, len(unblocked)):
                            if not _peer_blocked(state, unblocked[i], unblocked[j]):
                                out.append(
                                    DuplicateCandidate(
                                        entity_type=rule.entity_type,
                                        rule_index=index,
                                        key=key,
                                        masters=(unblocked[i].id, unblocked[j].id),
                                    )
                                )
            return out

    # --- preferred values and enrichment ----------------------------------

    def set_preferred(self, entity_type: str, master_id: str, role: str, value: str):
        """Set a preferred attribute value (empty value clears it).

        Roles must occur on some local of the type; the reserved enrichment
        roles (coordinates, external ids, secondary names) are always
        accepted and stored apart from transcribed attributes.
        """
        with self._lock:
            state = self._entity_state(entity_type)
            mid = self._find_master(entity_type, master_id)
            master = state.masters[mid]
            if role in ENRICHMENT_ROLES:
                target = master.enrichments
            else:
                known = set()
                for local in state.locals.values():
                    known.update(local.attributes)
                if role not in known:
                    raise UnknownRole(f"no {entity_type} occurrence carries role {role!r}")
                target = master.preferred_attributes
            if value == "":
                target.pop(role, None)
            else:
                target[role] = value
            self._save_entity(state)

    def set_preferred_term(self, vocabulary: str, raw: str, preferred: str):
        with self._lock:
            vstate = self._vocab_state(vocabulary)
            term = vstate.terms.get(raw)
            if term is None:
                raise UnknownTarget(f"no term {raw!r} in vocabulary {vocabulary!r}")
            term.preferred = preferred if preferred != "" else None
            self._save_vocab(vstate)

    def add_broader(self, vocabulary: str, raw: str, broader: str):
        """Add a broader-term edge; the hierarchy must stay acyclic.

        The broader term is created on the fly when it was never transcribed:
        hierarchies routinely introduce umbrella terms of their own.
        """
        with self._lock:
            vstate = self._vocab_state(vocabulary)
            if raw not in vstate.terms:
                raise UnknownTarget(f"no term {raw!r} in vocabulary {vocabulary!r}")
            if raw == broader or self._reaches(vstate, broader, raw):
                raise CycleDetected(f"{raw!r} -> {broader!r} would close a cycle")
            vstate.terms.setdefault(broader, Term())
            vstate.terms[raw].broader.add(broader)
            self._save_vocab(vstate)

    def remove_broader(self, vocabulary: str, raw: str, broader: str):
        with self._lock:
            vstate = self._vocab_state(vocabulary)
            if raw not in vstate.terms:
                raise UnknownTarget(f"no term {raw!r} in vocabulary {vocabulary!r}")
            vstate.terms[raw].broader.discard(broader)
            self._save_vocab(vstate)

    def _reaches(self, vstate: VocabularyState, start: str, goal: str) -> bool:
        stack = [start]
        seen = set()
        while stack:
            raw = stack.pop()
            if raw == goal:
                return True
            if raw in seen:
                continue
            seen.add(raw)
            term = vstate.terms.get(raw)
            if term is not None:
                stack.extend(term.broader)
        return False

    # --- lookups -----------------------------------------------------------

    def entity_types(self) -> list[str]:
        return sorted(self._entities)

    def vocabularies(self) -> list[str]:
        return sorted(self._vocabs)

    def locals_of(self, entity_type: str) -> dict[str, LocalInstance]:
        state = self._entities.get(entity_type)
        return dict(state.locals) if state else {}

    def masters_of(self, entity_type: str) -> dict[str, MasterInstance]:
        state = self._entities.get(entity_type)
        return dict(state.masters) if state else {}

    def exceptions_of(self, entity_type: str) -> list[UnmatchException]:
        state = self._entities.get(entity_type)
        return list(state.exceptions) if state else []

    def terms_of(self, vocabulary: str) -> dict[str, Term]:
        vstate = self._vocabs.get(vocabulary)
        return dict(vstate.terms) if vstate else {}

    def master_of_local(self, entity_type: str, local_id: str) -> str:
        state = self._entities.get(entity_type)
        if state is None or local_id not in state.master_of:
            raise UnknownTarget(f"no {entity_type} occurrence {local_id!r}")
        return state.master_of[local_id]

    def resolve_master(self, entity_type: str, any_id: str) -> str:
        """Current master for a master id, merged-away id, or local id."""
        with self._lock:
            return self._find_master(entity_type, any_id)

    def canonical_attributes(self, entity_type: str, master_id: str) -> dict[str, str]:
        """Displayable attributes: preferred values when any are set, else
        the verbatim attributes of the smallest member local."""
        state = self._entities.get(entity_type)
        if state is None or master_id not in state.masters:
            raise UnknownTarget(f"no {entity_type} identity {master_id!r}")
        master = state.masters[master_id]
        if master.preferred_attributes:
            return dict(master.preferred_attributes)
        lid = min(master.members)
        return dict(state.locals[lid].attributes)

    def appearances(self, entity_type: str, any_id: str) -> list[Anchor]:
        """All anchors behind an identity, in canonical order."""
        with self._lock:
            state = self._entity_state(entity_type)
            mid = self._find_master(entity_type, any_id)
            anchors = [state.locals[lid].anchor for lid in state.masters[mid].members]
            return sorted(anchors, key=_anchor_sort_key)

    def _find_master(self, entity_type: str, raw_id: str) -> str:
        state = self._entities.get(entity_type)
        if state is not None:
            if raw_id in state.locals:
                return state.master_of[raw_id]
            resolved = self._resolve_redirects(state, raw_id)
            if resolved in state.masters:
                return resolved
        for other, ostate in self._entities.items():
            if other == entity_type:
                continue
            if raw_id in ostate.masters or raw_id in ostate.redirects or raw_id in ostate.locals:
                raise TypeMismatch(f"{raw_id} belongs to entity type {other!r}, not {entity_type!r}")
        raise UnknownTarget(f"no {entity_type} instance {raw_id!r}")

    def _resolve_redirects(self, state: EntityState, mid: str) -> str:
        seen = set()
        while mid in state.redirects and mid not in seen:
            seen.add(mid)
            mid = state.redirects[mid]
        return mid

    def _entity_state(self, entity_type: str) -> EntityState:
        state = self._entities.get(entity_type)
        if state is None:
            state = EntityState(entity_type=entity_type)
            self._entities[entity_type] = state
        return state

    def _vocab_state(self, name: str) -> VocabularyState:
        vstate = self._vocabs.get(name)
        if vstate is None:
            vstate = VocabularyState(name=name)
            self._vocabs[name] = vstate
        return vstate

    # --- persistence ---------------------------------------------------------

    def _save_entity(self, state: EntityState):
        path = self.entities_dir / (quote(state.entity_type, safe="") + ".json")
        data = canonical_json_bytes(_entity_state_to_doc(state))
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)

    def _save_vocab(self, vstate: VocabularyState):
        path = self.vocabularies_dir / (quote(vstate.name, safe="") + ".json")
        data = canonical_json_bytes(_vocab_state_to_doc(vstate))
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)


def _rule_to_obj(rule: MatchRule) -> dict:
    return {
        "entity_type": rule.entity_type,
        "key_roles": list(rule.key_roles),
        "normalize": rule.normalize.to_obj(),
    }


def _exception_to_obj(exc: UnmatchException) -> dict:
    blocked_key = None
    if exc.blocked_key is not None:
        blocked_key = {
            "key_roles": list(exc.blocked_key.key_roles),
            "normalize": exc.blocked_key.normalize.to_obj(),
            "values": list(exc.blocked_key.values),
        }
    return {"blocked_key": blocked_key, "blocked_peers": list(exc.blocked_peers), "local_id": exc.local_id}


def _entity_state_to_doc(state: EntityState) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "entity_type": state.entity_type,
        "locals": {
            lid: {"anchor": loc.anchor.to_obj(), "attributes": loc.attributes}
            for lid, loc in state.locals.items()
        },
        "masters": {
            mid: {
                "members": sorted(m.members),
                "preferred_attributes": m.preferred_attributes,
                "enrichments": m.enrichments,
            }
            for mid, m in state.masters.items()
        },
        "redirects": state.redirects,
        "exceptions": [_exception_to_obj(e) for e in state.exceptions],
        "last_rule": _rule_to_obj(state.last_rule) if state.last_rule is not None else None,
    }


def _entity_state_from_doc(doc: dict) -> EntityState:
    state = EntityState(entity_type=doc["entity_type"])
    for lid, obj in doc.get("locals", {}).items():
        state.locals[lid] = LocalInstance(
            id=lid, anchor=Anchor.from_obj(obj["anchor"]), attributes=dict(obj["attributes"])
        )
    for mid, obj in doc.get("masters", {}).items():
        state.masters[mid] = MasterInstance(
            id=mid,
            members=set(obj["members"]),
            preferred_attributes=dict(obj.get("preferred_attributes", {})),
            enrichments=dict(obj.get("enrichments", {})),
        )
        for lid in obj["members"]:
            state.master_of[lid] = mid
    state.redirects = dict(doc.get("redirects", {}))
    for obj in doc.get("exceptions", ()):
        blocked_key = None
        if obj.get("blocked_key") is not None:
            bk = obj["blocked_key"]
            blocked_key = BlockedKey(
                key_roles=tuple(bk["key_roles"]),
                normalize=NormalizeFlags.from_obj(bk["normalize"]),
                values=tuple(bk["values"]),
            )
        state.exceptions.append(
            UnmatchException(
                local_id=obj["local_id"], blocked_peers=tuple(obj["blocked_peers"]), blocked_key=blocked_key
            )
        )
    if doc.get("last_rule") is not None:
        obj = doc["last_rule"]
        state.last_rule = MatchRule(
            entity_type=state.entity_type,
            key_roles=tuple(obj["key_roles"]),
            normalize=NormalizeFlags.from_obj(obj["normalize"]),
        )
    return state


def _vocab_state_to_doc(vstate: VocabularyState) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "name": vstate.name,
        "terms": {
            raw: {
                "appearances": [a.to_obj() for a in term.appearances],
                "broader": sorted(term.broader),
                "preferred": term.preferred,
            }
            for raw, term in vstate.terms.items()
        },
    }


def _vocab_state_from_doc(doc: dict) -> VocabularyState:
    vstate = VocabularyState(name=doc["name"])
    for raw, obj in doc.get("terms", {}).items():
        vstate.terms[raw] = Term(
            appearances=[Anchor.from_obj(a) for a in obj.get("appearances", ())],
            preferred=obj.get("preferred"),
            broader=set(obj.get("broader", ())),
        )
    return vstate


def local_to_obj(local: LocalInstance, master_id: str) -> dict:
    return {
        "anchor": local.anchor.to_obj(),
        "attributes": local.attributes,
        "id": local.id,
        "master": master_id,
    }


def master_to_obj(master: MasterInstance) -> dict:
    return {
        "enrichments": master.enrichments,
        "id": master.id,
        "members": sorted(master.members),
        "preferred_attributes": master.preferred_attributes,
    }


def term_to_obj(raw: str, term: Term) -> dict:
    return {
        "appearances": [a.to_obj() for a in term.appearances],
        "broader": sorted(term.broader),
        "preferred": term.preferred,
        "raw": raw,
    }
