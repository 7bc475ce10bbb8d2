"""Exercise-scenario ontology: object kinds, extensions, the legal
relationship matrix, and graph construction/validation.

The model is a STIX 2.1 profile restricted to the object kinds a cyber
security exercise needs, plus three custom attributes (difficulty on
course-of-action, scenario on grouping, recipient_group on identity).
Objects and graphs are immutable values; every mutation returns a new graph.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Any, Iterable, Mapping

from . import runtime
from .errors import (
    IllegalTriple,
    InvalidProperty,
    InvariantViolation,
    MissingMandatoryExtension,
    UnknownEndpoint,
)

ID_PATTERN = re.compile(
    r"^[a-z-]+--[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$"
)

EXTENSION_KEY = "extension-definition--ceso"


class ObjectKind(str, Enum):
    GROUPING = "grouping"
    CAMPAIGN = "campaign"
    INTRUSION_SET = "intrusion-set"
    NOTE = "note"
    REPORT = "report"
    COURSE_OF_ACTION = "course-of-action"
    ATTACK_PATTERN = "attack-pattern"
    MALWARE = "malware"
    TOOL = "tool"
    VULNERABILITY = "vulnerability"
    THREAT_ACTOR = "threat-actor"
    IDENTITY = "identity"
    LOCATION = "location"
    INDICATOR = "indicator"
    INFRASTRUCTURE = "infrastructure"
    OBSERVED_DATA = "observed-data"
    MALWARE_ANALYSIS = "malware-analysis"
    RELATIONSHIP = "relationship"


class RelType(str, Enum):
    RELATED_TO = "related_to"
    TARGETS = "targets"
    USES = "uses"
    ATTRIBUTED_TO = "attributed_to"
    LOCATED_AT = "located_at"
    DELIVERS = "delivers"
    INDICATES = "indicates"
    EXPLOITS = "exploits"
    MITIGATES = "mitigates"

    @property
    def wire(self) -> str:
        """STIX serializes relationship types with hyphens."""
        return self.value.replace("_", "-")

    @classmethod
    def from_wire(cls, value: str) -> "RelType":
        return cls(value.replace("-", "_"))


K = ObjectKind
R = RelType

# The legal (source kind, target kind, relationship) matrix. Edges outside
# this set require the explicit nonstandard flag.
LEGAL_TRIPLES: frozenset[tuple[ObjectKind, ObjectKind, RelType]] = frozenset(
    {
        (K.CAMPAIGN, K.GROUPING, R.RELATED_TO),
        (K.NOTE, K.GROUPING, R.RELATED_TO),
        (K.REPORT, K.GROUPING, R.RELATED_TO),
        (K.INTRUSION_SET, K.CAMPAIGN, R.RELATED_TO),
        (K.COURSE_OF_ACTION, K.GROUPING, R.RELATED_TO),
        (K.INTRUSION_SET, K.TOOL, R.TARGETS),
        (K.INTRUSION_SET, K.VULNERABILITY, R.TARGETS),
        (K.INTRUSION_SET, K.ATTACK_PATTERN, R.USES),
        (K.IDENTITY, K.INFRASTRUCTURE, R.USES),
        (K.ATTACK_PATTERN, K.THREAT_ACTOR, R.ATTRIBUTED_TO),
        (K.THREAT_ACTOR, K.IDENTITY, R.ATTRIBUTED_TO),
        (K.IDENTITY, K.LOCATION, R.LOCATED_AT),
        (K.ATTACK_PATTERN, K.MALWARE, R.DELIVERS),
        (K.ATTACK_PATTERN, K.INDICATOR, R.INDICATES),
        (K.INDICATOR, K.MALWARE, R.INDICATES),
        (K.ATTACK_PATTERN, K.VULNERABILITY, R.EXPLOITS),
        (K.COURSE_OF_ACTION, K.ATTACK_PATTERN, R.MITIGATES),
        (K.COURSE_OF_ACTION, K.VULNERABILITY, R.MITIGATES),
    }
)

# Which custom extension attribute may appear on which kind.
_EXTENSION_HOSTS = {
    "difficulty": ObjectKind.COURSE_OF_ACTION,
    "scenario": ObjectKind.GROUPING,
    "recipient_group": ObjectKind.IDENTITY,
}


@dataclass(frozen=True)
class CesoExtensions:
    difficulty: int | None = None
    scenario: str | None = None
    recipient_group: str | None = None

    def is_empty(self) -> bool:
        return self.difficulty is None and self.scenario is None and self.recipient_group is None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.difficulty is not None:
            out["difficulty"] = self.difficulty
        if self.scenario is not None:
            out["scenario"] = self.scenario
        if self.recipient_group is not None:
            out["recipient_group"] = self.recipient_group
        return out


@dataclass(frozen=True)
class CesoObject:
    id: str
    kind: ObjectKind
    name: str
    description: str = ""
    created: datetime = field(default_factory=runtime.now)
    modified: datetime = field(default_factory=runtime.now)
    properties: dict[str, Any] = field(default_factory=dict)
    extensions: CesoExtensions = field(default_factory=CesoExtensions)

    def with_properties(self, **updates: Any) -> "CesoObject":
        merged = dict(self.properties)
        merged.update(_normalize_properties(updates))
        return replace(self, properties=merged)


@dataclass(frozen=True)
class Relationship:
    id: str
    source: str
    target: str
    rel_type: RelType
    nonstandard: bool = False


@dataclass(frozen=True, eq=False)
class CesoGraph:
    objects: dict[str, CesoObject] = field(default_factory=dict)
    relationships: tuple[Relationship, ...] = ()
    # Foreign bundle objects we do not model (x-mitre-*, markings, ...) are
    # carried verbatim so parse -> serialize is lossless.
    opaque: tuple[dict, ...] = ()

    def __eq__(self, other: object) -> bool:
        # Edge and pass-through order is presentation detail, not meaning;
        # serialization canonicalizes it, so equality must ignore it.
        if not isinstance(other, CesoGraph):
            return NotImplemented
        return (
            self.objects == other.objects
            and sorted(self.relationships, key=lambda r: r.id)
            == sorted(other.relationships, key=lambda r: r.id)
            and sorted(self.opaque, key=lambda d: d.get("id", ""))
            == sorted(other.opaque, key=lambda d: d.get("id", ""))
        )

    def with_object(self, obj: CesoObject) -> "CesoGraph":
        if obj.id in self.objects:
            raise InvariantViolation("duplicate object id", obj.id)
        objects = dict(self.objects)
        objects[obj.id] = obj
        return replace(self, objects=objects)

    def with_objects(self, objs: Iterable[CesoObject]) -> "CesoGraph":
        graph = self
        for obj in objs:
            graph = graph.with_object(obj)
        return graph

    def replace_object(self, obj: CesoObject) -> "CesoGraph":
        if obj.id not in self.objects:
            raise UnknownEndpoint(f"no such object: {obj.id}")
        objects = dict(self.objects)
        objects[obj.id] = obj
        return replace(self, objects=objects)

    def objects_of_kind(self, kind: ObjectKind) -> list[CesoObject]:
        return [o for o in self.objects.values() if o.kind is kind]

    def edges_from(self, source_id: str) -> list[Relationship]:
        return [r for r in self.relationships if r.source == source_id]

    def edges_to(self, target_id: str) -> list[Relationship]:
        return [r for r in self.relationships if r.target == target_id]

    def has_edge(self, source: str, target: str, rel_type: RelType) -> bool:
        return any(
            r.source == source and r.target == target and r.rel_type is rel_type
            for r in self.relationships
        )


def _normalize_properties(properties: Mapping[str, Any]) -> dict[str, Any]:
    """Force properties into plain JSON values so graph equality survives a
    serialization round trip."""
    try:
        return json.loads(json.dumps(dict(properties)))
    except (TypeError, ValueError) as exc:
        raise InvalidProperty(f"properties must be JSON-serializable: {exc}") from exc


def _validate_extensions(kind: ObjectKind, ext: CesoExtensions) -> None:
    for attr, host in _EXTENSION_HOSTS.items():
        if getattr(ext, attr) is not None and kind is not host:
            raise InvalidProperty(
                f"extension '{attr}' is only legal on {host.value}, not {kind.value}"
            )
    if ext.difficulty is not None and not 1 <= ext.difficulty <= 5:
        raise InvalidProperty(f"difficulty must be in [1, 5], got {ext.difficulty}")
    if kind is ObjectKind.GROUPING and not (ext.scenario or "").strip():
        raise MissingMandatoryExtension("grouping requires a non-empty scenario extension")


def new_object(
    kind: ObjectKind,
    name: str,
    properties: Mapping[str, Any] | None = None,
    *,
    description: str = "",
    object_id: str | None = None,
) -> CesoObject:
    """Build a fresh ontology object.

    Extension attributes (difficulty, scenario, recipient_group) may be passed
    inside ``properties``; they are routed into the extension container and
    bound-checked. A grouping without a scenario extension is rejected.
    """
    if not isinstance(kind, ObjectKind):
        raise InvalidProperty(f"unknown object kind: {kind!r}")
    if kind is ObjectKind.RELATIONSHIP:
        raise InvalidProperty("relationships are created via add_relationship")
    if not name or not name.strip():
        raise InvalidProperty("object name must be non-empty")

    props = dict(properties or {})
    ext_values = {attr: props.pop(attr) for attr in _EXTENSION_HOSTS if attr in props}
    if "difficulty" in ext_values and not isinstance(ext_values["difficulty"], int):
        raise InvalidProperty("difficulty must be an integer")
    ext = CesoExtensions(**ext_values)
    _validate_extensions(kind, ext)

    now = runtime.now()
    return CesoObject(
        id=object_id or runtime.new_id(kind.value),
        kind=kind,
        name=name,
        description=description,
        created=now,
        modified=now,
        properties=_normalize_properties(props),
        extensions=ext,
    )


def is_legal_triple(source_kind: ObjectKind, target_kind: ObjectKind, rel_type: RelType) -> bool:
    return (source_kind, target_kind, rel_type) in LEGAL_TRIPLES


def add_relationship(
    graph: CesoGraph,
    source: str,
    target: str,
    rel_type: RelType,
    *,
    nonstandard: bool = False,
) -> CesoGraph:
    """Append a validated edge; returns the extended graph.

    Triples outside the legal matrix need ``nonstandard=True``; duplicate
    (source, target, type) edges are dropped silently so re-wiring is
    idempotent.
    """
    if source not in graph.objects:
        raise UnknownEndpoint(f"unknown source object: {source}")
    if target not in graph.objects:
        raise UnknownEndpoint(f"unknown target object: {target}")
    rel_type = RelType(rel_type)
    src_kind = graph.objects[source].kind
    tgt_kind = graph.objects[target].kind
    if not is_legal_triple(src_kind, tgt_kind, rel_type) and not nonstandard:
        raise IllegalTriple(
            f"({src_kind.value}, {tgt_kind.value}, {rel_type.value}) is not in the "
            "relationship matrix; pass nonstandard=True to force it"
        )
    if graph.has_edge(source, target, rel_type):
        return graph
    rel = Relationship(
        id=runtime.new_id("relationship"),
        source=source,
        target=target,
        rel_type=rel_type,
        nonstandard=nonstandard,
    )
    return replace(graph, relationships=graph.relationships + (rel,))


def validate_graph(graph: CesoGraph) -> None:
    """Re-check every model invariant; raises InvariantViolation with the
    offending object id."""
    seen: set[str] = set()
    for obj_id, obj in graph.objects.items():
        if obj_id != obj.id:
            raise InvariantViolation("graph key does not match object id", obj_id)
        if obj.id in seen:
            raise InvariantViolation("duplicate object id", obj.id)
        seen.add(obj.id)
        if not ID_PATTERN.match(obj.id):
            raise InvariantViolation("id does not match STIX id shape", obj.id)
        if not obj.id.startswith(obj.kind.value + "--"):
            raise InvariantViolation(
                f"id prefix does not match kind {obj.kind.value}", obj.id
            )
        if not obj.name or not obj.name.strip():
            raise InvariantViolation("object name is empty", obj.id)
        if obj.created > obj.modified:
            raise InvariantViolation("created is later than modified", obj.id)
        try:
            _validate_extensions(obj.kind, obj.extensions)
        except (InvalidProperty, MissingMandatoryExtension) as exc:
            raise InvariantViolation(str(exc), obj.id) from exc

    opaque_ids = set()
    for raw in graph.opaque:
        raw_id = raw.get("id")
        if not raw_id:
            raise InvariantViolation("opaque object without id")
        if raw_id in seen or raw_id in opaque_ids:
            raise InvariantViolation("duplicate object id", raw_id)
        opaque_ids.add(raw_id)

    known = seen | opaque_ids
    rel_ids: set[str] = set()
    for rel in graph.relationships:
        if rel.id in rel_ids or rel.id in known:
            raise InvariantViolation("duplicate relationship id", rel.id)
        rel_ids.add(rel.id)
        for endpoint in (rel.source, rel.target):
            if endpoint not in known:
                raise InvariantViolation(
                    f"relationship endpoint does not resolve: {endpoint}", rel.id
                )
        if rel.source in graph.objects and rel.target in graph.objects:
            triple_ok = is_legal_triple(
                graph.objects[rel.source].kind, graph.objects[rel.target].kind, rel.rel_type
            )
            if not triple_ok and not rel.nonstandard:
                raise InvariantViolation(
                    f"edge {rel.rel_type.value} violates the relationship matrix", rel.id
                )
        elif not rel.nonstandard:
            raise InvariantViolation(
                "edge touching an opaque object must be flagged nonstandard", rel.id
            )
