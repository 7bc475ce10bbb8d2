"""STIX 2.1 bundle wire format.

``serialize_bundle``/``parse_bundle`` are exact inverses at the graph level:
object order in the emitted bundle is sorted by id, timestamps are RFC 3339
with millisecond precision, and the custom attributes travel in an
``extensions`` container keyed ``extension-definition--ceso``. Objects whose
type (or shape) we do not model are passed through verbatim.
"""

from __future__ import annotations

import json
from dataclasses import replace
from datetime import datetime, timezone
from typing import Any

from . import runtime
from .ceso import (
    EXTENSION_KEY,
    CesoExtensions,
    CesoGraph,
    CesoObject,
    ObjectKind,
    RelType,
    Relationship,
    is_legal_triple,
    validate_graph,
)
from .errors import InvariantViolation, MalformedBundle

_KNOWN_KINDS = {k.value for k in ObjectKind if k is not ObjectKind.RELATIONSHIP}
_WIRE_REL_TYPES = {r.wire: r for r in RelType}


def format_timestamp(value: datetime) -> str:
    value = value.astimezone(timezone.utc)
    return value.strftime("%Y-%m-%dT%H:%M:%S.") + f"{value.microsecond // 1000:03d}Z"


def parse_timestamp(value: str) -> datetime:
    try:
        return datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise MalformedBundle(f"bad timestamp: {value!r}") from exc


def object_to_stix(obj: CesoObject) -> dict[str, Any]:
    out: dict[str, Any] = {
        "type": obj.kind.value,
        "spec_version": "2.1",
        "id": obj.id,
        "created": format_timestamp(obj.created),
        "modified": format_timestamp(obj.modified),
        "name": obj.name,
    }
    if obj.description:
        out["description"] = obj.description
    extensions: dict[str, Any] = {}
    for key in sorted(obj.properties):
        if key == "extensions":
            # Foreign extension containers parked in properties rejoin ours.
            extensions.update(obj.properties[key])
        else:
            out[key] = obj.properties[key]
    if not obj.extensions.is_empty():
        extensions[EXTENSION_KEY] = obj.extensions.to_dict()
    if extensions:
        out["extensions"] = extensions
    return out


def _relationship_to_stix(rel: Relationship, graph: CesoGraph) -> dict[str, Any]:
    # Relationships carry no timestamps in the model; derive a stable wire
    # value from the endpoints so serialization is a pure function.
    stamps = [
        graph.objects[e].modified for e in (rel.source, rel.target) if e in graph.objects
    ]
    stamp = format_timestamp(max(stamps) if stamps else runtime.now())
    out: dict[str, Any] = {
        "type": "relationship",
        "spec_version": "2.1",
        "id": rel.id,
        "created": stamp,
        "modified": stamp,
        "relationship_type": rel.rel_type.wire,
        "source_ref": rel.source,
        "target_ref": rel.target,
    }
    if rel.nonstandard:
        out["extensions"] = {EXTENSION_KEY: {"nonstandard": True}}
    return out


def bundle_dict(graph: CesoGraph, *, bundle_id: str | None = None) -> dict[str, Any]:
    objects = [object_to_stix(o) for o in graph.objects.values()]
    objects += [_relationship_to_stix(r, graph) for r in graph.relationships]
    objects += [dict(raw) for raw in graph.opaque]
    objects.sort(key=lambda d: d["id"])
    return {
        "type": "bundle",
        "id": bundle_id or runtime.new_id("bundle"),
        "objects": objects,
    }


def serialize_bundle(graph: CesoGraph, *, bundle_id: str | None = None) -> str:
    return json.dumps(bundle_dict(graph, bundle_id=bundle_id), indent=2, ensure_ascii=False)


def _split_extensions(raw: dict[str, Any]) -> tuple[CesoExtensions, dict[str, Any]]:
    containers = dict(raw.get("extensions") or {})
    ours = containers.pop(EXTENSION_KEY, {})
    ext = CesoExtensions(
        difficulty=ours.get("difficulty"),
        scenario=ours.get("scenario"),
        recipient_group=ours.get("recipient_group"),
    )
    return ext, containers


def _object_from_stix(raw: dict[str, Any]) -> CesoObject | None:
    """Build a model object, or None when the record lacks the shape we emit
    (then it rides along as opaque)."""
    kind_value = raw.get("type")
    if kind_value not in _KNOWN_KINDS:
        return None
    if not all(raw.get(key) for key in ("id", "name", "created", "modified")):
        return None
    ext, foreign_ext = _split_extensions(raw)
    skip = {"type", "spec_version", "id", "name", "description", "created", "modified", "extensions"}
    properties = {k: v for k, v in raw.items() if k not in skip}
    if foreign_ext:
        properties["extensions"] = foreign_ext
    return CesoObject(
        id=raw["id"],
        kind=ObjectKind(kind_value),
        name=raw["name"],
        description=raw.get("description", ""),
        created=parse_timestamp(raw["created"]),
        modified=parse_timestamp(raw["modified"]),
        properties=properties,
        extensions=ext,
    )


def _relationship_from_stix(raw: dict[str, Any]) -> Relationship | None:
    rel_wire = raw.get("relationship_type", "")
    if rel_wire not in _WIRE_REL_TYPES:
        return None
    if not raw.get("id") or not raw.get("source_ref") or not raw.get("target_ref"):
        return None
    ours = (raw.get("extensions") or {}).get(EXTENSION_KEY, {})
    return Relationship(
        id=raw["id"],
        source=raw["source_ref"],
        target=raw["target_ref"],
        rel_type=_WIRE_REL_TYPES[rel_wire],
        nonstandard=bool(ours.get("nonstandard", False)),
    )


def parse_bundle(text: str) -> CesoGraph:
    """Reconstruct a graph from bundle JSON and re-validate its invariants.

    Triples that are legal in a foreign vocabulary but not in ours are kept
    with the nonstandard flag set, so ATT&CK exports load cleanly.
    """
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedBundle(f"not JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "bundle":
        raise MalformedBundle("top-level object is not a STIX bundle")
    raw_objects = doc.get("objects")
    if not isinstance(raw_objects, list):
        raise MalformedBundle("bundle has no objects array")

    objects: dict[str, CesoObject] = {}
    relationships: list[Relationship] = []
    opaque: list[dict] = []

    for raw in raw_objects:
        if not isinstance(raw, dict):
            raise MalformedBundle("bundle objects must be JSON objects")
        if raw.get("type") == "relationship":
            rel = _relationship_from_stix(raw)
            if rel is None:
                opaque.append(raw)
            else:
                relationships.append(rel)
            continue
        obj = _object_from_stix(raw)
        if obj is None:
            opaque.append(raw)
            continue
        if obj.id in objects:
            raise InvariantViolation("duplicate object id", obj.id)
        if not obj.id.startswith(obj.kind.value + "--"):
            raise InvariantViolation("id prefix does not match object type", obj.id)
        objects[obj.id] = obj

    opaque_ids = {raw.get("id") for raw in opaque}
    fixed: list[Relationship] = []
    for rel in relationships:
        for endpoint in (rel.source, rel.target):
            if endpoint not in objects and endpoint not in opaque_ids:
                raise InvariantViolation(
                    f"relationship endpoint does not resolve: {endpoint}", rel.id
                )
        if rel.source in objects and rel.target in objects:
            legal = is_legal_triple(
                objects[rel.source].kind, objects[rel.target].kind, rel.rel_type
            )
            if not legal and not rel.nonstandard:
                rel = replace(rel, nonstandard=True)
        elif not rel.nonstandard:
            rel = replace(rel, nonstandard=True)
        fixed.append(rel)

    # Canonical opaque order (by id) keeps parse -> serialize -> parse stable.
    opaque.sort(key=lambda raw: raw.get("id", ""))
    graph = CesoGraph(
        objects=objects, relationships=tuple(fixed), opaque=tuple(opaque)
    )
    validate_graph(graph)
    return graph
