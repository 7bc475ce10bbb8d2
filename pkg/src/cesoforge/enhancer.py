"""APT profile ingestion, weighted object/graph similarity, ranking, and
full-or-fragment graph merging with kill-chain filtering.

Similarity scores run 0-100. Object scores sum weighted per-property matches
(weights per kind sum to 100); graph scores greedily pair same-kind objects
and average over paired plus unpaired slots, so identical graphs score 100
and disjoint ones 0.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from . import runtime
from .bundle import parse_bundle
from .ceso import (
    CesoGraph,
    CesoObject,
    ObjectKind,
    RelType,
    Relationship,
    add_relationship,
    new_object,
    validate_graph,
)
from .errors import EmptySelection, MalformedBundle, UnknownFragmentId
from .incidents import IncidentDraft, injects_from_graph, scaffold_injects

logger = logging.getLogger(__name__)

_DATA_DIR = Path(__file__).parent / "data"

KILL_CHAIN_PHASES = (
    "reconnaissance",
    "weaponization",
    "delivery",
    "exploitation",
    "installation",
    "command-and-control",
    "actions-on-objectives",
)
KILL_CHAIN_NAME = "lockheed-martin-cyber-kill-chain"


@dataclass(frozen=True)
class AptProfile:
    group_id: str
    name: str
    aliases: tuple[str, ...]
    graph: CesoGraph

    def techniques(self) -> list[CesoObject]:
        return self.graph.objects_of_kind(ObjectKind.ATTACK_PATTERN)


def phases_of(obj: CesoObject) -> set[str]:
    return {
        entry.get("phase_name", "")
        for entry in obj.properties.get("kill_chain_phases", [])
        if isinstance(entry, dict)
    }


# --- similarity configuration ---------------------------------------------------

@dataclass(frozen=True)
class PropertyRule:
    weight: float
    comparator: str  # exact | token-set | edit-distance
    threshold: float = 0.0


@dataclass(frozen=True)
class SimilarityConfig:
    tables: dict[str, dict[str, PropertyRule]]

    def __post_init__(self):
        for kind, table in self.tables.items():
            total = sum(rule.weight for rule in table.values())
            if any(rule.weight < 0 for rule in table.values()):
                raise ValueError(f"negative weight in table {kind!r}")
            if abs(total - 100.0) > 1e-9:
                raise ValueError(f"weights for {kind!r} sum to {total}, expected 100")

    def table_for(self, kind: ObjectKind) -> dict[str, PropertyRule]:
        return self.tables.get(kind.value) or self.tables["default"]


def _parse_flat_config(text: str) -> SimilarityConfig:
    """Parse the flat ``kind.property.weight = value`` key/value format."""
    tables: dict[str, dict[str, dict]] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        parts = key.split(".")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected kind.property.field key, got {key!r}")
        kind, prop, fld = parts
        slot = tables.setdefault(kind, {}).setdefault(prop, {})
        if fld == "weight":
            slot["weight"] = float(value)
        elif fld == "comparator":
            comparator = value.strip('"').strip("'")
            if ":" in comparator:
                name, threshold = comparator.split(":", 1)
                slot["comparator"] = name
                slot["threshold"] = float(threshold)
            else:
                slot["comparator"] = comparator
        else:
            raise ValueError(f"line {lineno}: unknown field {fld!r}")
    built = {
        kind: {
            prop: PropertyRule(
                weight=slot.get("weight", 0.0),
                comparator=slot.get("comparator", "exact"),
                threshold=slot.get("threshold", 0.0),
            )
            for prop, slot in props.items()
        }
        for kind, props in tables.items()
    }
    return SimilarityConfig(tables=built)


def load_similarity_config(path: str | Path | None = None) -> SimilarityConfig:
    target = Path(path) if path else _DATA_DIR / "similarity.toml"
    return _parse_flat_config(target.read_text(encoding="utf-8"))


DEFAULT_SIMILARITY = load_similarity_config()


# --- comparators -----------------------------------------------------------------

def _tokens(value) -> frozenset[str]:
    if value is None:
        return frozenset()
    if isinstance(value, dict):
        picked = value.get("external_id") or value.get("source_name") or ""
        return _tokens(picked)
    if isinstance(value, (list, tuple)):
        out: set[str] = set()
        for element in value:
            out |= _tokens(element)
        return frozenset(out)
    return frozenset(re.findall(r"[\w-]+", str(value).casefold()))


def _canonical(value) -> str:
    if isinstance(value, (list, tuple)):
        return "|".join(sorted(_canonical(v) for v in value))
    if isinstance(value, dict):
        return _canonical(value.get("external_id") or value.get("source_name") or "")
    return str(value).casefold().strip()


def _edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def _match(rule: PropertyRule, a, b) -> float:
    if a is None and b is None:
        return 1.0  # absent on both sides: vacuously matching
    if a is None or b is None:
        return 0.0
    if rule.comparator == "exact":
        return 1.0 if _canonical(a) == _canonical(b) else 0.0
    if rule.comparator == "token-set":
        ta, tb = _tokens(a), _tokens(b)
        if not ta and not tb:
            return 1.0
        if not ta or not tb:
            return 0.0
        return len(ta & tb) / len(ta | tb)
    if rule.comparator == "edit-distance":
        sa, sb = _canonical(a), _canonical(b)
        if not sa and not sb:
            return 1.0
        longest = max(len(sa), len(sb))
        similarity = 1.0 - _edit_distance(sa, sb) / longest
        return similarity if similarity >= rule.threshold else 0.0
    raise ValueError(f"unknown comparator {rule.comparator!r}")


def _property_value(obj: CesoObject, prop: str):
    if prop == "name":
        return obj.name
    if prop == "description":
        return obj.description or None
    return obj.properties.get(prop)


def object_similarity(
    a: CesoObject, b: CesoObject, cfg: SimilarityConfig = DEFAULT_SIMILARITY
) -> float:
    """Weighted property similarity in [0, 100]; differing kinds score 0."""
    if a.kind is not b.kind:
        return 0.0
    table = cfg.table_for(a.kind)
    return sum(
        rule.weight * _match(rule, _property_value(a, prop), _property_value(b, prop))
        for prop, rule in table.items()
    )


def _signature(obj: CesoObject) -> tuple:
    return (obj.kind.value, obj.name.casefold(), obj.id)


def graph_similarity(
    g1: CesoGraph, g2: CesoGraph, cfg: SimilarityConfig = DEFAULT_SIMILARITY
) -> float:
    """Greedy best-match pairing per kind; the score is the mean over matched
    pairs plus unmatched objects (which contribute 0). Symmetric because
    candidate pairs are ordered by an unordered tie-break key."""
    objs1 = list(g1.objects.values())
    objs2 = list(g2.objects.values())
    if not objs1 and not objs2:
        return 100.0
    candidates = []
    for a in objs1:
        for b in objs2:
            if a.kind is not b.kind:
                continue
            score = object_similarity(a, b, cfg)
            sig_a, sig_b = _signature(a), _signature(b)
            key = (min(sig_a, sig_b), max(sig_a, sig_b))
            candidates.append((score, key, a.id, b.id))
    candidates.sort(key=lambda item: (-item[0], item[1]))
    used1: set[str] = set()
    used2: set[str] = set()
    total = 0.0
    matched = 0
    for score, _, id1, id2 in candidates:
        if id1 in used1 or id2 in used2:
            continue
        used1.add(id1)
        used2.add(id2)
        total += score
        matched += 1
    slots = len(objs1) + len(objs2) - matched
    return total / slots if slots else 100.0


def rank_apts(
    draft: IncidentDraft,
    profiles: Iterable[AptProfile],
    cfg: SimilarityConfig = DEFAULT_SIMILARITY,
) -> list[tuple[AptProfile, float]]:
    """Profiles ordered by descending graph similarity to the draft; ties
    break on group name."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("rank_apts requires at least one profile")
    scored = [(p, graph_similarity(draft.graph, p.graph, cfg)) for p in profiles]
    scored.sort(key=lambda pair: (-pair[1], pair[0].name))
    return scored


# --- ATT&CK ingestion --------------------------------------------------------------

def ingest_attack(bundle_json: str) -> list[AptProfile]:
    """One profile per intrusion-set in the bundle, with the transitive
    closure of its outgoing edges (techniques, malware, tools) pulled in."""
    graph = parse_bundle(bundle_json)
    profiles = []
    for group in graph.objects_of_kind(ObjectKind.INTRUSION_SET):
        member_ids = {group.id}
        frontier = [group.id]
        while frontier:
            current = frontier.pop()
            for rel in graph.edges_from(current):
                if rel.target in graph.objects and rel.target not in member_ids:
                    member_ids.add(rel.target)
                    frontier.append(rel.target)
        # Keep bundle order (not set order) so downstream id assignment is
        # deterministic across processes.
        members = {oid: obj for oid, obj in graph.objects.items() if oid in member_ids}
        edges = tuple(
            rel
            for rel in graph.relationships
            if rel.source in member_ids and rel.target in member_ids
        )
        subgraph = CesoGraph(objects=members, relationships=edges)
        profile = AptProfile(
            group_id=group.id,
            name=group.name,
            aliases=tuple(group.properties.get("aliases", [])),
            graph=subgraph,
        )
        if not profile.techniques():
            logger.warning("APT group %s has no techniques in the bundle", group.name)
        profiles.append(profile)
    if not profiles and not graph.objects and not graph.opaque:
        raise MalformedBundle("bundle contains no objects")
    return profiles


def profile_to_dict(profile: AptProfile) -> dict:
    from .bundle import bundle_dict

    return {
        "group_id": profile.group_id,
        "name": profile.name,
        "aliases": list(profile.aliases),
        "bundle": bundle_dict(
            profile.graph, bundle_id="bundle--" + profile.group_id.split("--", 1)[1]
        ),
    }


def profile_from_dict(data: dict) -> AptProfile:
    import json as _json

    return AptProfile(
        group_id=data["group_id"],
        name=data["name"],
        aliases=tuple(data["aliases"]),
        graph=parse_bundle(_json.dumps(data["bundle"])),
    )


def profiles_from_store(store) -> list[AptProfile]:
    return [profile_from_dict(d) for d in store.list_apt_profiles()]


# --- merging and filtering -----------------------------------------------------------

def _dedup_key(obj: CesoObject) -> tuple[str, str]:
    return (obj.kind.value, obj.name.casefold().strip())


def merge(
    base: IncidentDraft,
    donor: AptProfile,
    fragment: Iterable[str] | None = None,
    phases: Iterable[str] | None = None,
) -> IncidentDraft:
    """Copy donor objects (optionally restricted to a fragment id set and/or
    kill-chain phases) into the draft, re-rooted on the base intrusion-set.

    Donor objects whose kind and name already exist in the base are dropped
    in favour of the base copy; their edges are re-pointed, so re-applying
    the same donor is a no-op.
    """
    donor_root_ids = {o.id for o in donor.graph.objects_of_kind(ObjectKind.INTRUSION_SET)}
    fragment_ids = set(fragment) if fragment is not None else None
    if fragment_ids is not None:
        unknown = fragment_ids - set(donor.graph.objects)
        if unknown:
            raise UnknownFragmentId(f"not in donor graph: {', '.join(sorted(unknown))}")
    phase_set = set(phases) if phases is not None else None
    if phase_set is not None:
        bad = phase_set - set(KILL_CHAIN_PHASES)
        if bad:
            raise ValueError(f"unknown kill-chain phases: {', '.join(sorted(bad))}")

    candidates = [
        obj for oid, obj in donor.graph.objects.items() if oid not in donor_root_ids
    ]
    if fragment_ids is not None:
        candidates = [o for o in candidates if o.id in fragment_ids]
    if phase_set is not None:
        kept_aps = {
            o.id
            for o in candidates
            if o.kind is ObjectKind.ATTACK_PATTERN and phases_of(o) & phase_set
        }
        # Non-technique donor objects stay only when adjacent to a kept technique.
        kept: list[CesoObject] = []
        for obj in candidates:
            if obj.kind is ObjectKind.ATTACK_PATTERN:
                if obj.id in kept_aps:
                    kept.append(obj)
                continue
            adjacent = any(
                (rel.source == obj.id and rel.target in kept_aps)
                or (rel.target == obj.id and rel.source in kept_aps)
                for rel in donor.graph.relationships
            )
            if adjacent:
                kept.append(obj)
        candidates = kept
    if not candidates:
        raise EmptySelection("selection matches no donor objects")

    base_by_key = {_dedup_key(obj): obj.id for obj in base.graph.objects.values()}
    graph = base.graph
    id_map: dict[str, str] = {rid: base.root.id for rid in donor_root_ids}
    for obj in candidates:
        key = _dedup_key(obj)
        if key in base_by_key:
            id_map[obj.id] = base_by_key[key]
            continue
        clone = replace(
            obj,
            id=runtime.new_id(obj.kind.value),
            properties={**obj.properties, "x_provenance": f"apt:{donor.name}"},
        )
        id_map[obj.id] = clone.id
        graph = graph.with_object(clone)

    for rel in donor.graph.relationships:
        source = id_map.get(rel.source)
        target = id_map.get(rel.target)
        if source is None or target is None or source == target:
            continue
        graph = add_relationship(
            graph, source, target, rel.rel_type, nonstandard=rel.nonstandard
        )

    # Techniques the merge introduced get inject scaffolds after the existing ones.
    existing_coas = injects_from_graph(graph, base.root.id)
    covered = set()
    for plan in existing_coas:
        covered.update(plan.carrier_objects)
    new_aps = [
        graph.objects[id_map[obj.id]]
        for obj in candidates
        if obj.kind is ObjectKind.ATTACK_PATTERN and id_map[obj.id] not in covered
    ]
    for ap in new_aps:
        graph = add_relationship(graph, base.root.id, ap.id, RelType.USES)
    graph, _ = scaffold_injects(graph, new_aps, start_index=len(existing_coas))

    validate_graph(graph)
    provenance = base.provenance
    if donor.group_id not in provenance:
        provenance = provenance + (donor.group_id,)
    return IncidentDraft(
        root=graph.objects[base.root.id],
        graph=graph,
        injects=injects_from_graph(graph, base.root.id),
        provenance=provenance,
    )


def filter_kill_chain(graph: CesoGraph, phases: Iterable[str]) -> CesoGraph:
    """Drop attack patterns outside the given phases, prune their edges, and
    keep other objects only while still connected to an intrusion-set."""
    phase_set = set(phases)
    bad = phase_set - set(KILL_CHAIN_PHASES)
    if bad:
        raise ValueError(f"unknown kill-chain phases: {', '.join(sorted(bad))}")

    removed = {
        obj.id
        for obj in graph.objects_of_kind(ObjectKind.ATTACK_PATTERN)
        if not (phases_of(obj) & phase_set)
    }
    surviving_edges = [
        rel
        for rel in graph.relationships
        if rel.source not in removed and rel.target not in removed
    ]
    roots = [o.id for o in graph.objects_of_kind(ObjectKind.INTRUSION_SET)]
    reachable = set(roots)
    frontier = list(roots)
    adjacency: dict[str, set[str]] = {}
    for rel in surviving_edges:
        adjacency.setdefault(rel.source, set()).add(rel.target)
        adjacency.setdefault(rel.target, set()).add(rel.source)
    while frontier:
        current = frontier.pop()
        for neighbour in adjacency.get(current, ()):
            if neighbour not in reachable:
                reachable.add(neighbour)
                frontier.append(neighbour)

    kept_objects = {
        oid: obj
        for oid, obj in graph.objects.items()
        if oid not in removed and (oid in reachable or obj.kind is ObjectKind.INTRUSION_SET)
    }
    kept_edges = tuple(
        rel
        for rel in surviving_edges
        if rel.source in kept_objects and rel.target in kept_objects
    )
    return CesoGraph(objects=kept_objects, relationships=kept_edges, opaque=graph.opaque)
