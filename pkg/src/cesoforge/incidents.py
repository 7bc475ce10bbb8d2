"""Incident drafting: breadcrumbs become intrusion-set-rooted graphs with
inject scaffolding, plus report/visualization emission."""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import runtime
from .bundle import serialize_bundle
from .ceso import (
    CesoGraph,
    CesoObject,
    ObjectKind,
    RelType,
    add_relationship,
    new_object,
    validate_graph,
)
from .errors import ImmatureSource, NoCandidates, NotFoundError
from .store import Breadcrumb, KnowledgeDb, QueryFilter, StoredIncident
from .tagging import MATURITY_THRESHOLD, is_mature

INJECT_SPACING_MINUTES = 30
DEFAULT_INJECT_DIFFICULTY = 3

TIMING_PROPERTY = "x_timing_offset"
CARRIERS_PROPERTY = "x_carrier_refs"


@dataclass(frozen=True)
class InjectPlan:
    title: str
    description: str
    timing_offset: int  # minutes from incident start
    difficulty: int
    carrier_objects: tuple[str, ...]

    def __post_init__(self):
        if not 1 <= self.difficulty <= 5:
            raise ValueError(f"inject difficulty must be in [1, 5]: {self.difficulty}")
        if self.timing_offset < 0:
            raise ValueError(f"inject timing must be non-negative: {self.timing_offset}")


@dataclass(frozen=True)
class IncidentDraft:
    root: CesoObject
    graph: CesoGraph
    injects: tuple[InjectPlan, ...]
    provenance: tuple[str, ...]

    @property
    def name_tag(self) -> str:
        return self.root.name


def _carriers_for(graph: CesoGraph, ap: CesoObject, coa_id: str) -> tuple[str, ...]:
    carried = {ap.id, coa_id}
    for rel in graph.edges_from(ap.id):
        if graph.objects[rel.target].kind in (ObjectKind.MALWARE, ObjectKind.INDICATOR):
            carried.add(rel.target)
    return tuple(sorted(carried))


def scaffold_injects(
    graph: CesoGraph, attack_patterns: list[CesoObject], start_index: int = 0
) -> tuple[CesoGraph, list[InjectPlan]]:
    """One inject (a mitigating course-of-action) per attack-pattern, spaced
    30 minutes apart starting after the incident kickoff."""
    injects = []
    for offset, ap in enumerate(attack_patterns):
        number = start_index + offset + 1
        timing = number * INJECT_SPACING_MINUTES
        coa = new_object(
            ObjectKind.COURSE_OF_ACTION,
            f"Inject {number}",
            {
                "difficulty": DEFAULT_INJECT_DIFFICULTY,
                TIMING_PROPERTY: timing,
                "x_provenance": "rule:inject-scaffold",
            },
            description=f"Respond to activity matching the {ap.name} technique",
        )
        graph = graph.with_object(coa)
        graph = add_relationship(graph, coa.id, ap.id, RelType.MITIGATES)
        carriers = _carriers_for(graph, ap, coa.id)
        graph = graph.replace_object(
            graph.objects[coa.id].with_properties(**{CARRIERS_PROPERTY: list(carriers)})
        )
        injects.append(
            InjectPlan(
                title=coa.name,
                description=coa.description,
                timing_offset=timing,
                difficulty=DEFAULT_INJECT_DIFFICULTY,
                carrier_objects=carriers,
            )
        )
    return graph, injects


def injects_from_graph(graph: CesoGraph, intrusion_set_id: str) -> tuple[InjectPlan, ...]:
    """Rebuild inject plans from the course-of-action objects that mitigate
    the incident's attack patterns."""
    ap_ids = {
        rel.target
        for rel in graph.edges_from(intrusion_set_id)
        if rel.rel_type is RelType.USES
        and graph.objects[rel.target].kind is ObjectKind.ATTACK_PATTERN
    }
    plans = []
    for obj in graph.objects_of_kind(ObjectKind.COURSE_OF_ACTION):
        mitigated = [
            rel.target
            for rel in graph.edges_from(obj.id)
            if rel.rel_type is RelType.MITIGATES and rel.target in ap_ids
        ]
        if not mitigated:
            continue
        carriers = obj.properties.get(CARRIERS_PROPERTY) or sorted({obj.id, *mitigated})
        plans.append(
            InjectPlan(
                title=obj.name,
                description=obj.description,
                timing_offset=int(obj.properties.get(TIMING_PROPERTY, 0)),
                difficulty=obj.extensions.difficulty or DEFAULT_INJECT_DIFFICULTY,
                carrier_objects=tuple(carriers),
            )
        )
    plans.sort(key=lambda p: (p.timing_offset, p.title))
    return tuple(plans)


def draft_from_breadcrumb(
    breadcrumb: Breadcrumb,
    *,
    name: str | None = None,
    allow_immature: bool = False,
) -> IncidentDraft:
    """Root a breadcrumb fragment under a fresh intrusion-set and scaffold one
    inject per attack pattern.

    Breadcrumbs below the maturity threshold are rejected unless
    ``allow_immature`` is set, in which case the draft is flagged.
    """
    mature = is_mature(breadcrumb.tags)
    if not mature and not allow_immature:
        raise ImmatureSource(
            f"breadcrumb maturity {breadcrumb.maturity} is below the "
            f"threshold of {MATURITY_THRESHOLD}; pass allow_immature to override"
        )

    root_props: dict = {"x_provenance": "rule:incident-root"}
    if not mature:
        root_props["x_low_maturity"] = True
    root = new_object(
        ObjectKind.INTRUSION_SET,
        name or f"incident-{breadcrumb.article_id[:8]}",
        root_props,
        description=f"Incident drafted from article {breadcrumb.article_id}",
    )

    graph = CesoGraph().with_object(root)
    graph = graph.with_objects(breadcrumb.fragment.objects.values())
    graph = replace(
        graph, relationships=graph.relationships + breadcrumb.fragment.relationships
    )

    attack_patterns = []
    for obj in breadcrumb.fragment.objects.values():
        if obj.kind is ObjectKind.ATTACK_PATTERN:
            graph = add_relationship(graph, root.id, obj.id, RelType.USES)
            attack_patterns.append(obj)
        elif obj.kind is ObjectKind.TOOL:
            graph = add_relationship(graph, root.id, obj.id, RelType.TARGETS)
        elif obj.kind is ObjectKind.VULNERABILITY:
            graph = add_relationship(graph, root.id, obj.id, RelType.TARGETS)

    graph, injects = scaffold_injects(graph, attack_patterns)
    validate_graph(graph)
    return IncidentDraft(
        root=root,
        graph=graph,
        injects=tuple(injects),
        provenance=(breadcrumb.article_id,),
    )


def draft_from_query(
    store: KnowledgeDb, flt: QueryFilter, k: int
) -> list[IncidentDraft]:
    """Drafts for the k best matching breadcrumbs (maturity, then recency).
    Fewer than k matches is not an error; zero matches is."""
    if k < 1:
        raise ValueError("k must be >= 1")
    mature_floor = max(flt.min_maturity or 0, MATURITY_THRESHOLD)
    candidates = store.query(replace(flt, min_maturity=mature_floor))
    if not candidates:
        raise NoCandidates("no mature breadcrumbs match the filter")
    drafts = []
    for breadcrumb in candidates[:k]:
        try:
            name = store.get_article(breadcrumb.article_id).name_tag
        except NotFoundError:
            name = None
        drafts.append(draft_from_breadcrumb(breadcrumb, name=name))
    return drafts


def store_draft(store: KnowledgeDb, draft: IncidentDraft) -> StoredIncident:
    incident = StoredIncident(
        name_tag=draft.name_tag,
        graph=draft.graph,
        created=runtime.now(),
        provenance=draft.provenance,
    )
    store.put_incident(incident)
    return incident


def draft_from_stored(incident: StoredIncident) -> IncidentDraft:
    roots = incident.graph.objects_of_kind(ObjectKind.INTRUSION_SET)
    if len(roots) != 1:
        raise NoCandidates(f"incident {incident.name_tag} has no unique intrusion-set")
    return IncidentDraft(
        root=roots[0],
        graph=incident.graph,
        injects=injects_from_graph(incident.graph, roots[0].id),
        provenance=incident.provenance,
    )


def render_report(draft: IncidentDraft) -> tuple[str, str]:
    """Deterministic Markdown summary plus the embeddable STIX bundle JSON
    (stixview-compatible). Every object name appears exactly once, in the
    entity inventory."""
    lines = [
        "# Incident draft report",
        "",
        f"- Incident id: `{draft.root.id}`",
        f"- Provenance: {', '.join(draft.provenance)}",
        f"- Objects: {len(draft.graph.objects)}",
        f"- Relationships: {len(draft.graph.relationships)}",
        "",
        "## Entities",
        "",
        "| Kind | Name |",
        "| --- | --- |",
    ]
    for obj in sorted(draft.graph.objects.values(), key=lambda o: (o.kind.value, o.name, o.id)):
        lines.append(f"| {obj.kind.value} | {obj.name} |")
    lines += ["", "## Injects", ""]
    if draft.injects:
        lines += ["| Offset (min) | Difficulty | Mitigates |", "| --- | --- | --- |"]
        for plan in draft.injects:
            targets = ", ".join(
                f"`{ref}`" for ref in plan.carrier_objects if not ref.startswith("course-of-action--")
            )
            lines.append(f"| {plan.timing_offset} | {plan.difficulty} | {targets} |")
    else:
        lines.append("No injects scaffolded for this draft.")
    lines.append("")
    bundle_json = serialize_bundle(
        draft.graph, bundle_id=f"bundle--{draft.root.id.split('--', 1)[1]}"
    )
    return "\n".join(lines), bundle_json
