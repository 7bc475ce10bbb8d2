"""Exercise assembly: scenario graph construction, MSEL tree emission,
storyline synthesis, and artifact export.

A scenario graph groups campaigns (events), intrusion-sets (incidents),
objectives (notes), a state-of-the-world report, optional STARTEX/ENDEX
markers, and the operational layer (exercise platform infrastructure plus
participant identities/locations).
"""

from __future__ import annotations

import json
import re
import shutil
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

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
from .errors import (
    AdapterUnavailable,
    IoFailure,
    NotAScenarioGraph,
    UnresolvedIncident,
    ValidationFailure,
)
from .incidents import TIMING_PROPERTY, injects_from_graph
from .store import KnowledgeDb
from . import runtime

STARTEX_NAME = "STARTEX"
ENDEX_NAME = "ENDEX"
ENDEX_GAP_MINUTES = 30


@dataclass(frozen=True)
class EventSpec:
    name: str
    incidents: tuple[str, ...]  # stored-incident name tags


@dataclass(frozen=True)
class Participant:
    name: str
    recipient_group: str | None = None
    location: str | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    description: str
    objectives: tuple[str, ...]
    events: tuple[EventSpec, ...]
    participants: tuple[Participant, ...] = ()
    include_startex_endex: bool = True

    def __post_init__(self):
        if not self.name.strip():
            raise ValidationFailure("scenario name must be non-empty")
        if not self.events:
            raise ValidationFailure("a scenario needs at least one event")
        for event in self.events:
            if not event.incidents:
                raise ValidationFailure(f"event {event.name!r} has no incident refs")

    @staticmethod
    def from_dict(doc: dict) -> "ScenarioSpec":
        try:
            events = tuple(
                EventSpec(name=e["name"], incidents=tuple(e["incidents"]))
                for e in doc["events"]
            )
            participants = tuple(
                Participant(
                    name=p["name"],
                    recipient_group=p.get("recipient_group"),
                    location=p.get("location"),
                )
                for p in doc.get("participants", [])
            )
            return ScenarioSpec(
                name=doc["name"],
                description=doc.get("description", ""),
                objectives=tuple(doc.get("objectives", [])),
                events=events,
                participants=participants,
                include_startex_endex=doc.get("include_startex_endex", True),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationFailure(f"bad scenario spec: {exc}") from exc


@dataclass(frozen=True)
class MselNode:
    name: str
    description: str
    timing: int | None = None
    children: tuple["MselNode", ...] = ()


@dataclass(frozen=True)
class MselTree:
    root: MselNode

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.root.name,
            "description": self.root.description,
            "events": [
                {
                    "name": event.name,
                    "description": event.description,
                    "incidents": [
                        {
                            "name": incident.name,
                            "description": incident.description,
                            "injects": [
                                {
                                    "name": inject.name,
                                    "description": inject.description,
                                    "timing": inject.timing,
                                }
                                for inject in incident.children
                            ],
                        }
                        for incident in event.children
                    ],
                }
                for event in self.root.children
            ],
        }


@dataclass(frozen=True)
class StorylinePrompt:
    seed_text: str
    max_length: int = 400  # words
    synthesizer: str = "template"

    def __post_init__(self):
        if not self.seed_text.strip():
            raise ValidationFailure("storyline seed text must be non-empty")


def _clone_graph_fresh_ids(source: CesoGraph) -> tuple[CesoGraph, dict[str, str]]:
    """Copy a stored incident graph with fresh ids so one incident can join
    several scenarios (or the same scenario twice) without id collisions."""
    id_map: dict[str, str] = {}
    graph = CesoGraph()
    for obj in source.objects.values():
        clone = replace(obj, id=runtime.new_id(obj.kind.value))
        id_map[obj.id] = clone.id
        graph = graph.with_object(clone)
    relationships = tuple(
        replace(
            rel,
            id=runtime.new_id("relationship"),
            source=id_map[rel.source],
            target=id_map[rel.target],
        )
        for rel in source.relationships
        if rel.source in id_map and rel.target in id_map
    )
    return replace(graph, relationships=relationships), id_map


def build_scenario(spec: ScenarioSpec, store: KnowledgeDb) -> CesoGraph:
    """Assemble the full exercise graph from a spec and stored incidents."""
    scenario_text = spec.description.strip() or f"Exercise scenario: {spec.name}"
    grouping = new_object(
        ObjectKind.GROUPING,
        spec.name,
        {"scenario": scenario_text, "context": "exercise"},
        description=scenario_text,
    )
    graph = CesoGraph().with_object(grouping)

    for index, objective in enumerate(spec.objectives, start=1):
        note = new_object(
            ObjectKind.NOTE,
            f"Objective {index}",
            {"content": objective},
            description=objective,
        )
        graph = graph.with_object(note)
        graph = add_relationship(graph, note.id, grouping.id, RelType.RELATED_TO)

    sow = new_object(
        ObjectKind.REPORT,
        f"{spec.name} - State of the World",
        {"report_types": ["exercise-sow"]},
        description="State of the World storyline pending generation.",
    )
    graph = graph.with_object(sow)
    graph = add_relationship(graph, sow.id, grouping.id, RelType.RELATED_TO)

    max_inject_offset = 0
    for event in spec.events:
        campaign = new_object(ObjectKind.CAMPAIGN, event.name)
        graph = graph.with_object(campaign)
        graph = add_relationship(graph, campaign.id, grouping.id, RelType.RELATED_TO)
        for incident_ref in event.incidents:
            if not store.has_incident(incident_ref):
                raise UnresolvedIncident(f"no stored incident named {incident_ref!r}")
            incident = store.get_incident(incident_ref)
            subgraph, id_map = _clone_graph_fresh_ids(incident.graph)
            graph = graph.with_objects(subgraph.objects.values())
            graph = replace(
                graph, relationships=graph.relationships + subgraph.relationships
            )
            roots = [
                id_map[o.id]
                for o in incident.graph.objects_of_kind(ObjectKind.INTRUSION_SET)
            ]
            for root_id in roots:
                graph = add_relationship(graph, root_id, campaign.id, RelType.RELATED_TO)
                for plan in injects_from_graph(graph, root_id):
                    max_inject_offset = max(max_inject_offset, plan.timing_offset)
            # Inject course-of-action objects also relate to the exercise grouping.
            for old_id, new_id_ in id_map.items():
                if incident.graph.objects[old_id].kind is ObjectKind.COURSE_OF_ACTION:
                    graph = add_relationship(
                        graph, new_id_, grouping.id, RelType.RELATED_TO
                    )

    if spec.include_startex_endex:
        startex = new_object(
            ObjectKind.COURSE_OF_ACTION,
            STARTEX_NAME,
            {"difficulty": 1, TIMING_PROPERTY: 0},
            description="Exercise start marker.",
        )
        endex = new_object(
            ObjectKind.COURSE_OF_ACTION,
            ENDEX_NAME,
            {"difficulty": 1, TIMING_PROPERTY: max_inject_offset + ENDEX_GAP_MINUTES},
            description="Exercise end marker.",
        )
        graph = graph.with_objects([startex, endex])
        graph = add_relationship(graph, startex.id, grouping.id, RelType.RELATED_TO)
        graph = add_relationship(graph, endex.id, grouping.id, RelType.RELATED_TO)

    platform = new_object(
        ObjectKind.INFRASTRUCTURE,
        f"{spec.name} exercise platform",
        {"infrastructure_types": ["exercise-platform"]},
    )
    graph = graph.with_object(platform)
    for participant in spec.participants:
        props: dict[str, Any] = {"identity_class": "group"}
        if participant.recipient_group:
            props["recipient_group"] = participant.recipient_group
        identity = new_object(ObjectKind.IDENTITY, participant.name, props)
        graph = graph.with_object(identity)
        graph = add_relationship(graph, identity.id, platform.id, RelType.USES)
        if participant.location:
            location = new_object(ObjectKind.LOCATION, participant.location)
            graph = graph.with_object(location)
            graph = add_relationship(graph, identity.id, location.id, RelType.LOCATED_AT)

    # Grouping membership refs keep third-party STIX viewers happy.
    member_refs = sorted(oid for oid in graph.objects if oid != grouping.id)
    graph = graph.replace_object(
        graph.objects[grouping.id].with_properties(object_refs=member_refs)
    )

    try:
        validate_graph(graph)
    except Exception as exc:
        raise ValidationFailure(f"assembled scenario failed validation: {exc}") from exc
    return graph


def emit_msel(graph: CesoGraph) -> MselTree:
    """Project a scenario graph onto the four-level exercise tree
    (scenario / events / incidents / injects)."""
    groupings = graph.objects_of_kind(ObjectKind.GROUPING)
    if len(groupings) != 1:
        raise NotAScenarioGraph("expected exactly one grouping root")
    grouping = groupings[0]

    event_nodes = []
    for rel in graph.relationships:
        if rel.target != grouping.id or rel.rel_type is not RelType.RELATED_TO:
            continue
        campaign = graph.objects.get(rel.source)
        if campaign is None or campaign.kind is not ObjectKind.CAMPAIGN:
            continue
        incident_nodes = []
        for inner in graph.relationships:
            if inner.target != campaign.id or inner.rel_type is not RelType.RELATED_TO:
                continue
            intrusion = graph.objects.get(inner.source)
            if intrusion is None or intrusion.kind is not ObjectKind.INTRUSION_SET:
                continue
            inject_nodes = tuple(
                MselNode(name=plan.title, description=plan.description, timing=plan.timing_offset)
                for plan in injects_from_graph(graph, intrusion.id)
            )
            incident_nodes.append(
                MselNode(
                    name=intrusion.name,
                    description=intrusion.description,
                    children=inject_nodes,
                )
            )
        event_nodes.append(
            MselNode(
                name=campaign.name,
                description=campaign.description,
                children=tuple(incident_nodes),
            )
        )

    root = MselNode(
        name=grouping.name,
        description=grouping.extensions.scenario or grouping.description,
        children=tuple(event_nodes),
    )
    return MselTree(root=root)


# --- storyline synthesis ----------------------------------------------------------


def _slots(graph: CesoGraph | None) -> dict[str, str]:
    slots = {
        "actor": "an unidentified threat actor",
        "sector": "targeted",
        "techniques": "multiple attack techniques",
        "malware": "custom tooling",
    }
    if graph is None:
        return slots
    actors = sorted(o.name for o in graph.objects_of_kind(ObjectKind.THREAT_ACTOR))
    if actors:
        slots["actor"] = actors[0]
    else:
        intrusions = sorted(o.name for o in graph.objects_of_kind(ObjectKind.INTRUSION_SET))
        if intrusions:
            slots["actor"] = intrusions[0]
    sectors = sorted(
        sector
        for o in graph.objects_of_kind(ObjectKind.IDENTITY)
        for sector in o.properties.get("sectors", [])
    )
    if sectors:
        slots["sector"] = sectors[0]
    techniques = sorted(o.name for o in graph.objects_of_kind(ObjectKind.ATTACK_PATTERN))
    if techniques:
        slots["techniques"] = ", ".join(dict.fromkeys(techniques))
    malware = sorted(o.name for o in graph.objects_of_kind(ObjectKind.MALWARE))
    if malware:
        slots["malware"] = ", ".join(dict.fromkeys(malware))
    return slots


class TemplateSynthesizer:
    """Deterministic slot-filling continuation of the seed text."""

    name = "template"

    def generate(self, prompt: StorylinePrompt, graph: CesoGraph | None = None) -> str:
        slots = _slots(graph)
        continuation = (
            f"compromise operations across the {slots['sector']} sector. "
            f"Analysts attribute the activity to {slots['actor']}, observed using "
            f"{slots['techniques']} and deploying {slots['malware']}. "
            "Initial access was followed by staged escalation against critical "
            "services, and incident responders were engaged once monitoring "
            "flagged anomalous activity. Regulators and sector partners were "
            "notified while containment and recovery actions proceeded "
            "according to the response plan."
        )
        seed = prompt.seed_text
        joiner = "" if seed.endswith((" ", "\n")) else " "
        return _truncate_sentences(seed + joiner + continuation, prompt.max_length, seed)


class ExternalCommandSynthesizer:
    """Adapter for any command that reads the seed on stdin and writes the
    storyline to stdout (GPT-style generators plug in here)."""

    name = "external"

    def __init__(self, command: list[str]):
        if not command:
            raise AdapterUnavailable("external synthesizer needs a command")
        self.command = command

    def generate(self, prompt: StorylinePrompt, graph: CesoGraph | None = None) -> str:
        if shutil.which(self.command[0]) is None:
            raise AdapterUnavailable(f"command not found: {self.command[0]}")
        try:
            completed = subprocess.run(
                self.command,
                input=prompt.seed_text,
                capture_output=True,
                text=True,
                check=True,
                timeout=120,
            )
        except (subprocess.SubprocessError, OSError) as exc:
            raise AdapterUnavailable(f"external synthesizer failed: {exc}") from exc
        output = completed.stdout
        if not output.startswith(prompt.seed_text):
            # Contract: generators extend the seed verbatim.
            output = prompt.seed_text + ("" if prompt.seed_text.endswith(" ") else " ") + output
        return _truncate_sentences(output, prompt.max_length, prompt.seed_text)


def _truncate_sentences(text: str, max_words: int, protected_prefix: str) -> str:
    words = text.split()
    if len(words) <= max_words:
        return text
    prefix_len = len(protected_prefix)
    cut = len(" ".join(words[:max_words]))
    boundary = max(
        (m.end() for m in re.finditer(r"[.!?]", text[:cut]) if m.end() > prefix_len),
        default=max(cut, prefix_len),
    )
    return text[:boundary].rstrip()


_SYNTHESIZERS: dict[str, Any] = {"template": TemplateSynthesizer()}


def register_synthesizer(name: str, synthesizer: Any) -> None:
    _SYNTHESIZERS[name] = synthesizer


def generate_storyline(prompt: StorylinePrompt, graph: CesoGraph | None = None) -> str:
    """Synthesize a storyline; the seed text is always a verbatim prefix of
    the output."""
    adapter = _SYNTHESIZERS.get(prompt.synthesizer)
    if adapter is None:
        raise AdapterUnavailable(f"no synthesizer registered as {prompt.synthesizer!r}")
    return adapter.generate(prompt, graph)


def apply_storyline(graph: CesoGraph, storyline: str) -> CesoGraph:
    """Store the generated storyline in the SoW report object's description."""
    for obj in graph.objects_of_kind(ObjectKind.REPORT):
        return graph.replace_object(replace(obj, description=storyline))
    return graph


# --- export ------------------------------------------------------------------------


def scenario_markdown(graph: CesoGraph, msel: MselTree, storyline: str) -> str:
    """Scenario document following the four-section exercise template."""
    kinds: dict[str, int] = {}
    for obj in graph.objects.values():
        kinds[obj.kind.value] = kinds.get(obj.kind.value, 0) + 1

    lines = [f"# {msel.root.name}", ""]
    lines += ["## Section 1: Storyline (SoW)", "", storyline, ""]

    lines += ["## Section 2: Scenario & MSEL", ""]
    lines.append(f"{msel.root.description}")
    lines.append("")
    for e_index, event in enumerate(msel.root.children, start=1):
        lines.append(f"### Event {e_index}: {event.name}")
        lines.append("")
        for i_index, incident in enumerate(event.children, start=1):
            lines.append(f"- Incident {e_index}.{i_index}: {incident.name}")
            for inject in incident.children:
                lines.append(
                    f"  - [{inject.timing:>4} min] {inject.name}: {inject.description}"
                )
        lines.append("")

    lines += ["## Section 3: Scenario Analysis", ""]
    lines += ["| Object kind | Count |", "| --- | --- |"]
    lines += [f"| {kind} | {count} |" for kind, count in sorted(kinds.items())]
    lines.append("")
    objectives = [
        o.description for o in graph.objects_of_kind(ObjectKind.NOTE)
    ]
    if objectives:
        lines.append("Objectives:")
        lines += [f"- {objective}" for objective in objectives]
        lines.append("")

    lines += ["## Section 4: Resources Used", ""]
    provenance = sorted(
        {
            str(o.properties.get("x_provenance"))
            for o in graph.objects.values()
            if o.properties.get("x_provenance")
        }
    )
    if provenance:
        lines += [f"- {item}" for item in provenance]
    else:
        lines.append("- knowledge database fixtures")
    lines.append("")
    return "\n".join(lines)


def export_exercise(
    graph: CesoGraph,
    msel: MselTree,
    storyline: str,
    out_dir: str | Path,
    *,
    bundle_id: str | None = None,
) -> dict[str, Path]:
    """Write bundle JSON, scenario Markdown, and MSEL JSON side by side."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        bundle_path = out / "bundle.json"
        bundle_path.write_text(
            serialize_bundle(graph, bundle_id=bundle_id), encoding="utf-8"
        )
        markdown_path = out / "scenario.md"
        markdown_path.write_text(
            scenario_markdown(graph, msel, storyline), encoding="utf-8"
        )
        msel_path = out / "msel.json"
        msel_path.write_text(
            json.dumps(msel.to_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoFailure(f"cannot write exercise artifacts: {exc}") from exc
    return {"bundle": bundle_path, "markdown": markdown_path, "msel": msel_path}
