import json

import pytest

from cesoforge.bundle import parse_bundle, serialize_bundle
from cesoforge.ceso import LEGAL_TRIPLES, ObjectKind, RelType, validate_graph
from cesoforge.errors import (
    AdapterUnavailable,
    NotAScenarioGraph,
    UnresolvedIncident,
    ValidationFailure,
)
from cesoforge.incidents import draft_from_breadcrumb, store_draft
from cesoforge.scenario import (
    EventSpec,
    Participant,
    ScenarioSpec,
    StorylinePrompt,
    TemplateSynthesizer,
    apply_storyline,
    build_scenario,
    emit_msel,
    export_exercise,
    generate_storyline,
    scenario_markdown,
)
from cesoforge.tagging import tag_text, to_breadcrumb

from test_tagging import article


def seeded_incidents(store, names=("incident-a", "incident-b")):
    texts = {
        names[0]: "hacking group ran a phishing campaign with qbot against the energy sector",
        names[1]: "ransomware gang deployed ryuk ransomware attack on healthcare servers",
    }
    for name in names:
        text = texts[name]
        crumb = to_breadcrumb(article(text), tag_text(text, article_id=name))
        store_draft(store, draft_from_breadcrumb(crumb, name=name))
    return names


def two_by_one_spec(names):
    return ScenarioSpec(
        name="Energy Test",
        description="Awareness exercise for an energy provider.",
        objectives=("Phishing awareness", "Ransomware awareness"),
        events=(
            EventSpec(name="Event 1", incidents=(names[0],)),
            EventSpec(name="Event 2", incidents=(names[1],)),
        ),
        participants=(Participant(name="Blue Team", recipient_group="players", location="Athens"),),
    )


class TestSpec:
    def test_from_dict_round_trip(self):
        doc = {
            "name": "X",
            "description": "d",
            "objectives": ["o1"],
            "events": [{"name": "e", "incidents": ["i"]}],
            "participants": [{"name": "p", "recipient_group": "g", "location": "l"}],
        }
        spec = ScenarioSpec.from_dict(doc)
        assert spec.events[0].incidents == ("i",)
        assert spec.include_startex_endex

    def test_rejects_empty_events(self):
        with pytest.raises(ValidationFailure):
            ScenarioSpec(name="X", description="", objectives=(), events=())

    def test_rejects_event_without_incidents(self):
        with pytest.raises(ValidationFailure):
            ScenarioSpec(
                name="X", description="", objectives=(),
                events=(EventSpec(name="e", incidents=()),),
            )

    def test_rejects_blank_name(self):
        with pytest.raises(ValidationFailure):
            ScenarioSpec(
                name=" ", description="", objectives=(),
                events=(EventSpec(name="e", incidents=("i",)),),
            )


class TestBuildScenario:
    def test_two_by_one_shape(self, store, seeded):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        assert len(graph.objects_of_kind(ObjectKind.GROUPING)) == 1
        assert len(graph.objects_of_kind(ObjectKind.CAMPAIGN)) == 2
        assert len(graph.objects_of_kind(ObjectKind.INTRUSION_SET)) == 2
        assert len(graph.objects_of_kind(ObjectKind.NOTE)) == 2
        assert len(graph.objects_of_kind(ObjectKind.REPORT)) == 1
        markers = [
            o for o in graph.objects_of_kind(ObjectKind.COURSE_OF_ACTION)
            if o.name in ("STARTEX", "ENDEX")
        ]
        assert len(markers) == 2
        validate_graph(graph)

    def test_edges_follow_matrix(self, store, seeded):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        for rel in graph.relationships:
            triple = (
                graph.objects[rel.source].kind,
                graph.objects[rel.target].kind,
                rel.rel_type,
            )
            assert triple in LEGAL_TRIPLES or rel.nonstandard, triple

    def test_operational_layer(self, store, seeded):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        platform = graph.objects_of_kind(ObjectKind.INFRASTRUCTURE)[0]
        blue = next(o for o in graph.objects_of_kind(ObjectKind.IDENTITY) if o.name == "Blue Team")
        assert blue.extensions.recipient_group == "players"
        assert graph.has_edge(blue.id, platform.id, RelType.USES)
        location = next(o for o in graph.objects_of_kind(ObjectKind.LOCATION) if o.name == "Athens")
        assert graph.has_edge(blue.id, location.id, RelType.LOCATED_AT)

    def test_unresolved_incident(self, store, seeded):
        spec = two_by_one_spec(("ghost", "ghost2"))
        with pytest.raises(UnresolvedIncident):
            build_scenario(spec, store)

    def test_startex_endex_disabled(self, store, seeded):
        names = seeded_incidents(store)
        spec_dict = {
            "name": "No markers",
            "description": "d",
            "objectives": [],
            "events": [{"name": "e", "incidents": [names[0]]}],
            "include_startex_endex": False,
        }
        graph = build_scenario(ScenarioSpec.from_dict(spec_dict), store)
        names_seen = {o.name for o in graph.objects_of_kind(ObjectKind.COURSE_OF_ACTION)}
        assert "STARTEX" not in names_seen and "ENDEX" not in names_seen

    def test_endex_timing_after_last_inject(self, store, seeded):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        coas = graph.objects_of_kind(ObjectKind.COURSE_OF_ACTION)
        endex = next(o for o in coas if o.name == "ENDEX")
        inject_offsets = [
            o.properties.get("x_timing_offset", 0)
            for o in coas
            if o.name not in ("STARTEX", "ENDEX")
        ]
        assert endex.properties["x_timing_offset"] == max(inject_offsets) + 30

    def test_same_incident_twice_gets_fresh_ids(self, store, seeded):
        names = seeded_incidents(store)
        spec = ScenarioSpec(
            name="Twice",
            description="d",
            objectives=(),
            events=(
                EventSpec(name="e1", incidents=(names[0],)),
                EventSpec(name="e2", incidents=(names[0],)),
            ),
        )
        graph = build_scenario(spec, store)
        assert len(graph.objects_of_kind(ObjectKind.INTRUSION_SET)) == 2
        validate_graph(graph)


class TestMsel:
    def test_two_by_one_tree(self, store, seeded):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        msel = emit_msel(graph)
        doc = msel.to_dict()
        assert doc["name"] == "Energy Test"
        assert len(doc["events"]) == 2
        for event in doc["events"]:
            assert len(event["incidents"]) == 1
            for incident in event["incidents"]:
                for inject in incident["injects"]:
                    assert set(inject) == {"name", "description", "timing"}

    def test_event_order_is_insertion_order(self, store, seeded):
        names = seeded_incidents(store)
        msel = emit_msel(build_scenario(two_by_one_spec(names), store))
        assert [e.name for e in msel.root.children] == ["Event 1", "Event 2"]

    def test_injects_sorted_by_timing(self, store, seeded):
        names = seeded_incidents(store)
        msel = emit_msel(build_scenario(two_by_one_spec(names), store))
        for event in msel.root.children:
            for incident in event.children:
                timings = [i.timing for i in incident.children]
                assert timings == sorted(timings)

    def test_not_a_scenario_graph(self, seeded):
        from cesoforge.ceso import CesoGraph, new_object

        graph = CesoGraph().with_object(new_object(ObjectKind.CAMPAIGN, "only event"))
        with pytest.raises(NotAScenarioGraph):
            emit_msel(graph)

    def test_incident_without_injects_still_valid(self, store, seeded):
        text = "a hacking group was seen"
        crumb = to_breadcrumb(article(text), tag_text(text, article_id="plain"))
        store_draft(store, draft_from_breadcrumb(crumb, name="plain", allow_immature=True))
        spec = ScenarioSpec(
            name="Sparse", description="d", objectives=(),
            events=(EventSpec(name="e", incidents=("plain",)),),
        )
        msel = emit_msel(build_scenario(spec, store))
        incident = msel.root.children[0].children[0]
        assert incident.children == ()


class TestStoryline:
    def test_template_prefix_property(self, store, seeded):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        seed_text = "State sponsored Threat Actor X attacked Y using PHISHING to"
        out = generate_storyline(StorylinePrompt(seed_text=seed_text), graph)
        assert out.startswith(seed_text)
        assert len(out) > len(seed_text)

    def test_template_deterministic(self, store, seeded):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        prompt = StorylinePrompt(seed_text="The exercise begins when")
        assert generate_storyline(prompt, graph) == generate_storyline(prompt, graph)

    def test_empty_seed_rejected(self):
        with pytest.raises(ValidationFailure):
            StorylinePrompt(seed_text="   ")

    def test_unregistered_adapter(self):
        with pytest.raises(AdapterUnavailable):
            generate_storyline(StorylinePrompt(seed_text="x", synthesizer="gpt-17"))

    def test_external_adapter_missing_command(self):
        from cesoforge.scenario import ExternalCommandSynthesizer, register_synthesizer

        register_synthesizer("external", ExternalCommandSynthesizer(["definitely-not-a-command-xyz"]))
        with pytest.raises(AdapterUnavailable):
            generate_storyline(StorylinePrompt(seed_text="x", synthesizer="external"))

    def test_external_adapter_cat(self):
        from cesoforge.scenario import ExternalCommandSynthesizer, register_synthesizer

        register_synthesizer("external", ExternalCommandSynthesizer(["cat"]))
        seed_text = "Exactly this text."
        out = generate_storyline(StorylinePrompt(seed_text=seed_text, synthesizer="external"))
        assert out.startswith(seed_text)

    def test_truncation_at_sentence_boundary(self):
        seed_text = "Short seed."
        out = TemplateSynthesizer().generate(
            StorylinePrompt(seed_text=seed_text, max_length=20), None
        )
        assert out.startswith(seed_text)
        assert out.endswith((".", "!", "?"))
        assert len(out.split()) <= 25  # truncated near the limit at a boundary


class TestExport:
    def test_three_artifacts_round_trip(self, store, seeded, tmp_path):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        storyline = generate_storyline(
            StorylinePrompt(seed_text="The first alert fires early, and"), graph
        )
        graph = apply_storyline(graph, storyline)
        msel = emit_msel(graph)
        paths = export_exercise(graph, msel, storyline, tmp_path / "out")
        assert set(paths) == {"bundle", "markdown", "msel"}
        restored = parse_bundle(paths["bundle"].read_text(encoding="utf-8"))
        assert restored == graph

    def test_markdown_section_order(self, store, seeded, tmp_path):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        msel = emit_msel(graph)
        markdown = scenario_markdown(graph, msel, "storyline text")
        sections = [line for line in markdown.splitlines() if line.startswith("## ")]
        assert sections == [
            "## Section 1: Storyline (SoW)",
            "## Section 2: Scenario & MSEL",
            "## Section 3: Scenario Analysis",
            "## Section 4: Resources Used",
        ]

    def test_msel_json_depth_four(self, store, seeded, tmp_path):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        msel = emit_msel(graph)
        export_exercise(graph, msel, "s", tmp_path / "out")
        doc = json.loads((tmp_path / "out" / "msel.json").read_text(encoding="utf-8"))

        def depth(node):
            if isinstance(node, dict):
                for key in ("events", "incidents", "injects"):
                    if key in node:
                        children = node[key]
                        return 1 + (max((depth(c) for c in children), default=0))
                return 1
            return 0

        assert depth(doc) == 4

    def test_apply_storyline_sets_report_description(self, store, seeded):
        names = seeded_incidents(store)
        graph = build_scenario(two_by_one_spec(names), store)
        updated = apply_storyline(graph, "the final storyline")
        report = updated.objects_of_kind(ObjectKind.REPORT)[0]
        assert report.description == "the final storyline"
