import pytest
from fastapi.testclient import TestClient

from cesoforge.service import create_app


@pytest.fixture
def client(tmp_path):
    app = create_app(tmp_path / "data")
    with TestClient(app) as test_client:
        yield test_client


DOCS = [
    {
        "text": "hacking group ran a phishing campaign with qbot against the energy sector",
        "url": "https://unit.test/a",
        "published": "2021-03-02",
        "title": "energy-phish",
    },
    {
        "text": "ransomware gang deployed ryuk ransomware attack on healthcare servers",
        "url": "https://unit.test/b",
        "published": "2021-04-02",
        "title": "health-ransom",
    },
]


def seed_incident(client, name="energy-phish"):
    client.post("/api/ingest", json={"source": "unit", "documents": DOCS})
    client.post("/api/extract", json={})
    response = client.post(
        "/api/incidents", json={"filter": {"sector": "energy"}, "k": 1, "overwrite": True}
    )
    assert response.status_code == 201, response.text
    return response.json()["incidents"][0]


class TestArticles:
    def test_empty_store_lists_empty(self, client):
        response = client.get("/api/articles")
        assert response.status_code == 200
        assert response.json() == []

    def test_ingest_then_visible(self, client):
        response = client.post("/api/ingest", json={"source": "unit", "documents": DOCS})
        assert response.status_code == 201
        assert len(response.json()["ingested"]) == 2
        listed = client.get("/api/articles").json()
        assert {a["name_tag"] for a in listed} == {"energy-phish", "health-ransom"}

    def test_extract_and_breadcrumbs(self, client):
        client.post("/api/ingest", json={"source": "unit", "documents": DOCS})
        extracted = client.post("/api/extract", json={}).json()["extracted"]
        assert len(extracted) == 2
        crumbs = client.get("/api/breadcrumbs", params={"sector": "energy"}).json()
        assert len(crumbs) == 1
        assert crumbs[0]["maturity"] >= 50


class TestIncidents:
    def test_draft_and_get(self, client):
        name = seed_incident(client)
        response = client.get(f"/api/incidents/{name}")
        assert response.status_code == 200
        body = response.json()
        assert body["bundle"]["type"] == "bundle"
        assert body["injects"]

    def test_conflict_without_overwrite(self, client):
        seed_incident(client)
        response = client.post("/api/incidents", json={"filter": {"sector": "energy"}, "k": 1})
        assert response.status_code == 409
        assert response.json()["code"] == "ConflictError"

    def test_unknown_incident_404(self, client):
        response = client.get("/api/incidents/ghost")
        assert response.status_code == 404
        body = response.json()
        assert set(body) == {"code", "message"}

    def test_enhance_404_for_bad_id(self, client):
        response = client.post("/api/incidents/ghost/enhance", json={"group": "Sandworm Team"})
        assert response.status_code == 404

    def test_enhance_flow_increases_objects(self, client):
        name = seed_incident(client)
        before = client.get(f"/api/incidents/{name}").json()
        rank = client.get("/api/apt/rank", params={"incident": name}).json()
        assert len(rank) == 3
        top = rank[0]["name"]
        response = client.post(f"/api/incidents/{name}/enhance", json={"group": top})
        assert response.status_code == 200
        after = response.json()
        assert after["objects"] > before["objects"]
        assert len(after["injects"]) >= 3

    def test_enhance_unknown_group(self, client):
        name = seed_incident(client)
        response = client.post(f"/api/incidents/{name}/enhance", json={"group": "Nobody"})
        assert response.status_code == 404

    def test_enhance_empty_selection_400(self, client):
        name = seed_incident(client)
        response = client.post(
            f"/api/incidents/{name}/enhance",
            json={"group": "Sandworm Team", "phases": ["weaponization"]},
        )
        assert response.status_code == 400
        assert response.json()["code"] == "EmptySelection"


class TestInjectPatch:
    def test_difficulty_persists(self, client, tmp_path):
        name = seed_incident(client)
        response = client.patch(f"/api/incidents/{name}/injects/0", json={"difficulty": 5})
        assert response.status_code == 200
        assert response.json()["injects"][0]["difficulty"] == 5
        # survives a fresh app over the same data dir (page reload analogue)
        again = create_app(tmp_path / "data")
        with TestClient(again) as second_client:
            body = second_client.get(f"/api/incidents/{name}").json()
            assert body["injects"][0]["difficulty"] == 5

    def test_bad_difficulty_400(self, client):
        name = seed_incident(client)
        response = client.patch(f"/api/incidents/{name}/injects/0", json={"difficulty": 9})
        assert response.status_code == 400

    def test_title_and_timing_update(self, client):
        name = seed_incident(client)
        response = client.patch(
            f"/api/incidents/{name}/injects/0",
            json={"title": "Renamed inject", "timing_offset": 45},
        )
        titles = [i["title"] for i in response.json()["injects"]]
        assert "Renamed inject" in titles

    def test_unknown_index_404(self, client):
        name = seed_incident(client)
        response = client.patch(f"/api/incidents/{name}/injects/99", json={"difficulty": 2})
        assert response.status_code == 404


class TestScenarios:
    def test_create_and_fetch_bundle_and_msel(self, client):
        seed_incident(client, "energy-phish")
        second = client.post(
            "/api/incidents", json={"filter": {"sector": "healthcare"}, "k": 1, "overwrite": True}
        ).json()["incidents"][0]
        spec = {
            "name": "Energy Test",
            "description": "two events, one incident each",
            "objectives": ["phishing awareness", "ransomware awareness"],
            "events": [
                {"name": "Event 1", "incidents": ["energy-phish"]},
                {"name": "Event 2", "incidents": [second]},
            ],
        }
        created = client.post("/api/scenarios", json=spec)
        assert created.status_code == 201, created.text
        scenario_id = created.json()["id"]

        bundle = client.get(f"/api/scenarios/{scenario_id}/bundle").json()
        from cesoforge.bundle import parse_bundle
        import json as json_module

        graph = parse_bundle(json_module.dumps(bundle))
        assert graph.objects

        msel = client.get(f"/api/scenarios/{scenario_id}/msel").json()
        assert len(msel["events"]) == 2

    def test_bad_spec_400(self, client):
        response = client.post("/api/scenarios", json={"name": "X", "events": []})
        assert response.status_code == 400

    def test_unknown_scenario_404(self, client):
        assert client.get("/api/scenarios/ghost/bundle").status_code == 404


class TestTrends:
    def test_trends_endpoint(self, client):
        client.post("/api/ingest", json={"source": "unit", "documents": DOCS})
        client.post("/api/extract", json={})
        response = client.get("/api/trends", params={"sector": "energy"})
        assert response.status_code == 200
        body = response.json()
        assert body["series"]
        assert "markdown" in body
