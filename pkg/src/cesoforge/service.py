"""Local HTTP/JSON service for the companion UI.

All state lives in the knowledge database, so the UI survives restarts.
Errors serialize as {"code": ..., "message": ...} with 400 for validation
problems, 404 for unknown ids, 409 for conflicts, and 500 otherwise.
"""

from __future__ import annotations

import json
from dataclasses import replace
from datetime import date
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import runtime
from .bundle import bundle_dict, serialize_bundle
from .corpus import DEFAULT_CONFIG, normalize_text
from .enhancer import (
    DEFAULT_SIMILARITY,
    ingest_attack,
    merge,
    profile_to_dict,
    profiles_from_store,
    rank_apts,
)
from .errors import (
    AdapterUnavailable,
    BadSpan,
    CesoForgeError,
    ConflictError,
    EmptySelection,
    IllegalTriple,
    ImmatureSource,
    InvalidProperty,
    InvariantViolation,
    MalformedBundle,
    MissingMandatoryExtension,
    NoCandidates,
    NotFoundError,
    SeriesTooShort,
    StorageFailure,
    UnknownCategory,
    UnknownEndpoint,
    UnknownFragmentId,
    UnresolvedIncident,
    ValidationError,
    ValidationFailure,
)
from .incidents import (
    TIMING_PROPERTY,
    draft_from_query,
    draft_from_stored,
    store_draft,
)
from .scenario import (
    ScenarioSpec,
    StorylinePrompt,
    apply_storyline,
    build_scenario,
    emit_msel,
    generate_storyline,
)
from .store import ArticleRecord, KnowledgeDb, QueryFilter, StoredIncident
from .tagging import TrainingTopic, tag_text, to_breadcrumb
from .trends import ForecastConfig, trend_report

_ATTACK_FIXTURE = Path(__file__).parent / "data" / "attack" / "sample_groups.json"
_UI_DIST = Path(__file__).resolve().parents[2] / "frontend" / "dist"

_BAD_REQUEST = (
    ValidationError,
    ValidationFailure,
    InvalidProperty,
    MissingMandatoryExtension,
    IllegalTriple,
    UnknownEndpoint,
    InvariantViolation,
    MalformedBundle,
    BadSpan,
    UnknownCategory,
    ImmatureSource,
    NoCandidates,
    EmptySelection,
    UnknownFragmentId,
    SeriesTooShort,
    AdapterUnavailable,
)


def _status_for(exc: CesoForgeError) -> int:
    if isinstance(exc, (NotFoundError, UnresolvedIncident)):
        return 404
    if isinstance(exc, ConflictError):
        return 409
    if isinstance(exc, _BAD_REQUEST):
        return 400
    if isinstance(exc, StorageFailure):
        return 500
    return 500


class IngestDocument(BaseModel):
    text: str
    url: str | None = None
    published: date | None = None
    title: str | None = None


class IngestRequest(BaseModel):
    source: str
    documents: list[IngestDocument]


class ExtractRequest(BaseModel):
    article_ids: list[str] | None = None


class DraftRequest(BaseModel):
    filter: dict = Field(default_factory=dict)
    k: int = 1
    overwrite: bool = False


class EnhanceRequest(BaseModel):
    group: str
    fragment: list[str] | None = None
    phases: list[str] | None = None


class InjectPatch(BaseModel):
    title: str | None = None
    description: str | None = None
    difficulty: int | None = None
    timing_offset: int | None = None


# POST /api/scenarios takes the ScenarioSpec JSON itself; storyline_seed and
# synthesizer are optional extra keys, as in the CLI spec file.


def _filter_from_dict(doc: dict) -> QueryFilter:
    date_range = None
    if doc.get("from") or doc.get("to"):
        date_range = (
            date.fromisoformat(doc["from"]) if doc.get("from") else None,
            date.fromisoformat(doc["to"]) if doc.get("to") else None,
        )
    return QueryFilter(
        tags=tuple(doc.get("tags", ())),
        sector=doc.get("sector"),
        topic=TrainingTopic(doc["topic"].upper()) if doc.get("topic") else None,
        date_range=date_range,
        name_tag=doc.get("name_tag"),
        min_maturity=int(doc["min_maturity"]) if doc.get("min_maturity") is not None else None,
    )


def _article_summary(article: ArticleRecord) -> dict:
    return {
        "id": article.id,
        "source": article.source,
        "url": article.url,
        "published": article.published.isoformat(),
        "name_tag": article.name_tag,
        "normalized_text": article.normalized_text,
    }


def _breadcrumb_summary(crumb) -> dict:
    return {
        "article_id": crumb.article_id,
        "maturity": crumb.maturity,
        "topics": [t.value for t in crumb.topics],
        "tags": [
            {
                "category": span.category.value,
                "text": span.text,
                "start": span.start,
                "end": span.end,
                "tagger": span.tagger,
            }
            for span in crumb.tags.spans
        ],
        "fragment_objects": len(crumb.fragment.objects),
    }


def _incident_summary(incident: StoredIncident) -> dict:
    draft = draft_from_stored(incident)
    return {
        "id": incident.name_tag,
        "name_tag": incident.name_tag,
        "created": incident.created.isoformat(),
        "provenance": list(incident.provenance),
        "objects": len(incident.graph.objects),
        "relationships": len(incident.graph.relationships),
        "injects": [
            {
                "title": plan.title,
                "description": plan.description,
                "timing_offset": plan.timing_offset,
                "difficulty": plan.difficulty,
                "carrier_objects": list(plan.carrier_objects),
            }
            for plan in draft.injects
        ],
        "bundle": bundle_dict(
            incident.graph,
            bundle_id="bundle--" + runtime.new_uuid(),
        ),
    }


def create_app(data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="cesoforge", version="0.1.0")
    store = KnowledgeDb(data_dir)

    @app.exception_handler(CesoForgeError)
    async def domain_error_handler(_: Request, exc: CesoForgeError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"code": type(exc).__name__, "message": str(exc)},
        )

    @app.exception_handler(ValueError)
    async def value_error_handler(_: Request, exc: ValueError):
        return JSONResponse(
            status_code=400, content={"code": "ValueError", "message": str(exc)}
        )

    # --- articles / extraction ---

    @app.get("/api/articles")
    def list_articles():
        return [_article_summary(a) for a in store.list_articles()]

    @app.post("/api/ingest", status_code=201)
    def ingest(request: IngestRequest):
        ids = []
        for index, doc in enumerate(request.documents):
            record = ArticleRecord(
                id="",
                source=request.source,
                url=doc.url,
                published=doc.published or date.today(),
                raw_text=doc.text,
                normalized_text=normalize_text(doc.text, DEFAULT_CONFIG),
                name_tag=doc.title or f"{request.source}-{index}",
            )
            ids.append(store.put_article(record))
        return {"ingested": ids}

    @app.post("/api/extract")
    def extract(request: ExtractRequest):
        if request.article_ids:
            articles = [store.get_article(aid) for aid in request.article_ids]
        else:
            articles = store.list_articles()
        out = []
        for article in articles:
            crumb = to_breadcrumb(article, tag_text(article.normalized_text, article_id=article.id))
            store.put_breadcrumb(crumb)
            out.append({"article_id": article.id, "maturity": crumb.maturity})
        return {"extracted": out}

    @app.get("/api/breadcrumbs")
    def breadcrumbs(
        sector: str | None = None,
        topic: str | None = None,
        name_tag: str | None = None,
        min_maturity: int | None = None,
        tag: str | None = None,
    ):
        flt = _filter_from_dict(
            {
                "sector": sector,
                "topic": topic,
                "name_tag": name_tag,
                "min_maturity": min_maturity,
                "tags": [tag] if tag else (),
            }
        )
        return [_breadcrumb_summary(c) for c in store.query(flt)]

    # --- incidents ---

    @app.post("/api/incidents", status_code=201)
    def create_incidents(request: DraftRequest):
        drafts = draft_from_query(store, _filter_from_dict(request.filter), request.k)
        created = []
        for draft in drafts:
            if store.has_incident(draft.name_tag) and not request.overwrite:
                raise ConflictError(
                    f"incident {draft.name_tag!r} already exists; set overwrite"
                )
            store_draft(store, draft)
            created.append(draft.name_tag)
        return {"incidents": created}

    @app.get("/api/incidents")
    def list_incidents():
        return [
            {
                "id": si.name_tag,
                "created": si.created.isoformat(),
                "objects": len(si.graph.objects),
            }
            for si in store.list_incidents()
        ]

    @app.get("/api/incidents/{incident_id}")
    def get_incident(incident_id: str):
        return _incident_summary(store.get_incident(incident_id))

    @app.post("/api/incidents/{incident_id}/enhance")
    def enhance_incident(incident_id: str, request: EnhanceRequest):
        draft = draft_from_stored(store.get_incident(incident_id))
        profiles = _profiles(store)
        wanted = request.group.casefold()
        chosen = next(
            (
                p
                for p in profiles
                if p.name.casefold() == wanted
                or wanted in (a.casefold() for a in p.aliases)
            ),
            None,
        )
        if chosen is None:
            raise NotFoundError(f"no APT profile named {request.group!r}")
        merged = merge(draft, chosen, fragment=request.fragment, phases=request.phases)
        store_draft(store, merged)
        return _incident_summary(store.get_incident(merged.name_tag))

    @app.patch("/api/incidents/{incident_id}/injects/{index}")
    def patch_inject(incident_id: str, index: int, patch: InjectPatch):
        incident = store.get_incident(incident_id)
        draft = draft_from_stored(incident)
        if not 0 <= index < len(draft.injects):
            raise NotFoundError(f"incident has no inject #{index}")
        plan = draft.injects[index]
        if patch.difficulty is not None and not 1 <= patch.difficulty <= 5:
            raise ValidationError(f"difficulty must be in [1, 5], got {patch.difficulty}")
        if patch.timing_offset is not None and patch.timing_offset < 0:
            raise ValidationError("timing_offset must be non-negative")

        coa_id = next(
            (ref for ref in plan.carrier_objects if ref.startswith("course-of-action--")),
            None,
        )
        if coa_id is None or coa_id not in incident.graph.objects:
            raise NotFoundError(f"inject #{index} has no course-of-action object")
        obj = incident.graph.objects[coa_id]
        if patch.title is not None:
            obj = replace(obj, name=patch.title)
        if patch.description is not None:
            obj = replace(obj, description=patch.description)
        if patch.difficulty is not None:
            obj = replace(obj, extensions=replace(obj.extensions, difficulty=patch.difficulty))
        if patch.timing_offset is not None:
            obj = obj.with_properties(**{TIMING_PROPERTY: patch.timing_offset})
        graph = incident.graph.replace_object(obj)
        store.put_incident(replace(incident, graph=graph))
        return _incident_summary(store.get_incident(incident_id))

    # --- APT profiles ---

    def _profiles(store: KnowledgeDb):
        profiles = profiles_from_store(store)
        if profiles:
            return profiles
        profiles = ingest_attack(_ATTACK_FIXTURE.read_text(encoding="utf-8"))
        for profile in profiles:
            store.put_apt_profile(profile_to_dict(profile))
        return profiles

    @app.get("/api/apt/rank")
    def apt_rank(incident: str):
        draft = draft_from_stored(store.get_incident(incident))
        ranked = rank_apts(draft, _profiles(store), DEFAULT_SIMILARITY)
        return [
            {
                "group_id": profile.group_id,
                "name": profile.name,
                "aliases": list(profile.aliases),
                "score": round(score, 2),
                "techniques": len(profile.techniques()),
                "objects": len(profile.graph.objects),
            }
            for profile, score in ranked
        ]

    # --- scenarios ---

    @app.post("/api/scenarios", status_code=201)
    def create_scenario(request: dict):
        doc = dict(request)
        seed_override = doc.pop("storyline_seed", None)
        synthesizer = doc.pop("synthesizer", "template")
        spec = ScenarioSpec.from_dict(doc)
        graph = build_scenario(spec, store)
        seed_text = seed_override or (
            f"{spec.name}: {spec.description or 'a simulated incident campaign'} "
            "The exercise opens as monitoring raises the first alarms, and"
        )
        storyline = generate_storyline(
            StorylinePrompt(seed_text=seed_text, synthesizer=synthesizer), graph
        )
        graph = apply_storyline(graph, storyline)
        msel = emit_msel(graph)
        scenario_id = runtime.new_uuid()
        store.put_scenario(
            scenario_id,
            {
                "id": scenario_id,
                "name": spec.name,
                "bundle": json.loads(
                    serialize_bundle(graph, bundle_id=f"bundle--{scenario_id}")
                ),
                "msel": msel.to_dict(),
                "storyline": storyline,
            },
        )
        return {"id": scenario_id, "name": spec.name}

    @app.get("/api/scenarios")
    def list_scenarios():
        return [
            {"id": s["id"], "name": s.get("name", "")} for s in store.list_scenarios()
        ]

    @app.get("/api/scenarios/{scenario_id}/bundle")
    def scenario_bundle(scenario_id: str):
        return store.get_scenario(scenario_id)["bundle"]

    @app.get("/api/scenarios/{scenario_id}/msel")
    def scenario_msel(scenario_id: str):
        return store.get_scenario(scenario_id)["msel"]

    # --- trends ---

    @app.get("/api/trends")
    def trends(sector: str | None = None, topic: str | None = None, horizon: int = 6):
        flt = _filter_from_dict({"sector": sector, "topic": topic})
        report = trend_report(store, flt, ForecastConfig(horizon=horizon))
        return {
            "series": [
                {"month": month.strftime("%Y-%m"), "count": count}
                for month, count in report.series.points
            ],
            "forecast": [
                {
                    "month": point.month.strftime("%Y-%m"),
                    "value": point.value,
                    "lo": point.lo,
                    "hi": point.hi,
                }
                for point in report.forecast_points
            ],
            "note": report.forecast_note,
            "markdown": report.markdown,
        }

    if _UI_DIST.is_dir():
        app.mount("/ui", StaticFiles(directory=_UI_DIST, html=True), name="ui")

    return app
