"""File-backed knowledge database (KDb).

Four JSONL collections (articles, breadcrumbs, incidents, apt_profiles) plus
one for assembled scenarios live under a data directory. Files are
append-only; the newest record per id wins on load, which makes puts upserts.
Writes are serialized by a lock (single writer), reads return snapshots.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from pathlib import Path
from .bundle import bundle_dict, parse_bundle
from .ceso import CesoGraph, ObjectKind
from .errors import NotFoundError, StorageFailure, ValidationError
from .tagging import TagCategory, TagSet, TagSpan, TrainingTopic

_NAMESPACE = uuid.UUID("22b5c7e4-7f3d-4ab6-9c76-8e14d52f0a31")


@dataclass(frozen=True)
class ArticleRecord:
    id: str
    source: str
    url: str | None
    published: date
    raw_text: str
    normalized_text: str
    name_tag: str


@dataclass(frozen=True)
class Breadcrumb:
    article_id: str
    tags: TagSet
    maturity: int
    topics: tuple[TrainingTopic, ...]
    fragment: CesoGraph

    def __post_init__(self):
        from .tagging import maturity as compute_maturity

        if not 0 <= self.maturity <= 185:
            raise ValidationError(f"maturity out of range: {self.maturity}")
        expected = compute_maturity(self.tags)
        if self.maturity != expected:
            raise ValidationError(
                f"stored maturity {self.maturity} does not match recomputed {expected}"
            )


@dataclass(frozen=True)
class StoredIncident:
    name_tag: str
    graph: CesoGraph
    created: datetime
    provenance: tuple[str, ...]


@dataclass(frozen=True)
class QueryFilter:
    tags: tuple[str, ...] = ()
    sector: str | None = None
    topic: TrainingTopic | None = None
    date_range: tuple[date | None, date | None] | None = None
    name_tag: str | None = None
    min_maturity: int | None = None


@dataclass
class StoreStats:
    count_by_month: dict[str, int] = field(default_factory=dict)
    top_attackers: list[tuple[str, int]] = field(default_factory=list)
    top_techniques: list[tuple[str, int]] = field(default_factory=list)
    top_malware: list[tuple[str, int]] = field(default_factory=list)
    top_vulnerabilities: list[tuple[str, int]] = field(default_factory=list)


# --- codecs -------------------------------------------------------------------

def _article_to_dict(a: ArticleRecord) -> dict:
    return {
        "id": a.id,
        "source": a.source,
        "url": a.url,
        "published": a.published.isoformat(),
        "raw_text": a.raw_text,
        "normalized_text": a.normalized_text,
        "name_tag": a.name_tag,
    }


def _article_from_dict(d: dict) -> ArticleRecord:
    return ArticleRecord(
        id=d["id"],
        source=d["source"],
        url=d.get("url"),
        published=date.fromisoformat(d["published"]),
        raw_text=d["raw_text"],
        normalized_text=d["normalized_text"],
        name_tag=d["name_tag"],
    )


def _tagset_to_dict(t: TagSet) -> dict:
    return {
        "article_id": t.article_id,
        "spans": [
            {
                "category": s.category.value,
                "text": s.text,
                "start": s.start,
                "end": s.end,
                "tagger": s.tagger,
            }
            for s in t.spans
        ],
    }


def _tagset_from_dict(d: dict) -> TagSet:
    return TagSet(
        article_id=d["article_id"],
        spans=tuple(
            TagSpan(
                category=TagCategory(s["category"]),
                text=s["text"],
                start=s["start"],
                end=s["end"],
                tagger=s["tagger"],
            )
            for s in d["spans"]
        ),
    )


def _graph_to_dict(g: CesoGraph, anchor: str) -> dict:
    # Stable bundle id derived from the record key keeps stored files
    # deterministic under reseeding.
    bundle_id = "bundle--" + str(uuid.uuid5(_NAMESPACE, anchor))
    return bundle_dict(g, bundle_id=bundle_id)


def _graph_from_dict(d: dict) -> CesoGraph:
    return parse_bundle(json.dumps(d))


def _breadcrumb_to_dict(b: Breadcrumb) -> dict:
    return {
        "article_id": b.article_id,
        "tags": _tagset_to_dict(b.tags),
        "maturity": b.maturity,
        "topics": [t.value for t in b.topics],
        "fragment": _graph_to_dict(b.fragment, "breadcrumb:" + b.article_id),
    }


def _breadcrumb_from_dict(d: dict) -> Breadcrumb:
    return Breadcrumb(
        article_id=d["article_id"],
        tags=_tagset_from_dict(d["tags"]),
        maturity=d["maturity"],
        topics=tuple(TrainingTopic(t) for t in d["topics"]),
        fragment=_graph_from_dict(d["fragment"]),
    )


def _incident_to_dict(si: StoredIncident) -> dict:
    return {
        "name_tag": si.name_tag,
        "graph": _graph_to_dict(si.graph, "incident:" + si.name_tag),
        "created": si.created.isoformat(),
        "provenance": list(si.provenance),
    }


def _incident_from_dict(d: dict) -> StoredIncident:
    return StoredIncident(
        name_tag=d["name_tag"],
        graph=_graph_from_dict(d["graph"]),
        created=datetime.fromisoformat(d["created"]),
        provenance=tuple(d["provenance"]),
    )


# --- the store ----------------------------------------------------------------

class KnowledgeDb:
    COLLECTIONS = ("articles", "breadcrumbs", "incidents", "apt_profiles", "scenarios")

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        try:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageFailure(f"cannot create data dir {data_dir}: {exc}") from exc
        self._lock = threading.Lock()
        self._records: dict[str, dict[str, dict]] = {name: {} for name in self.COLLECTIONS}
        for name in self.COLLECTIONS:
            self._load(name)

    def _path(self, collection: str) -> Path:
        return self.data_dir / f"{collection}.jsonl"

    def _load(self, collection: str) -> None:
        path = self._path(collection)
        if not path.exists():
            return
        try:
            for line in path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self._records[collection][record["id"]] = record["data"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise StorageFailure(f"cannot load {path}: {exc}") from exc

    def _put(self, collection: str, record_id: str, data: dict) -> None:
        line = json.dumps({"id": record_id, "data": data}, ensure_ascii=False)
        with self._lock:
            try:
                with self._path(collection).open("a", encoding="utf-8") as handle:
                    handle.write(line + "\n")
                    handle.flush()
            except OSError as exc:
                raise StorageFailure(f"cannot append to {collection}: {exc}") from exc
            self._records[collection][record_id] = data

    # --- articles ---

    def put_article(self, record: ArticleRecord) -> str:
        if not record.raw_text.strip():
            raise ValidationError("article raw_text must be non-empty")
        if not record.normalized_text.strip():
            raise ValidationError("article normalized_text must be non-empty")
        dedup_key = record.url or "sha256:" + hashlib.sha256(
            record.normalized_text.encode("utf-8")
        ).hexdigest()
        article_id = record.id or str(uuid.uuid5(_NAMESPACE, f"{record.source}|{dedup_key}"))
        stored = replace(record, id=article_id)
        self._put("articles", article_id, _article_to_dict(stored))
        return article_id

    def get_article(self, article_id: str) -> ArticleRecord:
        data = self._records["articles"].get(article_id)
        if data is None:
            raise NotFoundError(f"no such article: {article_id}")
        return _article_from_dict(data)

    def list_articles(self) -> list[ArticleRecord]:
        return sorted(
            (_article_from_dict(d) for d in self._records["articles"].values()),
            key=lambda a: (a.published, a.id),
        )

    # --- breadcrumbs ---

    def put_breadcrumb(self, breadcrumb: Breadcrumb) -> str:
        # One breadcrumb per article; re-extraction overwrites.
        self._put("breadcrumbs", breadcrumb.article_id, _breadcrumb_to_dict(breadcrumb))
        return breadcrumb.article_id

    def list_breadcrumbs(self) -> list[Breadcrumb]:
        return [_breadcrumb_from_dict(d) for d in self._records["breadcrumbs"].values()]

    def _published(self, breadcrumb: Breadcrumb) -> date:
        data = self._records["articles"].get(breadcrumb.article_id)
        return date.fromisoformat(data["published"]) if data else date.min

    def _matches(self, breadcrumb: Breadcrumb, flt: QueryFilter) -> bool:
        if flt.min_maturity is not None and breadcrumb.maturity < flt.min_maturity:
            return False
        if flt.sector is not None:
            sectors = {v.lower() for v in breadcrumb.tags.values(TagCategory.SECTOR)}
            if flt.sector.lower() not in sectors:
                return False
        if flt.topic is not None and flt.topic not in breadcrumb.topics:
            return False
        if flt.tags:
            texts = {s.text.lower() for s in breadcrumb.tags.spans}
            if not all(t.lower() in texts for t in flt.tags):
                return False
        article = self._records["articles"].get(breadcrumb.article_id)
        if flt.name_tag is not None:
            if article is None or article["name_tag"] != flt.name_tag:
                return False
        if flt.date_range is not None:
            published = self._published(breadcrumb)
            lo, hi = flt.date_range
            if lo is not None and published < lo:
                return False
            if hi is not None and published > hi:
                return False
        return True

    def query(self, flt: QueryFilter = QueryFilter()) -> list[Breadcrumb]:
        """All breadcrumbs matching every supplied predicate, highest maturity
        first, newest first within equal maturity."""
        hits = [b for b in self.list_breadcrumbs() if self._matches(b, flt)]
        hits.sort(key=lambda b: (-b.maturity, -self._published(b).toordinal(), b.article_id))
        return hits

    def stats(self, flt: QueryFilter = QueryFilter(), k: int = 10) -> StoreStats:
        """Frequency tables over matching breadcrumbs. Within one breadcrumb a
        tag value counts once; top lists are count-descending, ties
        lexicographic."""
        matching = [b for b in self.list_breadcrumbs() if self._matches(b, flt)]
        months: Counter[str] = Counter()
        counters = {
            "attackers": Counter(),
            "techniques": Counter(),
            "malware": Counter(),
            "vulnerabilities": Counter(),
        }
        category_map = {
            "attackers": TagCategory.ATTACKER_NAME,
            "techniques": TagCategory.ATTACK_TYPE,
            "malware": TagCategory.MALWARE_NAME,
            "vulnerabilities": TagCategory.VULNERABILITY,
        }
        for crumb in matching:
            published = self._published(crumb)
            if published != date.min:
                months[published.strftime("%Y-%m")] += 1
            for key, category in category_map.items():
                for value in crumb.tags.values(category):
                    counters[key][value.lower()] += 1

        def top(counter: Counter) -> list[tuple[str, int]]:
            return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:k]

        return StoreStats(
            count_by_month=dict(sorted(months.items())),
            top_attackers=top(counters["attackers"]),
            top_techniques=top(counters["techniques"]),
            top_malware=top(counters["malware"]),
            top_vulnerabilities=top(counters["vulnerabilities"]),
        )

    # --- incidents ---

    def put_incident(self, incident: StoredIncident) -> str:
        roots = incident.graph.objects_of_kind(ObjectKind.INTRUSION_SET)
        if len(roots) != 1:
            raise ValidationError(
                f"stored incident must contain exactly one intrusion-set, found {len(roots)}"
            )
        self._put("incidents", incident.name_tag, _incident_to_dict(incident))
        return incident.name_tag

    def get_incident(self, name_tag: str) -> StoredIncident:
        data = self._records["incidents"].get(name_tag)
        if data is None:
            raise NotFoundError(f"no such incident: {name_tag}")
        return _incident_from_dict(data)

    def has_incident(self, name_tag: str) -> bool:
        return name_tag in self._records["incidents"]

    def list_incidents(self) -> list[StoredIncident]:
        return sorted(
            (_incident_from_dict(d) for d in self._records["incidents"].values()),
            key=lambda si: si.name_tag,
        )

    # --- APT profiles ---

    def put_apt_profile(self, profile_dict: dict) -> str:
        self._put("apt_profiles", profile_dict["group_id"], profile_dict)
        return profile_dict["group_id"]

    def list_apt_profiles(self) -> list[dict]:
        return sorted(self._records["apt_profiles"].values(), key=lambda d: d["name"])

    # --- scenarios ---

    def put_scenario(self, scenario_id: str, data: dict) -> str:
        self._put("scenarios", scenario_id, data)
        return scenario_id

    def get_scenario(self, scenario_id: str) -> dict:
        data = self._records["scenarios"].get(scenario_id)
        if data is None:
            raise NotFoundError(f"no such scenario: {scenario_id}")
        return data

    def list_scenarios(self) -> list[dict]:
        return sorted(self._records["scenarios"].values(), key=lambda d: d.get("id", ""))
