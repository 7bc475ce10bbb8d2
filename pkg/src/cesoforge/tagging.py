"""Entity tagging for incident texts.

Tags come from three interchangeable sources: category gazetteers (versioned
phrase lists under data/gazetteers), regex rules (the CVE pattern), and
externally produced span annotations. On top of tag sets sit the 0-185
maturity score that gates incident generation, training-topic assignment,
and conversion of an article into an ontology fragment (a breadcrumb).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator, Protocol

from . import ceso
from .ceso import CesoGraph, ObjectKind, RelType, add_relationship, new_object
from .errors import BadSpan, UnknownCategory

if TYPE_CHECKING:
    from .store import ArticleRecord, Breadcrumb

_DATA_DIR = Path(__file__).parent / "data"


class TagCategory(str, Enum):
    ATTACKER_TYPE = "ATTACKER_TYPE"
    ATTACKER_NAME = "ATTACKER_NAME"
    ATTACKER_ORIGIN = "ATTACKER_ORIGIN"
    MALWARE_TYPE = "MALWARE_TYPE"
    MALWARE_NAME = "MALWARE_NAME"
    ATTACK_TYPE = "ATTACK_TYPE"
    VULNERABILITY = "VULNERABILITY"
    SECTOR = "SECTOR"
    ASSETS = "ASSETS"
    TECHNOLOGY = "TECHNOLOGY"


# Category -> annotation group; spans outside every category are "Other".
CATEGORY_GROUPS: dict[TagCategory, str] = {
    TagCategory.ATTACKER_TYPE: "Attacker",
    TagCategory.ATTACKER_NAME: "Attacker",
    TagCategory.ATTACKER_ORIGIN: "Attacker",
    TagCategory.MALWARE_TYPE: "Attack",
    TagCategory.MALWARE_NAME: "Attack",
    TagCategory.ATTACK_TYPE: "Attack",
    TagCategory.VULNERABILITY: "Attack",
    TagCategory.SECTOR: "Victim",
    TagCategory.ASSETS: "Victim",
    TagCategory.TECHNOLOGY: "Victim",
}

OTHER_GROUP = "Other"
ANNOTATION_GROUPS = ("Attacker", "Attack", "Victim", OTHER_GROUP)


@dataclass(frozen=True)
class TagSpan:
    category: TagCategory
    text: str
    start: int
    end: int
    tagger: str  # gazetteer | regex | external

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise BadSpan(f"bad offsets [{self.start}, {self.end})")


@dataclass(frozen=True)
class TagSet:
    article_id: str
    spans: tuple[TagSpan, ...]

    @staticmethod
    def build(article_id: str, spans: Iterable[TagSpan]) -> "TagSet":
        """Sort by start and deduplicate overlapping same-category spans,
        keeping the longest."""
        kept: list[TagSpan] = []
        ordered = sorted(spans, key=lambda s: (-(s.end - s.start), s.start, s.category.value))
        for span in ordered:
            clash = any(
                k.category is span.category and span.start < k.end and k.start < span.end
                for k in kept
            )
            if not clash:
                kept.append(span)
        kept.sort(key=lambda s: (s.start, s.end, s.category.value))
        return TagSet(article_id=article_id, spans=tuple(kept))

    def present_categories(self) -> set[TagCategory]:
        return {s.category for s in self.spans}

    def values(self, category: TagCategory) -> list[str]:
        """Distinct span texts for a category, in first-seen order."""
        seen: list[str] = []
        for span in self.spans:
            if span.category is category and span.text not in seen:
                seen.append(span.text)
        return seen


class Tagger(Protocol):
    def tag(self, text: str) -> list[TagSpan]: ...


@dataclass(frozen=True)
class Gazetteer:
    category: TagCategory
    entries: frozenset[str]

    def __post_init__(self):
        for entry in self.entries:
            if not entry or entry != entry.lower():
                raise ValueError(f"gazetteer entries must be lowercase, non-empty: {entry!r}")

    @staticmethod
    def from_file(path: Path) -> "Gazetteer":
        doc = json.loads(path.read_text(encoding="utf-8"))
        return Gazetteer(
            category=TagCategory(doc["category"]),
            entries=frozenset(doc["entries"]),
        )


class GazetteerTagger:
    """Longest-phrase-first, case-insensitive, word-boundary anchored matcher."""

    def __init__(self, gazetteer: Gazetteer):
        self.gazetteer = gazetteer
        phrases = sorted(gazetteer.entries, key=len, reverse=True)
        joined = "|".join(re.escape(p).replace(r"\ ", r"\s+") for p in phrases)
        self._pattern = re.compile(rf"\b(?:{joined})\b", re.IGNORECASE)

    def tag(self, text: str) -> list[TagSpan]:
        if not self.gazetteer.entries:
            return []
        return [
            TagSpan(
                category=self.gazetteer.category,
                text=m.group(),
                start=m.start(),
                end=m.end(),
                tagger="gazetteer",
            )
            for m in self._pattern.finditer(text)
        ]


class RegexTagger:
    def __init__(self, category: TagCategory, pattern: str):
        self.category = category
        self._pattern = re.compile(pattern, re.IGNORECASE)

    def tag(self, text: str) -> list[TagSpan]:
        return [
            TagSpan(
                category=self.category,
                text=m.group(),
                start=m.start(),
                end=m.end(),
                tagger="regex",
            )
            for m in self._pattern.finditer(text)
        ]


CVE_TAGGER = RegexTagger(TagCategory.VULNERABILITY, r"\bcve-\d{4}-\d{4,}\b")


def load_default_gazetteers() -> list[Gazetteer]:
    gazetteers = []
    for path in sorted((_DATA_DIR / "gazetteers").glob("*.json")):
        gazetteers.append(Gazetteer.from_file(path))
    return gazetteers


_default_taggers: list[Tagger] | None = None


def default_taggers() -> list[Tagger]:
    """Gazetteer taggers for all ten categories plus the CVE regex.

    ATTACKER_ORIGIN deliberately has no open-ended location recognizer: the
    origin gazetteer is its only source.
    """
    global _default_taggers
    if _default_taggers is None:
        _default_taggers = [GazetteerTagger(g) for g in load_default_gazetteers()]
        _default_taggers.append(CVE_TAGGER)
    return _default_taggers


def tag_text(text: str, taggers: list[Tagger] | None = None, article_id: str = "") -> TagSet:
    """Run every tagger over normalized text and merge the results."""
    spans: list[TagSpan] = []
    for tagger in taggers if taggers is not None else default_taggers():
        spans.extend(tagger.tag(text))
    return TagSet.build(article_id, spans)


# --- external annotations ----------------------------------------------------

def iter_annotations(jsonl: str) -> Iterator[tuple[str, TagSet]]:
    """Yield (text, TagSet) pairs from annotation JSONL:
    {"text": ..., "spans": [{"start":..,"end":..,"label":..}]}."""
    for lineno, line in enumerate(jsonl.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            text = doc["text"]
            raw_spans = doc.get("spans", [])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise BadSpan(f"line {lineno}: not an annotation record ({exc})") from exc
        spans = []
        for raw in raw_spans:
            label = raw.get("label")
            try:
                category = TagCategory(label)
            except ValueError:
                raise UnknownCategory(f"line {lineno}: unknown category {label!r}") from None
            start, end = raw.get("start"), raw.get("end")
            if (
                not isinstance(start, int)
                or not isinstance(end, int)
                or start < 0
                or end > len(text)
                or start >= end
            ):
                raise BadSpan(f"line {lineno}: span [{start}, {end}) out of range")
            spans.append(
                TagSpan(category=category, text=text[start:end], start=start, end=end, tagger="external")
            )
        yield text, TagSet.build("", spans)


def load_external_annotations(jsonl: str) -> list[TagSet]:
    return [tags for _, tags in iter_annotations(jsonl)]


# --- maturity scoring ---------------------------------------------------------

def _malware_present(categories: set[TagCategory]) -> bool:
    # The scoring procedure tests bare "malware"; we read that as either the
    # malware-name or the malware-type tag being present.
    return TagCategory.MALWARE_TYPE in categories or TagCategory.MALWARE_NAME in categories


def maturity(tags: TagSet) -> int:
    """Relevance score of a tagged text, from 0 to 185.

    Texts naming neither an attacker type nor an attack type score 0; the
    remainder start at 50, pay a 10-point penalty for each of
    vulnerability/malware missing (15 bonus when present), and climb further
    only when attack type and attacker type co-occur.
    """
    cats = tags.present_categories()
    score = 0
    if TagCategory.ATTACKER_TYPE in cats or TagCategory.ATTACK_TYPE in cats:
        score = 50
        score += 15 if TagCategory.VULNERABILITY in cats else -10
        score += 15 if _malware_present(cats) else -10
        if TagCategory.ATTACK_TYPE in cats:
            score += 15
            if TagCategory.ATTACKER_TYPE in cats:
                score += 50
                if TagCategory.TECHNOLOGY in cats:
                    score += 10
                if TagCategory.SECTOR in cats:
                    score += 10
                if TagCategory.ASSETS in cats:
                    score += 10
                if TagCategory.ATTACKER_ORIGIN in cats:
                    score += 10
    return score


MATURITY_THRESHOLD = 50


def is_mature(tags: TagSet, threshold: int = MATURITY_THRESHOLD) -> bool:
    if not 0 <= threshold <= 185:
        raise ValueError(f"threshold must be in [0, 185], got {threshold}")
    return maturity(tags) >= threshold


# --- training topics ----------------------------------------------------------

class TrainingTopic(str, Enum):
    INCIDENT_HANDLING = "INCIDENT_HANDLING"
    GDPR = "GDPR"
    CYBER_HYGIENE = "CYBER_HYGIENE"
    PHISHING_SOCIAL_ENGINEERING = "PHISHING_SOCIAL_ENGINEERING"
    SOCIAL_MEDIA = "SOCIAL_MEDIA"
    BYOD = "BYOD"


def topic_keywords() -> dict[TrainingTopic, frozenset[str]]:
    doc = json.loads((_DATA_DIR / "topics.json").read_text(encoding="utf-8"))
    return {TrainingTopic(name): frozenset(words) for name, words in doc.items()}


_TOPIC_KEYWORDS = topic_keywords()


def _phrase_pattern(phrase: str) -> str:
    escaped = re.escape(phrase).replace(r"\ ", r"\s+")
    return r"\b" + escaped + r"\b"


def _keyword_hits(keywords: frozenset[str], haystack: str) -> int:
    return sum(
        1 for kw in keywords if re.search(_phrase_pattern(kw), haystack, re.IGNORECASE)
    )


def assign_topics(text: str, tags: TagSet | None = None) -> list[TrainingTopic]:
    """Topics whose keyword sets hit the text (whole words/phrases only),
    ordered by descending hit count, ties broken by topic name."""
    haystack = text
    if tags is not None and tags.spans:
        haystack = text + "\n" + " ".join(s.text for s in tags.spans)
    scored = []
    for topic, keywords in _TOPIC_KEYWORDS.items():
        hits = _keyword_hits(keywords, haystack)
        if hits:
            scored.append((topic, hits))
    scored.sort(key=lambda pair: (-pair[1], pair[0].value))
    return [topic for topic, _ in scored]


# --- breadcrumb construction ---------------------------------------------------

def _provenance(span_or_rule: str) -> dict:
    return {"x_provenance": span_or_rule}


def build_fragment(tags: TagSet) -> CesoGraph:
    """Map a tag set onto ontology objects and the default edges between them.

    Attacker name/type become a threat-actor (plus identity), origin a
    location, malware tags malware objects, attack types attack-patterns,
    CVEs vulnerabilities, sector a victim identity attribute, assets a
    threat-actor attribute, technology tools.
    """
    graph = CesoGraph()

    attacker_names = tags.values(TagCategory.ATTACKER_NAME)
    attacker_types = tags.values(TagCategory.ATTACKER_TYPE)
    origins = tags.values(TagCategory.ATTACKER_ORIGIN)
    assets = tags.values(TagCategory.ASSETS)

    threat_actor = None
    if attacker_names or attacker_types:
        name = attacker_names[0] if attacker_names else attacker_types[0]
        props: dict = _provenance("tag:ATTACKER_NAME" if attacker_names else "tag:ATTACKER_TYPE")
        if attacker_types:
            props["threat_actor_types"] = attacker_types
        if attacker_names[1:]:
            props["aliases"] = attacker_names[1:]
        if assets:
            props["x_assets"] = assets  # victim assets ride on the actor per the tag map
        threat_actor = new_object(ObjectKind.THREAT_ACTOR, name, props)
        graph = graph.with_object(threat_actor)

    identity = None
    if attacker_names:
        identity = new_object(
            ObjectKind.IDENTITY,
            attacker_names[0],
            {"identity_class": "group", **_provenance("tag:ATTACKER_NAME")},
        )
        graph = graph.with_object(identity)
    elif origins and threat_actor is not None:
        identity = new_object(
            ObjectKind.IDENTITY,
            f"{threat_actor.name} identity",
            {"identity_class": "group", **_provenance("rule:attribution-chain")},
        )
        graph = graph.with_object(identity)

    locations = []
    for origin in origins:
        location = new_object(ObjectKind.LOCATION, origin, _provenance("tag:ATTACKER_ORIGIN"))
        graph = graph.with_object(location)
        locations.append(location)

    malware_objects = []
    malware_types = tags.values(TagCategory.MALWARE_TYPE)
    for name in tags.values(TagCategory.MALWARE_NAME):
        props = _provenance("tag:MALWARE_NAME")
        if malware_types:
            props["malware_types"] = malware_types
        malware_objects.append(new_object(ObjectKind.MALWARE, name, props))
    if not malware_objects and malware_types:
        malware_objects.append(
            new_object(
                ObjectKind.MALWARE,
                malware_types[0],
                {"malware_types": malware_types, **_provenance("tag:MALWARE_TYPE")},
            )
        )
    graph = graph.with_objects(malware_objects)

    attack_patterns = [
        new_object(ObjectKind.ATTACK_PATTERN, value, _provenance("tag:ATTACK_TYPE"))
        for value in tags.values(TagCategory.ATTACK_TYPE)
    ]
    graph = graph.with_objects(attack_patterns)

    vulnerabilities = [
        new_object(ObjectKind.VULNERABILITY, value, _provenance("tag:VULNERABILITY"))
        for value in tags.values(TagCategory.VULNERABILITY)
    ]
    graph = graph.with_objects(vulnerabilities)

    for sector in tags.values(TagCategory.SECTOR):
        graph = graph.with_object(
            new_object(
                ObjectKind.IDENTITY,
                f"{sector} sector organisation",
                {
                    "identity_class": "organization",
                    "sectors": [sector],
                    **_provenance("tag:SECTOR"),
                },
            )
        )

    tools = [
        new_object(ObjectKind.TOOL, value, _provenance("tag:TECHNOLOGY"))
        for value in tags.values(TagCategory.TECHNOLOGY)
    ]
    graph = graph.with_objects(tools)

    # Default wiring: attack-pattern delivers malware / exploits vulnerability,
    # and the attribution chain attack-pattern -> threat-actor -> identity -> location.
    for ap in attack_patterns:
        for mal in malware_objects:
            graph = add_relationship(graph, ap.id, mal.id, RelType.DELIVERS)
        for vuln in vulnerabilities:
            graph = add_relationship(graph, ap.id, vuln.id, RelType.EXPLOITS)
        if threat_actor is not None:
            graph = add_relationship(graph, ap.id, threat_actor.id, RelType.ATTRIBUTED_TO)
    if threat_actor is not None and identity is not None:
        graph = add_relationship(graph, threat_actor.id, identity.id, RelType.ATTRIBUTED_TO)
    if identity is not None:
        for location in locations:
            graph = add_relationship(graph, identity.id, location.id, RelType.LOCATED_AT)

    ceso.validate_graph(graph)
    return graph


def to_breadcrumb(article: "ArticleRecord", tags: TagSet) -> "Breadcrumb":
    """Package one article's tags as a knowledge-database breadcrumb."""
    from .store import Breadcrumb

    bound = replace(tags, article_id=article.id) if tags.article_id != article.id else tags
    return Breadcrumb(
        article_id=article.id,
        tags=bound,
        maturity=maturity(bound),
        topics=tuple(assign_topics(article.normalized_text, bound)),
        fragment=build_fragment(bound),
    )
