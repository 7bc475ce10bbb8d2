from datetime import date

import pytest

from cesoforge.errors import NotFoundError, ValidationError
from cesoforge.store import (
    ArticleRecord,
    Breadcrumb,
    KnowledgeDb,
    QueryFilter,
    StoredIncident,
)
from cesoforge.tagging import (
    TagCategory,
    TagSet,
    TagSpan,
    TrainingTopic,
    build_fragment,
    maturity,
)


def make_article(n=1, url=None, published=date(2021, 1, 5), text="ransomware attack wave"):
    return ArticleRecord(
        id="",
        source="unit",
        url=url,
        published=published,
        raw_text=text,
        normalized_text=text,
        name_tag=f"article-{n}",
    )


def make_breadcrumb(article_id, categories, seeded_values=None):
    spans = []
    cursor = 0
    for category in categories:
        value = (seeded_values or {}).get(category, category.value.lower().replace("_", " "))
        spans.append(
            TagSpan(category=category, text=value, start=cursor, end=cursor + len(value), tagger="external")
        )
        cursor += len(value) + 1
    tags = TagSet.build(article_id, spans)
    return Breadcrumb(
        article_id=article_id,
        tags=tags,
        maturity=maturity(tags),
        topics=(TrainingTopic.INCIDENT_HANDLING,),
        fragment=build_fragment(tags),
    )


MATURE = [TagCategory.ATTACKER_TYPE, TagCategory.ATTACK_TYPE, TagCategory.MALWARE_NAME,
          TagCategory.VULNERABILITY]  # scores 145


class TestArticles:
    def test_put_and_get(self, store):
        aid = store.put_article(make_article())
        assert store.get_article(aid).name_tag == "article-1"

    def test_empty_raw_text_rejected(self, store):
        with pytest.raises(ValidationError):
            store.put_article(make_article(text="   "))

    def test_url_upsert_same_id(self, store):
        first = store.put_article(make_article(url="https://x.test/a", text="original body"))
        second = store.put_article(make_article(url="https://x.test/a", text="updated body"))
        assert first == second
        assert store.get_article(first).raw_text == "updated body"
        assert len(store.list_articles()) == 1

    def test_content_hash_dedup_without_url(self, store):
        first = store.put_article(make_article())
        second = store.put_article(make_article())
        assert first == second

    def test_missing_article(self, store):
        with pytest.raises(NotFoundError):
            store.get_article("nope")


class TestQuery:
    def test_empty_store(self, store):
        assert store.query(QueryFilter(min_maturity=1)) == []

    def test_min_maturity_ordering(self, store, seeded):
        # maturities: 45 (attack type only), 95, 185 (every category)
        specs = [
            [TagCategory.ATTACK_TYPE],
            [TagCategory.ATTACK_TYPE, TagCategory.MALWARE_NAME, TagCategory.VULNERABILITY],
            list(TagCategory),
        ]
        for i, cats in enumerate(specs, start=1):
            aid = store.put_article(make_article(i, published=date(2021, i, 1), text=f"body {i}"))
            store.put_breadcrumb(make_breadcrumb(aid, cats))
        assert sorted(b.maturity for b in store.list_breadcrumbs()) == [45, 95, 185]
        hits = store.query(QueryFilter(min_maturity=50))
        assert [b.maturity for b in hits] == [185, 95]

    def test_recency_breaks_maturity_ties(self, store, seeded):
        older = store.put_article(make_article(1, published=date(2021, 1, 1), text="one"))
        newer = store.put_article(make_article(2, published=date(2021, 6, 1), text="two"))
        store.put_breadcrumb(make_breadcrumb(older, MATURE))
        store.put_breadcrumb(make_breadcrumb(newer, MATURE))
        hits = store.query(QueryFilter())
        assert [b.article_id for b in hits] == [newer, older]

    def test_sector_filter(self, store, seeded):
        energy = store.put_article(make_article(1, text="energy body"))
        other = store.put_article(make_article(2, text="other body"))
        store.put_breadcrumb(
            make_breadcrumb(energy, MATURE + [TagCategory.SECTOR], {TagCategory.SECTOR: "energy"})
        )
        store.put_breadcrumb(make_breadcrumb(other, MATURE))
        hits = store.query(QueryFilter(sector="energy"))
        assert [b.article_id for b in hits] == [energy]

    def test_tag_and_topic_and_date_filters(self, store, seeded):
        aid = store.put_article(make_article(1, published=date(2021, 5, 5), text="qbot body"))
        store.put_breadcrumb(
            make_breadcrumb(aid, MATURE, {TagCategory.MALWARE_NAME: "qbot"})
        )
        assert store.query(QueryFilter(tags=("qbot",)))
        assert not store.query(QueryFilter(tags=("emotet",)))
        assert store.query(QueryFilter(topic=TrainingTopic.INCIDENT_HANDLING))
        assert not store.query(QueryFilter(topic=TrainingTopic.BYOD))
        assert store.query(QueryFilter(date_range=(date(2021, 1, 1), date(2021, 12, 31))))
        assert not store.query(QueryFilter(date_range=(date(2022, 1, 1), None)))

    def test_stored_breadcrumb_matches_any_satisfied_filter(self, store, seeded):
        aid = store.put_article(make_article(1, text="round trip body"))
        crumb = make_breadcrumb(aid, MATURE, {TagCategory.MALWARE_NAME: "qbot"})
        store.put_breadcrumb(crumb)
        assert store.query(QueryFilter()) == [crumb]
        assert store.query(QueryFilter(min_maturity=crumb.maturity)) == [crumb]
        assert store.query(QueryFilter(tags=("qbot",))) == [crumb]


class TestStats:
    def test_empty(self, store):
        stats = store.stats()
        assert stats.count_by_month == {}
        assert stats.top_techniques == []

    def test_technique_counts(self, store, seeded):
        for i in range(3):
            aid = store.put_article(make_article(i, text=f"phishing body {i}"))
            store.put_breadcrumb(
                make_breadcrumb(aid, [TagCategory.ATTACK_TYPE], {TagCategory.ATTACK_TYPE: "phishing"})
            )
        aid = store.put_article(make_article(9, text="ransomware body"))
        store.put_breadcrumb(
            make_breadcrumb(aid, [TagCategory.ATTACK_TYPE], {TagCategory.ATTACK_TYPE: "ransomware"})
        )
        stats = store.stats()
        assert stats.top_techniques == [("phishing", 3), ("ransomware", 1)]

    def test_month_bucketing(self, store, seeded):
        a1 = store.put_article(make_article(1, published=date(2021, 1, 5), text="one"))
        a2 = store.put_article(make_article(2, published=date(2021, 1, 20), text="two"))
        store.put_breadcrumb(make_breadcrumb(a1, MATURE))
        store.put_breadcrumb(make_breadcrumb(a2, MATURE))
        assert store.stats().count_by_month == {"2021-01": 2}

    def test_tie_break_lexicographic(self, store, seeded):
        for i, name in enumerate(["zeta", "alpha"]):
            aid = store.put_article(make_article(i, text=f"body {name}"))
            store.put_breadcrumb(
                make_breadcrumb(aid, [TagCategory.ATTACK_TYPE], {TagCategory.ATTACK_TYPE: name})
            )
        assert store.stats().top_techniques == [("alpha", 1), ("zeta", 1)]

    def test_counts_sum_to_matching_occurrences(self, populated_store):
        stats = populated_store.stats(k=1000)
        total = sum(count for _, count in stats.top_techniques)
        by_hand = sum(
            len(c.tags.values(TagCategory.ATTACK_TYPE))
            for c in populated_store.list_breadcrumbs()
        )
        assert total == by_hand


class TestBreadcrumbInvariant:
    def test_maturity_must_match_recomputation(self, seeded):
        from cesoforge.tagging import TagSet, build_fragment

        tags = TagSet.build("a1", [])
        with pytest.raises(ValidationError):
            Breadcrumb(
                article_id="a1",
                tags=tags,
                maturity=50,  # recomputes to 0
                topics=(),
                fragment=build_fragment(tags),
            )


class TestConcurrency:
    def test_parallel_writers_and_readers(self, tmp_path):
        import threading

        store = KnowledgeDb(tmp_path / "kdb")
        errors: list[Exception] = []

        def writer(start):
            try:
                for i in range(start, start + 20):
                    store.put_article(
                        make_article(i, url=f"https://unit.test/{i}", text=f"body {i}")
                    )
            except Exception as exc:  # pragma: no cover - failure diagnostics
                errors.append(exc)

        def reader():
            try:
                for _ in range(40):
                    for article in store.list_articles():
                        assert article.raw_text
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=writer, args=(base,)) for base in (0, 100, 200)]
        threads += [threading.Thread(target=reader) for _ in range(3)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert not errors
        assert len(store.list_articles()) == 60
        # every write is durable: a fresh handle over the same files agrees
        assert len(KnowledgeDb(tmp_path / "kdb").list_articles()) == 60


class TestDurability:
    def test_reopen_reads_back(self, tmp_path, seeded):
        first = KnowledgeDb(tmp_path / "kdb")
        aid = first.put_article(make_article())
        crumb = make_breadcrumb(aid, MATURE, {TagCategory.MALWARE_NAME: "qbot"})
        first.put_breadcrumb(crumb)

        second = KnowledgeDb(tmp_path / "kdb")
        assert second.get_article(aid) == first.get_article(aid)
        assert second.list_breadcrumbs() == [crumb]

    def test_incident_round_trip(self, tmp_path, seeded):
        from cesoforge import runtime
        from cesoforge.ceso import CesoGraph, ObjectKind, new_object

        store = KnowledgeDb(tmp_path / "kdb")
        graph = CesoGraph().with_object(new_object(ObjectKind.INTRUSION_SET, "incident-x"))
        incident = StoredIncident(
            name_tag="incident-x", graph=graph, created=runtime.now(), provenance=("a1",)
        )
        store.put_incident(incident)
        again = KnowledgeDb(tmp_path / "kdb").get_incident("incident-x")
        assert again == incident

    def test_incident_requires_single_root(self, store, seeded):
        from cesoforge import runtime
        from cesoforge.ceso import CesoGraph, ObjectKind, new_object

        graph = CesoGraph().with_objects(
            [new_object(ObjectKind.INTRUSION_SET, "a"), new_object(ObjectKind.INTRUSION_SET, "b")]
        )
        with pytest.raises(ValidationError):
            store.put_incident(
                StoredIncident(name_tag="bad", graph=graph, created=runtime.now(), provenance=())
            )
