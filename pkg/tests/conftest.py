from __future__ import annotations

from pathlib import Path

import pytest

from cesoforge import runtime
from cesoforge.store import KnowledgeDb

FIXTURE_CORPUS = Path(__file__).parent.parent / "src" / "cesoforge" / "data" / "corpus"
ATTACK_BUNDLE = (
    Path(__file__).parent.parent / "src" / "cesoforge" / "data" / "attack" / "sample_groups.json"
)


@pytest.fixture
def seeded():
    with runtime.seeded(1234) as ctx:
        yield ctx


@pytest.fixture
def store(tmp_path):
    return KnowledgeDb(tmp_path / "kdb")


@pytest.fixture
def populated_store(store, seeded):
    """Fixture corpus ingested and extracted."""
    from cesoforge.corpus import ingest
    from cesoforge.tagging import tag_text, to_breadcrumb

    ingest(FIXTURE_CORPUS, "fixture", store)
    for article in store.list_articles():
        tags = tag_text(article.normalized_text, article_id=article.id)
        store.put_breadcrumb(to_breadcrumb(article, tags))
    return store
