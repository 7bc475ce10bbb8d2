import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cesoforge.corpus import (
    DEFAULT_CONFIG,
    PipelineConfig,
    default_stopwords,
    emit_jsonl,
    ingest,
    normalize_text,
    split_sentences,
)

PAPER_HEADLINE = "REvil Sodinokibi Ransomware Targets Chinese Users With DHL Spam"
PAPER_LINE = '{"text":"revil sodinokibi ransomware targets chinese users with dhl spam"}\n'


class TestNormalize:
    def test_reference_headline(self):
        assert (
            normalize_text(PAPER_HEADLINE)
            == "revil sodinokibi ransomware targets chinese users with dhl spam"
        )

    def test_empty(self):
        assert normalize_text("") == ""

    def test_html_and_url_stripped(self):
        out = normalize_text("<p>Attack at https://x.example/path now</p>")
        assert out == "attack at now"

    def test_windows_path_stripped(self):
        out = normalize_text(r"dropper wrote C:\Users\victim\evil.exe yesterday")
        assert out == "dropper wrote yesterday"

    def test_control_characters_removed(self):
        assert normalize_text("a\x00b\x07c") == "a b c"

    def test_bytes_input_decoded_with_replacement(self):
        out = normalize_text(b"attack \xff\xfe wave")
        assert "attack" in out and "wave" in out

    def test_empty_lines_dropped(self):
        out = normalize_text("first\n\n\nsecond\n")
        assert out == "first\nsecond"

    def test_stopwords_removed_when_configured(self):
        config = PipelineConfig(stopword_list=frozenset({"the", "at"}))
        assert normalize_text("Attack at the plant", config) == "attack plant"

    def test_shipped_stopword_list_keeps_corpus_words(self):
        words = default_stopwords()
        assert "with" not in words
        assert "the" in words

    def test_cve_survives(self):
        assert normalize_text("patch CVE-2021-34527 now!") == "patch cve-2021-34527 now!"

    @given(st.text(max_size=400))
    @settings(max_examples=200, deadline=None)
    def test_idempotent_default_config(self, text):
        once = normalize_text(text)
        assert normalize_text(once) == once

    @given(st.text(max_size=300))
    @settings(max_examples=100, deadline=None)
    def test_idempotent_with_stopwords(self, text):
        config = PipelineConfig(stopword_list=frozenset({"the", "and", "of"}))
        once = normalize_text(text, config)
        assert normalize_text(once, config) == once


class TestSentences:
    def test_delimiters(self):
        assert split_sentences("a. b? c!") == ["a.", "b?", "c!"]

    def test_empty(self):
        assert split_sentences("") == []

    def test_abbreviations(self):
        out = split_sentences("attackers hit u.s. utilities. response was slow.")
        assert out == ["attackers hit u.s. utilities.", "response was slow."]

    def test_eg_does_not_break(self):
        out = split_sentences("vectors e.g. phishing were used. teams responded.")
        assert len(out) == 2

    def test_newlines_separate(self):
        assert split_sentences("one line\nanother line") == ["one line", "another line"]

    @given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=300))
    @settings(max_examples=150, deadline=None)
    def test_no_empty_sentences_and_no_character_gain(self, text):
        normalized = normalize_text(text)
        sentences = split_sentences(normalized)
        assert all(s.strip() for s in sentences)
        assert sum(len(s) for s in sentences) <= len(normalized)


class TestJsonl:
    def test_single(self):
        assert emit_jsonl(["x"]) == '{"text":"x"}\n'

    def test_paper_line_byte_identical(self):
        assert emit_jsonl([normalize_text(PAPER_HEADLINE)]) == PAPER_LINE

    def test_empty(self):
        assert emit_jsonl([]) == ""

    def test_round_trip(self):
        texts = ["alpha", "beta with spaces", "γράμματα"]
        parsed = [json.loads(line)["text"] for line in emit_jsonl(texts).splitlines()]
        assert parsed == texts


class TestIngest:
    def test_directory_of_three(self, store, tmp_path):
        src = tmp_path / "docs"
        src.mkdir()
        for i in range(3):
            (src / f"a{i}.txt").write_text(f"title: doc {i}\n\nransomware attack number {i}\n")
        report = ingest(src, "unit", store)
        assert len(report.ids) == 3 and not report.failures

    def test_duplicate_url_upserts(self, store, tmp_path):
        src = tmp_path / "docs"
        src.mkdir()
        body = "url: https://example.test/a\ndate: 2021-01-05\n\nphishing wave hits\n"
        (src / "one.txt").write_text(body)
        (src / "two.txt").write_text(body)
        report = ingest(src, "unit", store)
        assert len(set(report.ids)) == 1
        assert len(store.list_articles()) == 1

    def test_unreachable_url_is_isolated(self, store, tmp_path):
        listing = tmp_path / "urls.txt"
        listing.write_text("http://127.0.0.1:1/unreachable\n")
        report = ingest(listing, "unit", store, fetch=True)
        assert report.ids == []
        assert len(report.failures) == 1
        assert "unreachable" in report.failures[0][0]

    def test_empty_body_recorded_as_failure(self, store, tmp_path):
        src = tmp_path / "docs"
        src.mkdir()
        (src / "empty.txt").write_text("title: nothing\n\n")
        report = ingest(src, "unit", store)
        assert report.ids == [] and len(report.failures) == 1

    def test_metadata_header_parsed(self, store, tmp_path):
        src = tmp_path / "docs"
        src.mkdir()
        (src / "a.txt").write_text(
            "url: https://example.test/meta\ndate: 2021-06-15\ntitle: Big Breach\n\nbody text here\n"
        )
        ingest(src, "unit", store)
        article = store.list_articles()[0]
        assert article.published.isoformat() == "2021-06-15"
        assert article.name_tag == "big-breach"
        assert article.url == "https://example.test/meta"

    def test_renormalization_idempotent_on_stored_articles(self, populated_store):
        for article in populated_store.list_articles():
            assert normalize_text(article.normalized_text, DEFAULT_CONFIG) == article.normalized_text
