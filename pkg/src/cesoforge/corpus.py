"""Incident-corpus text processing: normalization, sentence splitting, JSONL
emission, and article ingestion into the knowledge database."""

from __future__ import annotations

import json
import re
import string
import urllib.request
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .errors import FetchFailure, ParseFailure

if TYPE_CHECKING:
    from .store import KnowledgeDb

_DATA_DIR = Path(__file__).parent / "data"

# Punctuation kept by default: sentence delimiters plus the characters that
# appear inside tokens we must not destroy (cve-2021-34527, zero-day, don't).
_DEFAULT_PUNCTUATION_KEEP = frozenset(".,!?;:-'")

_TAG_RE = re.compile(r"<[^>]*>")
_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_UNIX_PATH_RE = re.compile(r"(?:(?<=\s)|^)(?:/[\w.~-]+){2,}/?", re.MULTILINE)
_WINDOWS_PATH_RE = re.compile(r"[A-Za-z]:\\\S+")
_CONTROL_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")


def _load_lines(name: str) -> list[str]:
    path = _DATA_DIR / name
    return [
        line.strip().lower()
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]


def default_stopwords() -> frozenset[str]:
    """The stopword list shipped with the package. Not applied by default:
    the reference corpus lines keep words like 'with', so removal is opt-in."""
    return frozenset(_load_lines("stopwords.txt"))


def _abbreviations() -> frozenset[str]:
    return frozenset(_load_lines("abbreviations.txt"))


_ABBREVIATIONS = _abbreviations()


@dataclass(frozen=True)
class PipelineConfig:
    stopword_list: frozenset[str] = frozenset()
    strip_html: bool = True
    lowercase: bool = True
    spell_correct: bool = False  # hook only; no corrector is shipped
    punctuation_keep: frozenset[str] = _DEFAULT_PUNCTUATION_KEEP

    def __post_init__(self):
        if self.stopword_list is None:
            raise ParseFailure("stopword_list may be empty but not null")


DEFAULT_CONFIG = PipelineConfig()


def normalize_text(raw: str | bytes, config: PipelineConfig = DEFAULT_CONFIG) -> str:
    """Clean a document: UTF-8, no HTML/URLs/paths/control characters/empty
    lines, configured punctuation and stopwords stripped, lowercased.

    Idempotent: normalize(normalize(x)) == normalize(x).
    """
    if isinstance(raw, bytes):
        text = raw.decode("utf-8", errors="replace")
    else:
        # Re-encode to squash lone surrogates from bad upstream decoding.
        text = raw.encode("utf-8", errors="replace").decode("utf-8")

    if config.lowercase:
        text = text.lower()
    text = _CONTROL_RE.sub(" ", text)
    if config.strip_html:
        text = _TAG_RE.sub(" ", text)
    text = _URL_RE.sub(" ", text)
    text = _WINDOWS_PATH_RE.sub(" ", text)
    text = _UNIX_PATH_RE.sub(" ", text)

    drop = set(string.punctuation) - set(config.punctuation_keep)
    if drop:
        text = text.translate({ord(ch): " " for ch in drop})

    if config.stopword_list:
        words = sorted(config.stopword_list, key=len, reverse=True)
        pattern = re.compile(
            r"\b(?:" + "|".join(re.escape(w) for w in words) + r")\b", re.IGNORECASE
        )
        text = pattern.sub(" ", text)

    lines = []
    for line in text.splitlines():
        collapsed = " ".join(line.split())
        if collapsed:
            lines.append(collapsed)
    return "\n".join(lines)


def split_sentences(text: str) -> list[str]:
    """Split normalized text into sentences on . ! ? boundaries, keeping the
    delimiter and skipping breaks after known abbreviations."""
    sentences: list[str] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        start = 0
        for match in re.finditer(r"[.!?]+\s+", line):
            candidate = line[start : match.start() + len(match.group().rstrip())]
            words = candidate.split()
            token = words[-1] if words else ""
            if token.rstrip(".!?").lower() in _ABBREVIATIONS:
                continue  # u.s. / e.g. / fig. do not end a sentence
            sentence = candidate.strip()
            if sentence:
                sentences.append(sentence)
            start = match.end()
        tail = line[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


def emit_jsonl(texts: Iterable[str]) -> str:
    """One compact {"text": ...} object per line, matching the corpus format."""
    return "".join(
        json.dumps({"text": t}, ensure_ascii=False, separators=(",", ":")) + "\n"
        for t in texts
    )


@dataclass
class IngestReport:
    ids: list[str] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)  # (item, reason)


_META_RE = re.compile(r"^#?\s*(url|date|title|source):\s*(.+)$", re.IGNORECASE)


def _parse_document(text: str, fallback_title: str) -> tuple[dict, str]:
    """Peel optional 'url:/date:/title:/source:' header lines off a document."""
    meta: dict[str, str] = {}
    lines = text.splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        match = _META_RE.match(line.strip())
        if match and body_start == i:
            meta[match.group(1).lower()] = match.group(2).strip()
            body_start = i + 1
        elif line.strip() == "" and body_start == i:
            body_start = i + 1
        else:
            break
    body = "\n".join(lines[body_start:]).strip()
    meta.setdefault("title", fallback_title)
    return meta, body


def _slug(value: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", value.lower()).strip("-")
    return slug[:60] or "article"


def ingest(
    path_or_urls: str | Path,
    source_label: str,
    store: "KnowledgeDb",
    config: PipelineConfig = DEFAULT_CONFIG,
    *,
    fetch: bool = False,
) -> IngestReport:
    """Normalize and store every document under a path (file or directory),
    or fetch a newline-separated URL list when ``fetch`` is enabled.

    Per-item failures are recorded and do not abort the batch.
    """
    from .store import ArticleRecord  # local import to avoid a cycle

    report = IngestReport()
    items: list[tuple[str, str | None]] = []  # (identifier, text or None when fetch needed)

    path = Path(path_or_urls)
    if path.is_dir():
        for child in sorted(path.iterdir()):
            if child.suffix.lower() in {".txt", ".html", ".htm"}:
                items.append((str(child), child.read_text(encoding="utf-8", errors="replace")))
    elif path.is_file() and fetch:
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                items.append((line.strip(), None))
    elif path.is_file():
        items.append((str(path), path.read_text(encoding="utf-8", errors="replace")))
    else:
        raise ParseFailure(f"not a readable input: {path_or_urls}")

    for identifier, text in items:
        try:
            if text is None:
                try:
                    with urllib.request.urlopen(identifier, timeout=15) as resp:
                        text = resp.read().decode("utf-8", errors="replace")
                except OSError as exc:
                    raise FetchFailure(f"{identifier}: {exc}") from exc
            meta, body = _parse_document(text, fallback_title=Path(identifier).stem)
            if not body.strip():
                raise ParseFailure(f"{identifier}: document body is empty")
            published = (
                date.fromisoformat(meta["date"]) if "date" in meta else date.today()
            )
            record = ArticleRecord(
                id="",
                source=meta.get("source", source_label),
                url=meta.get("url"),
                published=published,
                raw_text=body,
                normalized_text=normalize_text(body, config),
                name_tag=_slug(meta["title"]),
            )
            report.ids.append(store.put_article(record))
        except (FetchFailure, ParseFailure, ValueError) as exc:
            report.failures.append((identifier, str(exc)))
    return report
