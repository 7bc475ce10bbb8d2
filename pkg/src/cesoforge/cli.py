"""Operator CLI. Exit codes: 0 success, 1 domain error, 2 usage error."""

from __future__ import annotations

import functools
import json
import sys
from datetime import date
from pathlib import Path

import click

from . import runtime
from .agreement import kappa_from_annotations
from .bundle import serialize_bundle
from .corpus import DEFAULT_CONFIG, ingest as ingest_documents
from .enhancer import (
    DEFAULT_SIMILARITY,
    AptProfile,
    ingest_attack,
    merge,
    profiles_from_store,
    rank_apts,
)
from .errors import CesoForgeError, NotFoundError
from .incidents import draft_from_query, draft_from_stored, render_report, store_draft
from .scenario import (
    ScenarioSpec,
    StorylinePrompt,
    apply_storyline,
    build_scenario,
    emit_msel,
    export_exercise,
    generate_storyline,
)
from .store import KnowledgeDb, QueryFilter
from .tagging import TrainingTopic, iter_annotations, tag_text, to_breadcrumb
from .trends import ForecastConfig, trend_report

_ATTACK_FIXTURE = Path(__file__).parent / "data" / "attack" / "sample_groups.json"


def domain_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CesoForgeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _parse_filter(pairs: tuple[str, ...]) -> QueryFilter:
    values: dict = {}
    tags: list[str] = []
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--filter expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        key = key.strip().lower()
        if key == "tag":
            tags.append(value)
        elif key == "sector":
            values["sector"] = value
        elif key == "topic":
            values["topic"] = TrainingTopic(value.upper())
        elif key == "name_tag":
            values["name_tag"] = value
        elif key == "min_maturity":
            values["min_maturity"] = int(value)
        elif key in ("from", "to"):
            lo, hi = values.get("date_range", (None, None))
            parsed = date.fromisoformat(value)
            values["date_range"] = (parsed, hi) if key == "from" else (lo, parsed)
        else:
            raise click.UsageError(f"unknown filter key {key!r}")
    return QueryFilter(tags=tuple(tags), **values)


@click.group()
@click.option(
    "--data-dir",
    envvar="CESOFORGE_DATA",
    default=".cesoforge",
    type=click.Path(path_type=Path),
    help="Knowledge database directory (env: CESOFORGE_DATA).",
)
@click.option("--seed", type=int, default=None, help="Deterministic ids and timestamps.")
@click.option("--json", "json_output", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx: click.Context, data_dir: Path, seed: int | None, json_output: bool):
    """Generate structured cyber-exercise scenarios from incident articles."""
    _install_seed(ctx, data_dir, seed)
    ctx.obj = {"data_dir": data_dir, "json": json_output}


def _install_seed(ctx: click.Context, data_dir: Path, seed: int | None) -> None:
    """Seeded invocations resume the id/clock stream recorded in the data dir,
    so a fixed seed is deterministic across a whole command pipeline without
    ever repeating an id."""
    runtime.set_seed(seed)
    if seed is None:
        return
    state_path = data_dir / ".seedstate.json"
    if state_path.exists():
        try:
            state = json.loads(state_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            state = {}
        if state.get("seed") == seed:
            runtime.current().fast_forward(state.get("draws", 0), state.get("ticks", 0))

    def save_state():
        draws, ticks = runtime.current().position
        data_dir.mkdir(parents=True, exist_ok=True)
        state_path.write_text(
            json.dumps({"seed": seed, "draws": draws, "ticks": ticks}),
            encoding="utf-8",
        )

    ctx.call_on_close(save_state)


def _store(ctx) -> KnowledgeDb:
    return KnowledgeDb(ctx.obj["data_dir"])


def _emit(ctx, payload: dict, human: str) -> None:
    if ctx.obj["json"]:
        click.echo(json.dumps(payload, ensure_ascii=False))
    else:
        click.echo(human)


@main.command()
@click.option("--source", required=True, help="Source label for the batch.")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--fetch", is_flag=True, help="Treat the input file as a URL list and fetch it.")
@click.pass_context
@domain_errors
def ingest(ctx, source: str, in_path: Path, fetch: bool):
    """Normalize and store articles from files or a URL list."""
    report = ingest_documents(in_path, source, _store(ctx), DEFAULT_CONFIG, fetch=fetch)
    for item, reason in report.failures:
        click.echo(f"warning: {item}: {reason}", err=True)
    _emit(
        ctx,
        {"ingested": report.ids, "failures": report.failures},
        f"ingested {len(report.ids)} articles ({len(report.failures)} failures)",
    )


@main.command()
@click.option("--article", "article_id", default=None, help="Extract a single article.")
@click.pass_context
@domain_errors
def extract(ctx, article_id: str | None):
    """Tag stored articles and persist the resulting breadcrumbs."""
    store = _store(ctx)
    articles = [store.get_article(article_id)] if article_id else store.list_articles()
    crumbs = []
    for article in articles:
        tags = tag_text(article.normalized_text, article_id=article.id)
        crumb = to_breadcrumb(article, tags)
        store.put_breadcrumb(crumb)
        crumbs.append({"article_id": article.id, "maturity": crumb.maturity})
    _emit(ctx, {"breadcrumbs": crumbs}, f"extracted {len(crumbs)} breadcrumbs")


@main.command()
@click.option("--filter", "filters", multiple=True, help="key=value (sector, topic, tag, ...).")
@click.option("-k", "count", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.pass_context
@domain_errors
def incgen(ctx, filters, count: int, out_dir: Path | None):
    """Draft incidents from the best matching breadcrumbs and store them."""
    store = _store(ctx)
    drafts = draft_from_query(store, _parse_filter(filters), count)
    names = []
    for draft in drafts:
        store_draft(store, draft)
        names.append(draft.name_tag)
        if out_dir:
            target = out_dir / draft.name_tag
            target.mkdir(parents=True, exist_ok=True)
            markdown, bundle_json = render_report(draft)
            (target / "report.md").write_text(markdown, encoding="utf-8")
            (target / "bundle.json").write_text(bundle_json, encoding="utf-8")
    _emit(ctx, {"incidents": names}, "drafted: " + ", ".join(names))


def _load_profiles(store: KnowledgeDb) -> list[AptProfile]:
    profiles = profiles_from_store(store)
    if profiles:
        return profiles
    return ingest_attack(_ATTACK_FIXTURE.read_text(encoding="utf-8"))


@main.command()
@click.option("--incident", "incident_ref", required=True, help="Stored incident name tag.")
@click.option("--group", "group_ref", default=None, help="APT group name/alias (default: top ranked).")
@click.option("--phase", "phases", multiple=True, help="Kill-chain phase filter (repeatable).")
@click.option("--fragment", "fragment_ids", multiple=True, help="Donor object ids (repeatable).")
@click.option("--attack-bundle", type=click.Path(exists=True, path_type=Path), default=None)
@click.pass_context
@domain_errors
def enhance(ctx, incident_ref, group_ref, phases, fragment_ids, attack_bundle):
    """Merge a known APT group's TTP graph into a stored incident."""
    store = _store(ctx)
    draft = draft_from_stored(store.get_incident(incident_ref))
    if attack_bundle:
        profiles = ingest_attack(Path(attack_bundle).read_text(encoding="utf-8"))
    else:
        profiles = _load_profiles(store)
    ranked = rank_apts(draft, profiles, DEFAULT_SIMILARITY)
    if group_ref:
        wanted = group_ref.casefold()
        chosen = next(
            (
                p
                for p, _ in ranked
                if p.name.casefold() == wanted
                or wanted in (a.casefold() for a in p.aliases)
            ),
            None,
        )
        if chosen is None:
            raise NotFoundError(f"no APT profile named {group_ref!r}")
    else:
        chosen = ranked[0][0]
    merged = merge(
        draft,
        chosen,
        fragment=fragment_ids or None,
        phases=phases or None,
    )
    store_draft(store, merged)
    _emit(
        ctx,
        {
            "incident": merged.name_tag,
            "donor": chosen.name,
            "objects": len(merged.graph.objects),
            "injects": len(merged.injects),
        },
        f"enhanced {merged.name_tag} with {chosen.name}: "
        f"{len(merged.graph.objects)} objects, {len(merged.injects)} injects",
    )


@main.command()
@click.option("--sector", default=None)
@click.option("--topic", default=None)
@click.option("--horizon", type=int, default=6, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.pass_context
@domain_errors
def trend(ctx, sector, topic, horizon, out_dir):
    """Aggregate incident statistics and forecast the monthly trend."""
    flt = QueryFilter(
        sector=sector, topic=TrainingTopic(topic.upper()) if topic else None
    )
    report = trend_report(_store(ctx), flt, ForecastConfig(horizon=horizon))
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "trend.md").write_text(report.markdown, encoding="utf-8")
        (out_dir / "trend.csv").write_text(report.csv_text, encoding="utf-8")
        _emit(ctx, {"written": str(out_dir)}, f"trend report written to {out_dir}")
    else:
        click.echo(report.markdown)


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--synthesizer", default="template", show_default=True)
@click.pass_context
@domain_errors
def cegen(ctx, spec_path: Path, out_dir: Path, synthesizer: str):
    """Assemble the exercise: bundle, MSEL skeleton, and scenario document."""
    store = _store(ctx)
    doc = json.loads(spec_path.read_text(encoding="utf-8"))
    spec = ScenarioSpec.from_dict(doc)
    graph = build_scenario(spec, store)
    seed_text = doc.get("storyline_seed") or (
        f"{spec.name}: {spec.description or 'a simulated incident campaign'} "
        "The exercise opens as monitoring raises the first alarms, and"
    )
    storyline = generate_storyline(
        StorylinePrompt(seed_text=seed_text, synthesizer=synthesizer), graph
    )
    graph = apply_storyline(graph, storyline)
    msel = emit_msel(graph)
    paths = export_exercise(graph, msel, storyline, out_dir)
    scenario_id = runtime.new_uuid()
    store.put_scenario(
        scenario_id,
        {
            "id": scenario_id,
            "name": spec.name,
            "bundle": json.loads(serialize_bundle(graph, bundle_id=f"bundle--{scenario_id}")),
            "msel": msel.to_dict(),
            "storyline": storyline,
        },
    )
    _emit(
        ctx,
        {"scenario": scenario_id, "files": {k: str(v) for k, v in paths.items()}},
        "exercise written: " + ", ".join(str(v) for v in paths.values()),
    )


@main.command()
@click.option("--a", "file_a", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--b", "file_b", required=True, type=click.Path(exists=True, path_type=Path))
@click.pass_context
@domain_errors
def kappa(ctx, file_a: Path, file_b: Path):
    """Cohen's kappa between two annotation JSONL files."""
    pairs_a = list(iter_annotations(file_a.read_text(encoding="utf-8")))
    pairs_b = list(iter_annotations(file_b.read_text(encoding="utf-8")))
    matrix, result = kappa_from_annotations(pairs_a, pairs_b)
    rounded = result.rounded()
    _emit(
        ctx,
        {**rounded, "n": matrix.n, "interpretation": result.interpretation},
        f"N = {matrix.n}\np_o = {rounded['p_o']:.4f}\np_e = {rounded['p_e']:.4f}\n"
        f"kappa = {rounded['kappa']:.4f} ({result.interpretation})",
    )


@main.command()
@click.option("--bind", default="127.0.0.1:8787", show_default=True)
@click.pass_context
@domain_errors
def serve(ctx, bind: str):
    """Run the local HTTP/JSON service (and the web UI, when built)."""
    import uvicorn

    from .service import create_app

    host, _, port = bind.partition(":")
    app = create_app(ctx.obj["data_dir"])
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8787), log_level="info")


if __name__ == "__main__":
    main()
