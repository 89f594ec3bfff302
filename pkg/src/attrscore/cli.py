"""Command-line interface.

Subcommands mirror the pipeline stages: structure, score, ground, evaluate
for single documents or pairs; benchmark, report, agreement for dataset
runs; annotate for the human-labeling service. Global flags pick the config
file, the cache directory, and --mock, which swaps every configured provider
for the offline mock so nothing can touch the network.

Exit codes are script-friendly: 0 success, 2 configuration or usage, 3 I/O
or data, 4 provider transport, 5 response parsing or undefined statistics.
Every subcommand accepts --dry-run, which prints the planned model call
count (upper bound) and exits before any network activity.

evaluate and ground can also run against a remote service (--server URL),
sending the same request the local path would execute.
"""

from __future__ import annotations

import json
import socket
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import httpx
from filelock import FileLock, Timeout

from ._version import __version__
from .annotation import AnnotationSession, SampleSpec
from .config import ToolkitConfig, build_gateway, load_config, resolve_ontology
from .errors import (
    AttrScoreError,
    ConfigError,
    DatasetError,
    ResponseParseError,
    TransportError,
    UndefinedStatError,
)
from .gateway import Gateway, ModelRef
from .grounding import ground as ground_value
from .harness.dataset import ingest
from .harness.reports import (
    attribute_distribution_report,
    fleiss_matrix,
    grounding_audit,
    load_labels,
    main_report,
    matrix_report,
    render_grounding_audit,
)
from .harness.run import METRIC_KINDS, PRECOMPUTED, RunConfig, ScorerSpec, load_run_configs, run
from .harness.store import RunStore
from .metrics import HashEmbedder, as_mode, embed_match, rouge_l, rouge_n
from .ontology import Ontology, load_ontology_file
from .scoring import holistic_score, score_summary
from .stats import fleiss_kappa, pearson, rmse, spearman, to_unit
from .stats import align as align_series
from .structuring import StructuredSummary, structure

_EXIT_CONFIG = 2
_EXIT_IO = 3
_EXIT_TRANSPORT = 4
_EXIT_PARSE = 5


@dataclass
class CliState:
    config_path: str | None
    cache_dir: str | None
    mock: bool
    _config: ToolkitConfig | None = None

    @property
    def config(self) -> ToolkitConfig:
        if self._config is None:
            self._config = load_config(self.config_path) if self.config_path else ToolkitConfig()
        return self._config

    def gateway(self) -> Gateway:
        return build_gateway(self.config, mock_only=self.mock, cache_dir=self.cache_dir)

    def ontology(self, override: str | None = None) -> Ontology:
        if override:
            return load_ontology_file(override)
        return resolve_ontology(self.config)


def _exit_for(exc: BaseException) -> int:
    if isinstance(exc, (ResponseParseError, UndefinedStatError)):
        return _EXIT_PARSE
    if isinstance(exc, TransportError):
        return _EXIT_TRANSPORT
    if isinstance(exc, (DatasetError, OSError)):
        return _EXIT_IO
    return _EXIT_CONFIG  # ConfigError, ValueError, KeyError: bad inputs


def _fail(exc: BaseException) -> "click.exceptions.Exit":
    click.echo(f"error: {exc}", err=True)
    return SystemExit(_exit_for(exc))


def _guarded(fn):
    """Translate toolkit errors into the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, SystemExit):
            raise
        except (AttrScoreError, OSError, ValueError, KeyError) as exc:
            raise _fail(exc) from exc

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_json(path: str | None, payload: object) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def _dry_run_exit(calls: str) -> None:
    click.echo(f"dry run: planned model calls: {calls}")
    raise SystemExit(0)


def _post(server: str, endpoint: str, payload: dict) -> dict:
    url = server.rstrip("/") + endpoint
    try:
        response = httpx.post(url, json=payload, timeout=300.0)
    except httpx.HTTPError as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc
    if response.status_code >= 400:
        detail = response.text
        try:
            detail = response.json().get("detail", detail)
        except ValueError:
            pass
        raise TransportError(f"{url} returned {response.status_code}: {detail}")
    return response.json()


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(), default=None, help="Toolkit config file (JSON).")
@click.option("--cache-dir", type=click.Path(), default=None, help="Response cache directory override.")
@click.option("--mock", is_flag=True, help="Replace every provider with the deterministic offline mock.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, cache_dir: str | None, mock: bool) -> None:
    """Attribute structuring evaluation toolkit."""
    ctx.obj = CliState(config_path=config_path, cache_dir=cache_dir, mock=mock)


# ---------------------------------------------------------------------------
# structure / score / ground / evaluate
# ---------------------------------------------------------------------------


@main.command("structure")
@click.argument("note_path", type=click.Path(dir_okay=False))
@click.option("--structurer", default="mock", help="Provider, e.g. mock or gpt4:gpt-4-0613.")
@click.option("--ontology", "ontology_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None, help="Write the structured values as JSON.")
@click.option("--dry-run", is_flag=True)
@click.pass_obj
@_guarded
def cmd_structure(state: CliState, note_path: str, structurer: str, ontology_path: str | None, out: str | None, dry_run: bool) -> None:
    """Extract ontology attributes from one document."""
    if dry_run:
        _dry_run_exit("1 (structuring)")
    ontology = state.ontology(ontology_path)
    note = _read_text(note_path)
    result = structure(note, ontology, state.gateway(), ModelRef.parse(structurer), source_id=note_path)
    for key, value in result.values.items():
        click.echo(f"{key:>12}: {value if value is not None else '(absent)'}")
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)
    _write_json(out, {"source_id": note_path, "values": result.values, "warnings": result.warnings})


def _load_structured(path: str, ontology: Ontology) -> StructuredSummary:
    raw = json.loads(_read_text(path))
    values = raw.get("values", raw)
    if not isinstance(values, dict):
        raise DatasetError(f"{path}: expected an object of attribute values")
    missing = [k for k in ontology.keys if k not in values]
    if missing:
        raise DatasetError(f"{path}: missing attribute keys: {', '.join(missing)}")
    ordered = {k: values[k] for k in ontology.keys}
    return StructuredSummary(source_id=path, values=ordered)


@main.command("score")
@click.argument("reference_json", type=click.Path(dir_okay=False))
@click.argument("candidate_json", type=click.Path(dir_okay=False))
@click.option("--scorer", default="llm@mock", help="LLM scorer, e.g. llm@mock.")
@click.option("--ontology", "ontology_path", type=click.Path(), default=None)
@click.option("--dry-run", is_flag=True)
@click.pass_obj
@_guarded
def cmd_score(state: CliState, reference_json: str, candidate_json: str, scorer: str, ontology_path: str | None, dry_run: bool) -> None:
    """Score two structured summaries (JSON files of attribute values)."""
    ontology = state.ontology(ontology_path)
    if dry_run:
        _dry_run_exit(f"up to {len(ontology)} (one per attribute pair)")
    spec = ScorerSpec.parse(scorer)
    if spec.kind != "llm":
        raise ConfigError("score expects an llm scorer, e.g. llm@mock")
    ref = _load_structured(reference_json, ontology)
    cand = _load_structured(candidate_json, ontology)
    summary = score_summary(ontology, ref, cand, state.gateway(), spec.provider)
    _echo_summary_score(summary)


def _echo_summary_score(summary) -> None:
    for score in summary.per_attribute:
        if score.skipped:
            click.echo(f"{score.attribute_key:>12}: skipped ({score.skip_reason})")
        else:
            click.echo(f"{score.attribute_key:>12}: {score.score}")
    mean = "n/a" if summary.mean_raw is None else f"{summary.mean_raw:.4f}"
    normalized = "n/a" if summary.normalized is None else f"{summary.normalized:.2f}"
    click.echo(f"mean raw: {mean}  normalized: {normalized}  scored: {summary.n_scored}  skipped: {summary.n_skipped}")


@main.command("ground")
@click.argument("document_path", type=click.Path(dir_okay=False))
@click.option("--attribute", "attribute_key", required=True, help="Ontology attribute key.")
@click.option("--value", required=True, help="Extracted value to ground.")
@click.option("--provider", default="mock")
@click.option("--ontology", "ontology_path", type=click.Path(), default=None)
@click.option("--server", default=None, help="Service URL; runs the grounding remotely.")
@click.option("--dry-run", is_flag=True)
@click.pass_obj
@_guarded
def cmd_ground(state: CliState, document_path: str, attribute_key: str, value: str, provider: str, ontology_path: str | None, server: str | None, dry_run: bool) -> None:
    """Find and verify a supporting span for an extracted value."""
    if dry_run:
        _dry_run_exit("1 (grounding)")
    document = _read_text(document_path)
    if server:
        payload = _post(server, "/api/ground", {
            "document": document, "attribute_key": attribute_key, "value": value, "provider": provider,
        })
        status, span = payload["status"], payload["span"]
        start, end = payload["char_start"], payload["char_end"]
    else:
        ontology = state.ontology(ontology_path)
        attribute = ontology.get(attribute_key)
        grounded = ground_value(document, attribute, value, state.gateway(), ModelRef.parse(provider))
        status, span, start, end = grounded.status, grounded.span, grounded.char_start, grounded.char_end
    click.echo(f"status: {status}")
    if span:
        click.echo(f"span: {span}")
    if start is not None:
        click.echo(f"offsets: {start}..{end}")


@main.command("evaluate")
@click.argument("reference_path", type=click.Path(dir_okay=False))
@click.argument("candidate_path", type=click.Path(dir_okay=False))
@click.option("--structurer", default="mock")
@click.option("--scorer", "scorers", multiple=True, default=("llm@mock",), help="Repeatable scorer spec.")
@click.option("--ontology", "ontology_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None, help="Write the full result as JSON.")
@click.option("--server", default=None, help="Service URL; runs the evaluation remotely.")
@click.option("--dry-run", is_flag=True)
@click.pass_obj
@_guarded
def cmd_evaluate(state: CliState, reference_path: str, candidate_path: str, structurer: str, scorers: tuple[str, ...], ontology_path: str | None, out: str | None, server: str | None, dry_run: bool) -> None:
    """Evaluate a candidate summary against a reference."""
    ontology = state.ontology(ontology_path)
    specs = [ScorerSpec.parse(s) for s in scorers]
    if dry_run:
        n_llm = sum(len(ontology) for s in specs if s.kind == "llm")
        n_hol = sum(1 for s in specs if s.kind == "holistic")
        _dry_run_exit(f"2 (structuring) + up to {n_llm} (pair scoring) + {n_hol} (holistic)")
    reference = _read_text(reference_path)
    candidate = _read_text(candidate_path)
    if server:
        payload = _post(server, "/api/evaluate", {
            "reference": reference, "candidate": candidate,
            "structurer": structurer, "scorers": list(scorers),
        })
        click.echo(json.dumps(payload, ensure_ascii=False, indent=2))
        _write_json(out, payload)
        return
    gateway = state.gateway()
    structurer_ref = ModelRef.parse(structurer)
    ref = structure(reference, ontology, gateway, structurer_ref, source_id=reference_path)
    cand = structure(candidate, ontology, gateway, structurer_ref, source_id=candidate_path)
    result: dict = {"structured": {"reference": ref.values, "candidate": cand.values}, "scores": {}}
    embedder = HashEmbedder()
    for spec in specs:
        if spec.kind == "llm":
            summary = score_summary(ontology, ref, cand, gateway, spec.provider)
            click.echo(f"== {spec.name} ==")
            _echo_summary_score(summary)
            result["scores"][spec.name] = {
                "normalized": summary.normalized,
                "mean_raw": summary.mean_raw,
                "n_scored": summary.n_scored,
                "n_skipped": summary.n_skipped,
                "per_attribute": [
                    {"attribute_key": s.attribute_key, "score": s.score, "skip_reason": s.skip_reason}
                    for s in summary.per_attribute
                ],
            }
        elif spec.kind == "holistic":
            score = holistic_score(reference, candidate, gateway, spec.provider)
            click.echo(f"== {spec.name} ==")
            click.echo(f"holistic score: {score}/10")
            result["scores"][spec.name] = {"score": score, "normalized": (score - 1) / 9 * 100}
        else:
            fn = {
                "rouge1": lambda r, c: rouge_n(r, c, n=1),
                "rougeL": rouge_l,
                "embed_match": lambda r, c: embed_match(r, c, embedder),
            }[spec.kind]
            default = fn(reference, candidate)
            as_result = as_mode(fn, ref, cand)
            click.echo(f"== {spec.name} ==")
            click.echo(f"default f1: {default.f1:.4f}  (p {default.precision:.4f} / r {default.recall:.4f})")
            as_mean = "n/a" if as_result.mean is None else f"{as_result.mean:.4f}"
            click.echo(f"AS-mode mean f1: {as_mean}")
            result["scores"][spec.name] = {
                "default": {"precision": default.precision, "recall": default.recall, "f1": default.f1},
                "as_mode": {"per_attribute": as_result.per_attribute, "mean": as_result.mean},
            }
    _write_json(out, result)


# ---------------------------------------------------------------------------
# benchmark / report / agreement
# ---------------------------------------------------------------------------


def _per_doc_calls(config: RunConfig, n_attrs: int) -> int:
    calls = 0 if config.generator == PRECOMPUTED else 1
    calls += 2  # structuring
    for spec in config.scorers:
        if spec.kind == "llm":
            calls += n_attrs
        elif spec.kind == "holistic":
            calls += 1
    if config.ground:
        calls += 2 * n_attrs
    return calls


@main.command("benchmark")
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--runs-root", type=click.Path(), default="runs", show_default=True)
@click.option("--dry-run", is_flag=True)
@click.pass_obj
@_guarded
def cmd_benchmark(state: CliState, config_path: str, runs_root: str, dry_run: bool) -> None:
    """Execute the run(s) described by a benchmark config file."""
    configs = load_run_configs(config_path)
    ontology = state.ontology()
    if dry_run:
        lines = []
        for config in configs:
            dataset = ingest(config.dataset_path, config.token_limit)
            lines.append(f"{config.run_id}: up to {len(dataset) * _per_doc_calls(config, len(ontology))} over {len(dataset)} documents")
        _dry_run_exit("; ".join(lines))
    gateway = state.gateway()
    for config in configs:
        run_dir = Path(runs_root) / config.run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        lock = FileLock(run_dir / ".lock")
        try:
            lock.acquire(timeout=0)
        except Timeout:
            raise ConfigError(f"run {config.run_id!r} is already in progress (lock held)") from None
        try:
            store = run(config, gateway, ontology, runs_root=runs_root)
        finally:
            lock.release()
        manifest = store.read_manifest() or {}
        click.echo(
            f"run {config.run_id}: {manifest.get('n_documents', '?')} documents, "
            f"{manifest.get('n_failures', '?')} failures -> {store.run_dir}"
        )


def _open_store(run_dir: str) -> RunStore:
    path = Path(run_dir)
    if not path.is_dir():
        raise DatasetError(f"run directory {run_dir} does not exist")
    return RunStore(path.parent, path.name)


@main.command("report")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path())
@click.option("--table", "table_name", type=click.Choice(["main", "matrix", "attributes", "grounding"]), default="matrix", show_default=True)
@click.option("--labels", "labels_path", type=click.Path(), default=None, help="Annotation export (required for --table main).")
@click.option("--doc", "doc_id", default=None, help="Document id (required for --table grounding).")
@click.option("--format", "fmt", type=click.Choice(["text", "csv"]), default="text", show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--dry-run", is_flag=True)
@_guarded
def cmd_report(run_dirs: tuple[str, ...], table_name: str, labels_path: str | None, doc_id: str | None, fmt: str, out: str | None, dry_run: bool) -> None:
    """Render a report from one or more completed runs."""
    if dry_run:
        _dry_run_exit("0 (reports read the store only)")
    stores = [_open_store(d) for d in run_dirs]
    if table_name == "matrix":
        table = matrix_report(stores).to_table()
    elif table_name == "main":
        if labels_path is None:
            raise ConfigError("--table main needs --labels (annotation export)")
        if len(stores) != 1:
            raise ConfigError("--table main takes exactly one run directory")
        table = main_report(stores[0], load_labels(labels_path)).to_table()
    elif table_name == "attributes":
        if len(stores) != 1:
            raise ConfigError("--table attributes takes exactly one run directory")
        table = attribute_distribution_report(stores[0]).to_table()
    else:
        if len(stores) != 1 or doc_id is None:
            raise ConfigError("--table grounding takes exactly one run directory and --doc")
        rendered = render_grounding_audit(grounding_audit(stores[0], doc_id), doc_id)
        click.echo(rendered, nl=False)
        if out:
            Path(out).write_text(rendered, encoding="utf-8")
        return
    rendered = table.render_csv() if fmt == "csv" else table.render_text()
    click.echo(rendered, nl=False)
    if out:
        Path(out).write_text(rendered, encoding="utf-8")


@main.command("agreement")
@click.argument("run_dir", type=click.Path())
@click.option("--labels", "labels_path", type=click.Path(dir_okay=False), required=True)
@click.option("--scorer", default=None, help="Scorer name from the run (default: its first llm scorer).")
@click.option("--dry-run", is_flag=True)
@_guarded
def cmd_agreement(run_dir: str, labels_path: str, scorer: str | None, dry_run: bool) -> None:
    """Agreement statistics between one scorer and human labels."""
    if dry_run:
        _dry_run_exit("0 (agreement reads the store only)")
    store = _open_store(run_dir)
    labels = load_labels(labels_path)
    manifest = store.read_manifest()
    if manifest is None:
        raise DatasetError(f"run {run_dir} has no manifest")
    scorer_names = manifest["config"]["scorers"]
    if scorer is None:
        scorer = next((s for s in scorer_names if s.startswith("llm@")), None)
        if scorer is None:
            raise ConfigError(f"run has no llm scorer; pick one of {scorer_names} with --scorer")
    elif scorer not in scorer_names:
        raise ConfigError(f"scorer {scorer!r} not in this run; it has {scorer_names}")
    human: dict = {}
    for record in labels:
        human.setdefault((record.doc_id, record.attribute_key), []).append(float(record.label))
    auto: dict = {}
    kind = scorer.partition("@")[0]
    for record in store.records():
        if record.get("kind") == "attribute_score" and record["scorer"] == scorer:
            score = record["score"]
            auto[(record["doc_id"], record["attribute_key"])] = (
                None if score is None else (score - 1) / 3
            )
        elif record.get("kind") == "metric_attr" and record["scorer"] == scorer:
            auto[(record["doc_id"], record["attribute_key"])] = record["value"]
    if kind == "holistic":
        raise ConfigError("agreement runs per attribute; holistic scorers have no attribute series")
    joined = align_series(human, auto)
    human_unit = to_unit(joined.human, "four_point")
    auto_unit = list(joined.auto)
    click.echo(f"pairs: {len(joined)} (human-only {joined.n_human_only}, auto-only {joined.n_auto_only}, skipped {joined.n_skipped})")
    click.echo(f"pearson:  {pearson(human_unit, auto_unit):.4f}")
    click.echo(f"spearman: {spearman(human_unit, auto_unit):.4f}")
    click.echo(f"rmse:     {rmse(human_unit, auto_unit):.4f}")
    matrix, n_dropped = fleiss_matrix(labels)
    suffix = f" ({n_dropped} incomplete items dropped)" if n_dropped else ""
    click.echo(f"fleiss kappa: {fleiss_kappa(matrix):.4f}{suffix}")


# ---------------------------------------------------------------------------
# annotate
# ---------------------------------------------------------------------------


@main.group("annotate")
def annotate() -> None:
    """Blinded human annotation: session management and the web service."""


@annotate.command("create-session")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path())
@click.option("--sessions-root", type=click.Path(), default="sessions", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--docs-per-run", type=int, default=None)
@click.option("--max-tasks", type=int, default=None)
@click.option("--session-id", default=None)
@click.option("--ontology", "ontology_path", type=click.Path(), default=None)
@click.option("--dry-run", is_flag=True)
@click.pass_obj
@_guarded
def cmd_create_session(state: CliState, run_dirs: tuple[str, ...], sessions_root: str, seed: int, docs_per_run: int | None, max_tasks: int | None, session_id: str | None, ontology_path: str | None, dry_run: bool) -> None:
    """Build a blinded task set from completed run(s)."""
    if dry_run:
        _dry_run_exit("0 (sessions are built from the store)")
    stores = [_open_store(d) for d in run_dirs]
    spec = SampleSpec(seed=seed, docs_per_run=docs_per_run, max_tasks=max_tasks)
    session = AnnotationSession.create(stores, state.ontology(ontology_path), spec, sessions_root, session_id=session_id)
    click.echo(f"session {session.session_id}: {len(session.tasks)} tasks in {session.session_dir}")


@annotate.command("serve")
@click.option("--sessions-root", type=click.Path(), default="sessions", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True, help="0 picks a free port.")
@click.option("--frontend", "frontend_dir", type=click.Path(), default=None, help="Static UI bundle directory.")
@click.option("--dry-run", is_flag=True)
@click.pass_obj
@_guarded
def cmd_serve(state: CliState, sessions_root: str, host: str, port: int, frontend_dir: str | None, dry_run: bool) -> None:
    """Serve the annotation API (and UI, if built)."""
    if dry_run:
        _dry_run_exit("0 (the service calls providers only per request)")
    import uvicorn

    from .service import create_app

    if frontend_dir is None:
        bundled = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        frontend_dir = str(bundled) if bundled.is_dir() else None
    app = create_app(
        sessions_root=sessions_root,
        gateway=state.gateway(),
        ontology=state.ontology(),
        frontend_dir=frontend_dir,
    )
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    bound_host, bound_port = sock.getsockname()
    click.echo(f"serving on http://{bound_host}:{bound_port}")
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])


@annotate.command("export")
@click.argument("session_id")
@click.option("--sessions-root", type=click.Path(), default="sessions", show_default=True)
@click.option("--blinded", is_flag=True, help="Strip the reference-side mapping.")
@click.option("--out", type=click.Path(), default=None, help="Write records as JSONL.")
@click.option("--dry-run", is_flag=True)
@_guarded
def cmd_export(session_id: str, sessions_root: str, blinded: bool, out: str | None, dry_run: bool) -> None:
    """Export a session's labels (JSONL records)."""
    if dry_run:
        _dry_run_exit("0 (export reads the session log)")
    session = AnnotationSession.open(sessions_root, session_id)
    payload = session.export(blinded=blinded)
    lines = "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in payload["records"])
    if out:
        Path(out).write_text(lines, encoding="utf-8")
    else:
        click.echo(lines, nl=False)
    click.echo(
        f"{payload['n_labels']} labels over {payload['n_tasks']} tasks ({payload['completeness']:.1f}% complete)",
        err=True,
    )


if __name__ == "__main__":
    main()
