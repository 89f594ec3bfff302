"""Run orchestration: generate, structure, score, ground, persist.

A run walks every dataset document through the configured pipeline and
appends one record batch per document to the run store. Failures are
isolated per document: the batch then carries a failure record (plus
whatever stages completed) and the run moves on. Documents already marked
complete are skipped on re-entry, which is both the resume path and the
"rerun costs nothing" path.

Scorer specs are strings: ``llm@PROVIDER`` and ``holistic@PROVIDER`` name a
model, ``rouge1`` / ``rougeL`` / ``embed_match`` run locally. Metric scorers
are evaluated in both modes per document (whole summaries, and per attribute
over the structured pair).
"""

from __future__ import annotations

import json
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .._version import __version__
from ..errors import ConfigError, DatasetError
from ..gateway import CompletionRequest, Gateway, ModelRef, cache_key
from ..grounding import ground, grounding_request
from ..metrics import HashEmbedder, PrfScore, TokenEmbedder, as_mode, embed_match, rouge_l, rouge_n
from ..ontology import Ontology
from ..scoring import (
    AttributeScore,
    aggregate,
    holistic_request,
    holistic_score,
    pair_request,
    score_pair,
)
from ..structuring import StructuredSummary, structure, structuring_request
from .dataset import DatasetRecord, ingest
from .generate import generate_summary, generation_request
from .store import RunStore

PRECOMPUTED = "precomputed"

METRIC_KINDS = ("rouge1", "rougeL", "embed_match")
MODEL_KINDS = ("llm", "holistic")


@dataclass(frozen=True)
class ScorerSpec:
    """One scorer: an LLM-backed kind with a provider, or a local metric."""

    kind: str
    provider: ModelRef | None = None

    def __post_init__(self) -> None:
        if self.kind in MODEL_KINDS:
            if self.provider is None:
                raise ConfigError(f"scorer {self.kind!r} needs a provider, e.g. {self.kind}@mock")
        elif self.kind in METRIC_KINDS:
            if self.provider is not None:
                raise ConfigError(f"scorer {self.kind!r} does not take a provider")
        else:
            raise ConfigError(
                f"unknown scorer kind {self.kind!r}; expected one of {MODEL_KINDS + METRIC_KINDS}"
            )

    @classmethod
    def parse(cls, spec: str) -> "ScorerSpec":
        spec = spec.strip()
        if not spec:
            raise ConfigError("empty scorer spec")
        kind, sep, provider = spec.partition("@")
        return cls(kind=kind, provider=ModelRef.parse(provider) if sep else None)

    @property
    def name(self) -> str:
        return self.kind if self.provider is None else f"{self.kind}@{self.provider}"


@dataclass(frozen=True)
class RunConfig:
    run_id: str
    dataset_path: str
    structurer: str
    scorers: tuple[ScorerSpec, ...]
    generator: str = PRECOMPUTED
    seed: int = 0
    token_limit: int = 4000
    workers: int = 1
    ground: bool = True

    def __post_init__(self) -> None:
        if not self.run_id:
            raise ConfigError("run_id must be non-empty")
        if not self.scorers:
            raise ConfigError("scorers must be non-empty")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if len({s.name for s in self.scorers}) != len(self.scorers):
            raise ConfigError("duplicate scorer specs")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {
            "run_id", "dataset_path", "structurer", "scorers",
            "generator", "seed", "token_limit", "workers", "ground",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"run config has unknown fields: {', '.join(sorted(unknown))}")
        missing = {"run_id", "dataset_path", "structurer", "scorers"} - set(raw)
        if missing:
            raise ConfigError(f"run config missing fields: {', '.join(sorted(missing))}")
        scorers = raw["scorers"]
        if not isinstance(scorers, list):
            raise ConfigError("scorers must be a list of scorer specs")
        return cls(
            run_id=raw["run_id"],
            dataset_path=raw["dataset_path"],
            structurer=raw["structurer"],
            scorers=tuple(ScorerSpec.parse(s) for s in scorers),
            generator=raw.get("generator", PRECOMPUTED),
            seed=raw.get("seed", 0),
            token_limit=raw.get("token_limit", 4000),
            workers=raw.get("workers", 1),
            ground=raw.get("ground", True),
        )

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "dataset_path": self.dataset_path,
            "structurer": self.structurer,
            "scorers": [s.name for s in self.scorers],
            "generator": self.generator,
            "seed": self.seed,
            "token_limit": self.token_limit,
            "workers": self.workers,
            "ground": self.ground,
        }


def load_run_configs(path: str | Path) -> list[RunConfig]:
    """Benchmark config file: one run object, or {"runs": [...]}."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read run config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"run config {path} is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "runs" in raw:
        if set(raw) != {"runs"} or not isinstance(raw["runs"], list):
            raise ConfigError('multi-run config must be exactly {"runs": [...]}')
        configs = [RunConfig.from_dict(r) for r in raw["runs"]]
        seen: set[str] = set()
        for config in configs:
            if config.run_id in seen:
                raise ConfigError(f"duplicate run_id {config.run_id!r} in {path}")
            seen.add(config.run_id)
        return configs
    if isinstance(raw, dict):
        return [RunConfig.from_dict(raw)]
    raise ConfigError(f"run config {path} must be a JSON object")


def _provenance(request: CompletionRequest) -> dict:
    return {
        "cache_key": cache_key(request),
        "provider": request.provider_id,
        "model": request.model,
    }


def _metric_fn(kind: str, embedder: TokenEmbedder) -> Callable[[str, str], PrfScore]:
    if kind == "rouge1":
        return lambda r, c: rouge_n(r, c, n=1)
    if kind == "rougeL":
        return rouge_l
    if kind == "embed_match":
        return lambda r, c: embed_match(r, c, embedder)
    raise ConfigError(f"not a metric scorer: {kind!r}")


class _DocPipeline:
    """Per-run context shared across documents; `process` is thread-safe."""

    def __init__(self, config: RunConfig, gateway: Gateway, ontology: Ontology, embedder: TokenEmbedder):
        self.config = config
        self.gateway = gateway
        self.ontology = ontology
        self.embedder = embedder
        self.structurer = ModelRef.parse(config.structurer)
        self.generator = None if config.generator == PRECOMPUTED else ModelRef.parse(config.generator)

    def process(self, rec: DatasetRecord) -> list[dict]:
        records: list[dict] = []
        stage = "candidate"
        try:
            cand_text = self._candidate(rec, records)
            stage = "structure"
            ref_struct = self._structured(rec.doc_id, "reference", rec.reference_summary, records)
            cand_struct = self._structured(rec.doc_id, "candidate", cand_text, records)
            for spec in self.config.scorers:
                stage = f"score:{spec.name}"
                self._score(spec, rec, cand_text, ref_struct, cand_struct, records)
            if self.config.ground:
                stage = "ground"
                self._ground_side(rec.doc_id, "reference", rec.reference_summary, ref_struct, records)
                self._ground_side(rec.doc_id, "candidate", cand_text, cand_struct, records)
        except Exception as exc:
            records.append(
                {
                    "kind": "failure",
                    "doc_id": rec.doc_id,
                    "stage": stage,
                    "error_type": type(exc).__name__,
                    "message": str(exc),
                }
            )
        return records

    def _candidate(self, rec: DatasetRecord, records: list[dict]) -> str:
        if self.generator is None:
            if rec.candidate_summary is None:
                raise DatasetError(f"doc {rec.doc_id!r} has no candidate_summary for a precomputed run")
            text = rec.candidate_summary
            provenance = None
        else:
            text = generate_summary(rec.source_note, self.gateway, self.generator)
            provenance = _provenance(generation_request(rec.source_note, self.generator))
        records.append(
            {
                "kind": "candidate",
                "doc_id": rec.doc_id,
                "generator": self.config.generator,
                "text": text,
                "provenance": provenance,
            }
        )
        return text

    def _structured(self, doc_id: str, role: str, text: str, records: list[dict]) -> StructuredSummary:
        result = structure(
            text, self.ontology, self.gateway, self.structurer, source_id=f"{doc_id}/{role}"
        )
        records.append(
            {
                "kind": "structured",
                "doc_id": doc_id,
                "role": role,
                "structurer": self.config.structurer,
                "values": result.values,
                "warnings": result.warnings,
                "provenance": _provenance(structuring_request(text, self.ontology, self.structurer)),
            }
        )
        return result

    def _score(
        self,
        spec: ScorerSpec,
        rec: DatasetRecord,
        cand_text: str,
        ref_struct: StructuredSummary,
        cand_struct: StructuredSummary,
        records: list[dict],
    ) -> None:
        doc_id = rec.doc_id
        if spec.kind == "llm":
            scores: list[AttributeScore] = []
            for attr in self.ontology:
                rv = ref_struct.values[attr.key]
                cv = cand_struct.values[attr.key]
                score = score_pair(attr, rv, cv, self.gateway, spec.provider)
                scores.append(score)
                called = rv is not None and cv is not None
                records.append(
                    {
                        "kind": "attribute_score",
                        "doc_id": doc_id,
                        "scorer": spec.name,
                        "attribute_key": attr.key,
                        "score": score.score,
                        "skip_reason": score.skip_reason,
                        "provenance": _provenance(pair_request(attr, rv, cv, spec.provider)) if called else None,
                    }
                )
            summary = aggregate(scores)
            records.append(
                {
                    "kind": "summary_score",
                    "doc_id": doc_id,
                    "scorer": spec.name,
                    "mean_raw": summary.mean_raw,
                    "normalized": summary.normalized,
                    "n_scored": summary.n_scored,
                    "n_skipped": summary.n_skipped,
                }
            )
        elif spec.kind == "holistic":
            score = holistic_score(rec.reference_summary, cand_text, self.gateway, spec.provider)
            records.append(
                {
                    "kind": "holistic",
                    "doc_id": doc_id,
                    "scorer": spec.name,
                    "score": score,
                    "normalized": (score - 1) / 9 * 100,
                    "provenance": _provenance(
                        holistic_request(rec.reference_summary, cand_text, spec.provider)
                    ),
                }
            )
        else:
            fn = _metric_fn(spec.kind, self.embedder)
            default = fn(rec.reference_summary, cand_text)
            records.append(
                {
                    "kind": "metric_default",
                    "doc_id": doc_id,
                    "scorer": spec.name,
                    "precision": default.precision,
                    "recall": default.recall,
                    "f1": default.f1,
                    "normalized": default.f1 * 100,
                }
            )
            result = as_mode(fn, ref_struct, cand_struct)
            for key, value in result.per_attribute.items():
                records.append(
                    {
                        "kind": "metric_attr",
                        "doc_id": doc_id,
                        "scorer": spec.name,
                        "attribute_key": key,
                        "value": value,
                    }
                )
            scored = [v for v in result.per_attribute.values() if v is not None]
            records.append(
                {
                    "kind": "metric_summary",
                    "doc_id": doc_id,
                    "scorer": spec.name,
                    "mean": result.mean,
                    "normalized": None if result.mean is None else result.mean * 100,
                    "n_scored": len(scored),
                    "n_skipped": len(result.per_attribute) - len(scored),
                }
            )

    def _ground_side(
        self,
        doc_id: str,
        role: str,
        document: str,
        struct: StructuredSummary,
        records: list[dict],
    ) -> None:
        for attr in self.ontology:
            value = struct.values[attr.key]
            if value is None:
                continue
            grounded = ground(document, attr, value, self.gateway, self.structurer)
            records.append(
                {
                    "kind": "grounding",
                    "doc_id": doc_id,
                    "role": role,
                    "attribute_key": attr.key,
                    "extracted": grounded.extracted,
                    "span": grounded.span,
                    "char_start": grounded.char_start,
                    "char_end": grounded.char_end,
                    "status": grounded.status,
                    "provenance": _provenance(grounding_request(document, attr, value, self.structurer)),
                }
            )


def _check_providers(config: RunConfig, gateway: Gateway) -> None:
    needed = {ModelRef.parse(config.structurer).provider_id}
    if config.generator != PRECOMPUTED:
        needed.add(ModelRef.parse(config.generator).provider_id)
    for spec in config.scorers:
        if spec.provider is not None:
            needed.add(spec.provider.provider_id)
    missing = sorted(needed - set(gateway.provider_ids))
    if missing:
        raise ConfigError(
            f"providers not configured: {', '.join(missing)} (have: {', '.join(gateway.provider_ids)})"
        )


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(
    config: RunConfig,
    gateway: Gateway,
    ontology: Ontology,
    runs_root: str | Path = "runs",
    embedder: TokenEmbedder | None = None,
    on_doc_complete: Callable[[str], None] | None = None,
) -> RunStore:
    """Execute (or resume) a run; returns its store.

    `on_doc_complete` fires after each document batch is durably appended;
    an exception raised there stops the run between documents, which is the
    interrupt point the resume contract is tested against.
    """
    _check_providers(config, gateway)
    dataset = ingest(config.dataset_path, config.token_limit)
    store = RunStore(runs_root, config.run_id)
    store.recover()
    done = store.completed_docs()
    pending = [r for r in dataset if r.doc_id not in done]
    store.write_manifest(
        {
            "run_id": config.run_id,
            "config": config.to_dict(),
            "toolkit_version": __version__,
            "started_at": _utc_now(),
            "n_documents": len(dataset),
            "n_excluded": dataset.n_excluded,
            "n_resumed": len(done),
        }
    )
    pipeline = _DocPipeline(config, gateway, ontology, embedder or HashEmbedder())
    if config.workers == 1:
        batches = map(pipeline.process, pending)
        for rec, batch in zip(pending, batches):
            store.append_doc_batch(rec.doc_id, batch)
            if on_doc_complete is not None:
                on_doc_complete(rec.doc_id)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for rec, batch in zip(pending, pool.map(pipeline.process, pending)):
                store.append_doc_batch(rec.doc_id, batch)
                if on_doc_complete is not None:
                    on_doc_complete(rec.doc_id)
    n_failures = sum(1 for r in store.records() if r.get("kind") == "failure")
    store.write_manifest({"finished_at": _utc_now(), "n_failures": n_failures})
    return store
