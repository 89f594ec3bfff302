"""Report rendering over run stores.

Four reports:

* `matrix_report` - generators x scorers grid of mean normalized scores
  (plus an AVG column), for comparing generation models under several
  evaluators at once.
* `main_report` - the agreement table relating automated scorers to human
  labels: rows are scorers, columns RMSE / Pearson / Spearman, each cell a
  Default-mode and an AS-mode value.
* `attribute_distribution_report` - per-attribute score histograms and the
  best/worst attributes by mean.
* `grounding_audit` - one document's side-by-side extracted values, spans,
  and verification statuses.

Everything renders to both aligned text and CSV. Cells whose statistic is
undefined (constant series, no data) render as "n/a" rather than a number.

Conventions: scores are normalized to 0-100 in the matrix (a metric scorer
contributes its AS-mode mean, the mode this pipeline is about); agreement
statistics run on [0, 1]-scaled series, with human labels mapped by
(label-1)/3. The LLM row of the main report pairs Default mode with the
holistic scorer of the same provider.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from ..errors import DatasetError, UndefinedStatError
from ..stats import PairKey, RatingMatrix, align, pearson, rmse, spearman, to_unit
from .store import RunStore

_NA = "n/a"


# ---------------------------------------------------------------------------
# Table rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Table:
    """Formatted cells ready for text or CSV output; first column is the
    row label."""

    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    title: str = ""

    def render_text(self) -> str:
        widths = [len(c) for c in self.columns]
        for row in self.rows:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        def line(cells: tuple[str, ...]) -> str:
            first = cells[0].ljust(widths[0])
            rest = [c.rjust(widths[i + 1]) for i, c in enumerate(cells[1:])]
            return "  ".join([first, *rest]).rstrip()
        out = []
        if self.title:
            out.append(self.title)
        out.append(line(self.columns))
        out.append("  ".join("-" * w for w in widths))
        out.extend(line(row) for row in self.rows)
        return "\n".join(out) + "\n"

    def render_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()


def _fmt(value: float | None, precision: int = 3) -> str:
    return _NA if value is None else f"{value:.{precision}f}"


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


# ---------------------------------------------------------------------------
# Store access helpers
# ---------------------------------------------------------------------------


def _by_kind(store: RunStore) -> dict[str, list[dict]]:
    index: dict[str, list[dict]] = defaultdict(list)
    for record in store.records():
        index[record.get("kind", "")].append(record)
    return index


def _doc_normalized(index: dict[str, list[dict]], scorer: str) -> dict[str, float | None]:
    """Per-document normalized score (0-100) for one scorer, any kind."""
    out: dict[str, float | None] = {}
    for kind in ("summary_score", "holistic", "metric_summary"):
        for record in index[kind]:
            if record["scorer"] == scorer:
                out[record["doc_id"]] = record["normalized"]
    return out


# ---------------------------------------------------------------------------
# Matrix report (generators x scorers)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixReport:
    generators: tuple[str, ...]
    scorers: tuple[str, ...]  # without AVG; to_table appends it
    values: tuple[tuple[float | None, ...], ...]  # rows x (scorers + AVG)

    def cell(self, generator: str, scorer: str) -> float | None:
        columns = self.scorers + ("AVG",)
        return self.values[self.generators.index(generator)][columns.index(scorer)]

    def to_table(self) -> Table:
        rows = tuple(
            (gen, *(_fmt(v, 2) for v in row)) for gen, row in zip(self.generators, self.values)
        )
        return Table(columns=("generator", *self.scorers, "AVG"), rows=rows, title="")


def matrix_report(stores: list[RunStore]) -> MatrixReport:
    """Mean normalized score per (generator, scorer) over shared documents.

    All stores must come from runs over the same dataset and structurer with
    the same scorer list; documents whose score is undefined (every
    attribute skipped) are excluded from that cell's mean.
    """
    if not stores:
        raise ValueError("matrix_report needs at least one store")
    manifests = []
    for store in stores:
        manifest = store.read_manifest()
        if manifest is None or "config" not in manifest:
            raise DatasetError(f"run {store.run_id!r} has no manifest")
        manifests.append(manifest)
    first = manifests[0]["config"]
    for manifest in manifests[1:]:
        config = manifest["config"]
        for field_name in ("dataset_path", "structurer", "scorers"):
            if config[field_name] != first[field_name]:
                raise ValueError(
                    f"stores disagree on {field_name}: {config[field_name]!r} vs {first[field_name]!r}"
                )
    scorers = tuple(first["scorers"])
    generators = []
    for manifest in manifests:
        label = manifest["config"]["generator"]
        if label in generators:
            label = f"{label} ({manifest['run_id']})"
        generators.append(label)
    rows = []
    for store in stores:
        index = _by_kind(store)
        row: list[float | None] = []
        for scorer in scorers:
            per_doc = _doc_normalized(index, scorer)
            row.append(_mean([v for v in per_doc.values() if v is not None]))
        present = [v for v in row if v is not None]
        row.append(_mean(present))
        rows.append(tuple(row))
    return MatrixReport(generators=tuple(generators), scorers=scorers, values=tuple(rows))


# ---------------------------------------------------------------------------
# Human labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelRecord:
    doc_id: str
    attribute_key: str
    annotator_id: str
    label: int

    def __post_init__(self) -> None:
        if self.label not in (1, 2, 3, 4):
            raise ValueError(f"label must be 1..4, got {self.label}")


def load_labels(path: str | Path) -> list[LabelRecord]:
    """Read an annotation export (JSONL) into label records."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read labels {path}: {exc}") from exc
    records = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path} line {line_no}: invalid JSON ({exc.msg})") from exc
        try:
            records.append(
                LabelRecord(
                    doc_id=raw["doc_id"],
                    attribute_key=raw["attribute_key"],
                    annotator_id=raw["annotator_id"],
                    label=int(raw["label"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path} line {line_no}: {exc}") from exc
    if not records:
        raise DatasetError(f"no label records in {path}")
    return records


def _labels_by_pair(labels: list[LabelRecord]) -> dict[PairKey, list[float]]:
    grouped: dict[PairKey, list[float]] = defaultdict(list)
    for record in labels:
        grouped[(record.doc_id, record.attribute_key)].append(float(record.label))
    return dict(grouped)


def fleiss_matrix(labels: list[LabelRecord]) -> tuple[RatingMatrix, int]:
    """Rating matrix over items labeled by every annotator in the export.

    Items labeled by only a subset are dropped (kappa needs a constant rater
    count); the second return value counts them.
    """
    annotators = {record.annotator_id for record in labels}
    per_item: dict[PairKey, dict[str, int]] = defaultdict(dict)
    for record in labels:
        per_item[(record.doc_id, record.attribute_key)][record.annotator_id] = record.label
    rows = []
    n_dropped = 0
    for key in sorted(per_item):
        item = per_item[key]
        if set(item) != annotators:
            n_dropped += 1
            continue
        row = [0, 0, 0, 0]
        for label in item.values():
            row[label - 1] += 1
        rows.append(tuple(row))
    if not rows:
        raise DatasetError("no item was labeled by every annotator; kappa needs complete items")
    return RatingMatrix(tuple(rows)), n_dropped


# ---------------------------------------------------------------------------
# Main agreement report (Default / AS vs human labels)
# ---------------------------------------------------------------------------

_METRIC_SCORER_KINDS = ("rouge1", "rougeL", "embed_match")


@dataclass(frozen=True)
class AgreementCell:
    default: float | None
    as_mode: float | None


@dataclass(frozen=True)
class MainReport:
    """Rows: scorers. Columns: RMSE, Pearson, Spearman. Each cell holds the
    Default-mode and AS-mode values; None where undefined or inapplicable."""

    scorers: tuple[str, ...]
    cells: dict[tuple[str, str], AgreementCell]  # (scorer, statistic) -> cell
    n_as_pairs: int
    n_default_docs: int

    statistics = ("RMSE", "Pearson", "Spearman")

    def to_table(self) -> Table:
        rows = []
        for scorer in self.scorers:
            cells = []
            for statistic in self.statistics:
                cell = self.cells[(scorer, statistic)]
                cells.append(f"{_fmt(cell.default)} / {_fmt(cell.as_mode)}")
            rows.append((scorer, *cells))
        return Table(
            columns=("scorer", *[f"{s} (default / AS)" for s in self.statistics]),
            rows=tuple(rows),
            title=f"Agreement with human labels ({self.n_default_docs} documents, {self.n_as_pairs} attribute pairs)",
        )


def _safe_stats(human: list[float], auto: list[float]) -> dict[str, float | None]:
    out: dict[str, float | None] = {}
    try:
        out["RMSE"] = rmse(human, auto)
    except ValueError:
        out["RMSE"] = None
    for name, fn in (("Pearson", pearson), ("Spearman", spearman)):
        try:
            out[name] = fn(human, auto)
        except (UndefinedStatError, ValueError):
            out[name] = None
    return out


def _as_series(index: dict[str, list[dict]], scorer_name: str, kind: str) -> dict[PairKey, float | None]:
    """Per-(doc, attribute) AS-mode values on the [0, 1] scale."""
    series: dict[PairKey, float | None] = {}
    if kind == "llm":
        for record in index["attribute_score"]:
            if record["scorer"] != scorer_name:
                continue
            score = record["score"]
            series[(record["doc_id"], record["attribute_key"])] = (
                None if score is None else (score - 1) / 3
            )
    else:
        for record in index["metric_attr"]:
            if record["scorer"] != scorer_name:
                continue
            series[(record["doc_id"], record["attribute_key"])] = record["value"]
    return series


def _default_series(index: dict[str, list[dict]], scorer_name: str, kind: str) -> dict[str, float]:
    """Per-document Default-mode values on the [0, 1] scale."""
    series: dict[str, float] = {}
    if kind == "holistic":
        for record in index["holistic"]:
            if record["scorer"] == scorer_name:
                series[record["doc_id"]] = (record["score"] - 1) / 9
    else:
        for record in index["metric_default"]:
            if record["scorer"] == scorer_name:
                series[record["doc_id"]] = record["f1"]
    return series


def main_report(store: RunStore, labels: list[LabelRecord]) -> MainReport:
    """Agreement of every scorer in the store against human labels.

    AS mode joins per-attribute scores with per-attribute human means;
    Default mode joins per-document values (metric on whole summaries, or
    the holistic score for the LLM row) with per-document human means.
    """
    manifest = store.read_manifest()
    if manifest is None or "config" not in manifest:
        raise DatasetError(f"run {store.run_id!r} has no manifest")
    scorer_names: list[str] = manifest["config"]["scorers"]
    index = _by_kind(store)
    human_pairs = _labels_by_pair(labels)

    # Human series: per attribute pair, and per document (mean of its pairs).
    human_attr = {key: to_unit([_mean(v)], "four_point")[0] for key, v in human_pairs.items()}
    by_doc: dict[str, list[float]] = defaultdict(list)
    for (doc_id, _), value in human_attr.items():
        by_doc[doc_id].append(value)
    human_doc = {doc_id: _mean(vs) for doc_id, vs in by_doc.items()}

    # Row layout: metric kinds keep their names; llm/holistic pairs merge
    # into one row per provider (holistic is that row's Default mode).
    llm_by_provider: dict[str, str] = {}
    holistic_by_provider: dict[str, str] = {}
    metric_rows: list[str] = []
    for name in scorer_names:
        kind, _, provider = name.partition("@")
        if kind == "llm":
            llm_by_provider[provider] = name
        elif kind == "holistic":
            holistic_by_provider[provider] = name
        else:
            metric_rows.append(name)

    rows: list[tuple[str, str | None, str | None]] = []  # (label, default scorer, as scorer)
    for name in metric_rows:
        rows.append((name, name, name))
    providers = sorted(set(llm_by_provider) | set(holistic_by_provider))
    for provider in providers:
        label = "llm" if len(providers) == 1 else f"llm@{provider}"
        rows.append((label, holistic_by_provider.get(provider), llm_by_provider.get(provider)))

    cells: dict[tuple[str, str], AgreementCell] = {}
    n_as_pairs = 0
    n_default_docs = 0
    for label, default_name, as_name in rows:
        # AS mode: per-attribute join.
        as_stats: dict[str, float | None] = {"RMSE": None, "Pearson": None, "Spearman": None}
        if as_name is not None:
            kind = as_name.partition("@")[0]
            auto = _as_series(index, as_name, kind)
            try:
                joined = align(human_pairs, auto)
                human_series = to_unit(joined.human, "four_point")
                as_stats = _safe_stats(human_series, list(joined.auto))
                n_as_pairs = max(n_as_pairs, len(joined))
            except DatasetError:
                pass
        # Default mode: per-document join.
        default_stats: dict[str, float | None] = {"RMSE": None, "Pearson": None, "Spearman": None}
        if default_name is not None:
            kind = default_name.partition("@")[0]
            auto_doc = _default_series(index, default_name, kind)
            shared = sorted(set(human_doc) & set(auto_doc))
            if shared:
                human_series = [human_doc[d] for d in shared]
                auto_series = [auto_doc[d] for d in shared]
                default_stats = _safe_stats(human_series, auto_series)
                n_default_docs = max(n_default_docs, len(shared))
        for statistic in MainReport.statistics:
            cells[(label, statistic)] = AgreementCell(
                default=default_stats[statistic], as_mode=as_stats[statistic]
            )
    return MainReport(
        scorers=tuple(label for label, _, _ in rows),
        cells=cells,
        n_as_pairs=n_as_pairs,
        n_default_docs=n_default_docs,
    )


# ---------------------------------------------------------------------------
# Attribute distribution report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttributeDistribution:
    attribute_key: str
    histogram: dict[int, int]  # score 1..4 -> count (LLM scorers)
    n_skipped: int
    mean: float | None  # None marks a no-data attribute
    metric_means: dict[str, float | None]  # metric scorer -> mean AS value


@dataclass(frozen=True)
class DistributionReport:
    attributes: tuple[AttributeDistribution, ...]
    best: str | None
    worst: str | None

    def to_table(self) -> Table:
        metric_names = sorted({m for a in self.attributes for m in a.metric_means})
        columns = ("attribute", "1", "2", "3", "4", "skipped", "mean", *metric_names)
        rows = []
        for attr in self.attributes:
            rows.append(
                (
                    attr.attribute_key,
                    *(str(attr.histogram[s]) for s in (1, 2, 3, 4)),
                    str(attr.n_skipped),
                    _fmt(attr.mean, 2),
                    *(_fmt(attr.metric_means[m]) for m in metric_names),
                )
            )
        title = ""
        if self.best is not None:
            title = f"Best attribute by mean: {self.best}; worst: {self.worst}"
        return Table(columns=columns, rows=tuple(rows), title=title)


def attribute_distribution_report(store: RunStore) -> DistributionReport:
    """Score histograms per attribute, pooled over the store's LLM scorers."""
    index = _by_kind(store)
    if not index["attribute_score"] and not index["metric_attr"]:
        raise DatasetError(f"run {store.run_id!r} has no AS-mode records")
    order: list[str] = []
    histogram: dict[str, dict[int, int]] = {}
    skips: dict[str, int] = defaultdict(int)
    for record in index["attribute_score"]:
        key = record["attribute_key"]
        if key not in histogram:
            order.append(key)
            histogram[key] = {1: 0, 2: 0, 3: 0, 4: 0}
        if record["score"] is None:
            skips[key] += 1
        else:
            histogram[key][record["score"]] += 1
    metric_values: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for record in index["metric_attr"]:
        key = record["attribute_key"]
        if key not in histogram:
            order.append(key)
            histogram[key] = {1: 0, 2: 0, 3: 0, 4: 0}
        if record["value"] is not None:
            metric_values[key][record["scorer"]].append(record["value"])
    metric_names = sorted({m for per in metric_values.values() for m in per})
    attributes = []
    for key in order:
        counts = histogram[key]
        n = sum(counts.values())
        mean = sum(s * c for s, c in counts.items()) / n if n else None
        attributes.append(
            AttributeDistribution(
                attribute_key=key,
                histogram=counts,
                n_skipped=skips[key],
                mean=mean,
                metric_means={m: _mean(metric_values[key][m]) for m in metric_names},
            )
        )
    with_data = [a for a in attributes if a.mean is not None]
    best = max(with_data, key=lambda a: a.mean).attribute_key if with_data else None
    worst = min(with_data, key=lambda a: a.mean).attribute_key if with_data else None
    return DistributionReport(attributes=tuple(attributes), best=best, worst=worst)


# ---------------------------------------------------------------------------
# Grounding audit (side-by-side spans for one document)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundingAuditRow:
    attribute_key: str
    ref_extracted: str | None
    ref_span: str | None
    ref_status: str | None
    cand_extracted: str | None
    cand_span: str | None
    cand_status: str | None
    pair_score: int | None


def grounding_audit(store: RunStore, doc_id: str) -> list[GroundingAuditRow]:
    """Join one document's grounding records (both sides) with pair scores."""
    index = _by_kind(store)
    sides: dict[str, dict[str, dict]] = {"reference": {}, "candidate": {}}
    order: list[str] = []
    for record in index["grounding"]:
        if record["doc_id"] != doc_id:
            continue
        key = record["attribute_key"]
        if key not in order:
            order.append(key)
        sides[record["role"]][key] = record
    scores: dict[str, int | None] = {}
    for record in index["attribute_score"]:
        if record["doc_id"] == doc_id:
            scores.setdefault(record["attribute_key"], record["score"])
            if record["attribute_key"] not in order:
                order.append(record["attribute_key"])
    if not order:
        raise DatasetError(f"no grounding or scoring records for doc {doc_id!r}")
    rows = []
    for key in order:
        ref = sides["reference"].get(key)
        cand = sides["candidate"].get(key)
        rows.append(
            GroundingAuditRow(
                attribute_key=key,
                ref_extracted=ref["extracted"] if ref else None,
                ref_span=ref["span"] if ref else None,
                ref_status=ref["status"] if ref else None,
                cand_extracted=cand["extracted"] if cand else None,
                cand_span=cand["span"] if cand else None,
                cand_status=cand["status"] if cand else None,
                pair_score=scores.get(key),
            )
        )
    return rows


def render_grounding_audit(rows: list[GroundingAuditRow], doc_id: str) -> str:
    out = [f"Grounding audit for document {doc_id}"]
    for row in rows:
        score = "-" if row.pair_score is None else str(row.pair_score)
        out.append("")
        out.append(f"[{row.attribute_key}]  pair score: {score}")
        for side, extracted, span, status in (
            ("reference", row.ref_extracted, row.ref_span, row.ref_status),
            ("candidate", row.cand_extracted, row.cand_span, row.cand_status),
        ):
            if extracted is None:
                out.append(f"  {side:<9} (absent)")
            else:
                out.append(f"  {side:<9} value: {extracted}")
                out.append(f"            span [{status}]: {span or '-'}")
    return "\n".join(out) + "\n"
