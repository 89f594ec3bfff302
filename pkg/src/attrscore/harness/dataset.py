"""Dataset ingestion with token-length filtering.

The dataset format is one JSON object per line with fields doc_id,
source_note, reference_summary, and optionally candidate_summary (used when
a run evaluates precomputed candidates instead of generating them). Source
data from access-restricted corpora is never bundled; users export their own
files into this shape, and synthetic fixtures ship with the tests.

The token filter drops records whose source note exceeds the limit. The
default counter is the ceil(chars/4) heuristic; pass any callable, or
`tiktoken_counter` for byte-pair counts when reproducing an exact subset.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError, DatasetError

TokenCounter = Callable[[str], int]

_FIELDS = {"doc_id", "source_note", "reference_summary", "candidate_summary"}


def heuristic_token_count(text: str) -> int:
    return math.ceil(len(text) / 4)


def tiktoken_counter(encoding_name: str = "cl100k_base") -> TokenCounter:
    """Byte-pair token counter; needs the optional tiktoken package."""
    try:
        import tiktoken
    except ImportError as exc:
        raise ConfigError(
            "tiktoken is not installed; install it or use the default heuristic counter"
        ) from exc
    encoding = tiktoken.get_encoding(encoding_name)
    return lambda text: len(encoding.encode(text))


@dataclass(frozen=True)
class DatasetRecord:
    doc_id: str
    source_note: str
    reference_summary: str
    token_count: int
    candidate_summary: str | None = None


@dataclass(frozen=True)
class Dataset:
    records: tuple[DatasetRecord, ...]
    n_excluded: int

    def __iter__(self) -> Iterator[DatasetRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _record_from_line(line: str, line_no: int, counter: TokenCounter) -> DatasetRecord:
    def fail(reason: str) -> DatasetError:
        return DatasetError(f"line {line_no}: {reason}")

    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise fail(f"invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise fail("record must be a JSON object")
    unknown = set(raw) - _FIELDS
    if unknown:
        raise fail(f"unknown fields: {', '.join(sorted(unknown))}")
    for name in ("doc_id", "source_note", "reference_summary"):
        if not isinstance(raw.get(name), str) or not raw[name].strip():
            raise fail(f"missing or empty field {name!r}")
    candidate = raw.get("candidate_summary")
    if candidate is not None and (not isinstance(candidate, str) or not candidate.strip()):
        raise fail("candidate_summary present but empty")
    return DatasetRecord(
        doc_id=raw["doc_id"],
        source_note=raw["source_note"],
        reference_summary=raw["reference_summary"],
        token_count=counter(raw["source_note"]),
        candidate_summary=candidate,
    )


def ingest(
    path: str | Path,
    token_limit: int = 4000,
    counter: TokenCounter = heuristic_token_count,
) -> Dataset:
    """Load a dataset file, dropping records over the token limit.

    Malformed lines and duplicate doc_ids are errors (with line numbers);
    over-limit records are silently counted, not errors.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    records: list[DatasetRecord] = []
    seen: dict[str, int] = {}
    n_excluded = 0
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = _record_from_line(line, line_no, counter)
        if record.doc_id in seen:
            raise DatasetError(
                f"line {line_no}: duplicate doc_id {record.doc_id!r} (first on line {seen[record.doc_id]})"
            )
        seen[record.doc_id] = line_no
        if record.token_count > token_limit:
            n_excluded += 1
            continue
        records.append(record)
    return Dataset(records=tuple(records), n_excluded=n_excluded)
