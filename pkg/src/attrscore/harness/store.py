"""Append-only persistence for benchmark runs.

A run directory holds two files:

    runs/<run_id>/records.jsonl   one canonical-JSON record per line
    runs/<run_id>/manifest.json   run config, wall-clock times, call stats

Records for one document are appended as a single batch ending in a
``doc_complete`` marker, and `recover` truncates anything after the last
marker, so a resumed run continues exactly where a complete document batch
ended and the final file is byte-identical to an uninterrupted run. All
wall-clock data lives in the manifest; record lines are pure functions of
the run inputs, which is what makes replay comparison byte-exact.
"""

from __future__ import annotations

import json
import os
import threading
from collections.abc import Iterable, Iterator
from pathlib import Path

from ..errors import DatasetError

DOC_COMPLETE = "doc_complete"


def canonical_line(record: dict) -> str:
    """One record as canonical JSON: sorted keys, compact, UTF-8 verbatim."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


class RunStore:
    """Record log plus manifest for one run id under a runs root."""

    def __init__(self, runs_root: str | Path, run_id: str):
        if not run_id or any(sep in run_id for sep in ("/", "\\", "..")):
            raise ValueError(f"run_id {run_id!r} is not filesystem-safe")
        self.run_id = run_id
        self.run_dir = Path(runs_root) / run_id
        self.records_path = self.run_dir / "records.jsonl"
        self.manifest_path = self.run_dir / "manifest.json"
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # -- record log --------------------------------------------------------

    def append_doc_batch(self, doc_id: str, records: Iterable[dict]) -> None:
        """Append one document's records plus its completion marker.

        The batch is flushed and fsynced as one write, so a crash can only
        lose or truncate the in-flight document, never a completed one.
        """
        lines = []
        for record in records:
            if record.get("doc_id") != doc_id:
                raise ValueError(f"record doc_id {record.get('doc_id')!r} != batch doc_id {doc_id!r}")
            if record.get("kind") == DOC_COMPLETE:
                raise ValueError("doc_complete markers are written by the store itself")
            lines.append(canonical_line(record))
        lines.append(canonical_line({"kind": DOC_COMPLETE, "doc_id": doc_id}))
        blob = "".join(lines).encode("utf-8")
        with self._lock:
            with open(self.records_path, "ab") as f:
                f.write(blob)
                f.flush()
                os.fsync(f.fileno())

    def records(self) -> Iterator[dict]:
        """All records currently on disk, in write order."""
        if not self.records_path.exists():
            return
        with open(self.records_path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DatasetError(
                        f"{self.records_path} line {line_no} is not valid JSON: {exc.msg}"
                    ) from exc

    def completed_docs(self) -> set[str]:
        return {r["doc_id"] for r in self.records() if r.get("kind") == DOC_COMPLETE}

    def recover(self) -> int:
        """Truncate any partial tail after the last doc_complete marker.

        Returns the number of bytes dropped. Safe to call on a healthy file
        (drops zero bytes) or a missing one.
        """
        if not self.records_path.exists():
            return 0
        data = self.records_path.read_bytes()
        keep = 0
        offset = 0
        for raw in data.split(b"\n"):
            end = offset + len(raw) + 1  # +1 for the newline
            if end > len(data):
                break  # trailing partial line
            try:
                record = json.loads(raw.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                record = None
            if isinstance(record, dict) and record.get("kind") == DOC_COMPLETE:
                keep = end
            offset = end
        dropped = len(data) - keep
        if dropped:
            with self._lock, open(self.records_path, "r+b") as f:
                f.truncate(keep)
        return dropped

    # -- manifest -----------------------------------------------------------

    def write_manifest(self, payload: dict) -> None:
        """Merge payload into the manifest (atomic replace)."""
        manifest = self.read_manifest() or {}
        manifest.update(payload)
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.manifest_path)

    def read_manifest(self) -> dict | None:
        try:
            return json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{self.manifest_path} is corrupt: {exc.msg}") from exc
