"""Blinded annotation sessions.

A session is built from one or more run stores: for every sampled document
and every attribute where at least one side extracted a value, one task
shows the attribute plus the two values in a seed-randomized A/B order.
Which side is the reference stays server-side; the payload a client sees
carries only the task id, the attribute, the two display values, and
progress. Absent values display as the string "NONE" so annotators can
confirm omissions.

Labels append to one JSONL file per session and are fsynced before the
submit call returns, so an acknowledged label survives a process restart.
Resubmitting overwrites the effective label but the file keeps every event,
which is the audit trail.
"""

from __future__ import annotations

import json
import os
import random
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import DatasetError
from .harness.store import RunStore
from .ontology import Ontology

LABEL_NAMES = {1: "Not similar", 2: "Somewhat similar", 3: "Very similar", 4: "Essentially the same"}
ABSENT_DISPLAY = "NONE"


@dataclass(frozen=True)
class SampleSpec:
    """Which documents become tasks: up to docs_per_run from each store
    (None means all), hard-capped at max_tasks total."""

    seed: int = 0
    docs_per_run: int | None = None
    max_tasks: int | None = None


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    run_id: str
    doc_id: str
    attribute_key: str
    attribute_name: str
    attribute_description: str
    value_a: str
    value_b: str
    reference_is_a: bool

    def client_payload(self) -> dict:
        """The blinded view: nothing that identifies the document, the
        model, or which value is the reference."""
        return {
            "task_id": self.task_id,
            "attribute_key": self.attribute_key,
            "attribute_name": self.attribute_name,
            "attribute_description": self.attribute_description,
            "value_a": self.value_a,
            "value_b": self.value_b,
        }


def _structured_pairs(store: RunStore) -> dict[str, tuple[dict, dict]]:
    """doc_id -> (reference values, candidate values) from one store."""
    ref: dict[str, dict] = {}
    cand: dict[str, dict] = {}
    for record in store.records():
        if record.get("kind") != "structured":
            continue
        target = ref if record["role"] == "reference" else cand
        target[record["doc_id"]] = record["values"]
    return {doc_id: (ref[doc_id], cand[doc_id]) for doc_id in ref if doc_id in cand}


def _display(value: str | None) -> str:
    return ABSENT_DISPLAY if value is None else value


class AnnotationSession:
    """One task set plus its label log, both on disk."""

    def __init__(self, session_dir: str | Path):
        self.session_dir = Path(session_dir)
        self.session_path = self.session_dir / "session.json"
        self.labels_path = self.session_dir / "labels.jsonl"
        self._lock = threading.Lock()
        try:
            meta = json.loads(self.session_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise DatasetError(f"cannot read session {self.session_dir}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DatasetError(f"session file {self.session_path} is corrupt: {exc.msg}") from exc
        self.session_id: str = meta["session_id"]
        self.seed: int = meta["seed"]
        self.tasks: list[AnnotationTask] = [AnnotationTask(**t) for t in meta["tasks"]]
        self._by_id = {t.task_id: t for t in self.tasks}
        # effective label per (task, annotator); the file keeps all events
        self._labels: dict[tuple[str, str], dict] = {}
        self._replay()

    # -- construction -------------------------------------------------------

    @classmethod
    def create(
        cls,
        stores: list[RunStore],
        ontology: Ontology,
        spec: SampleSpec,
        sessions_root: str | Path,
        session_id: str | None = None,
    ) -> "AnnotationSession":
        if not stores:
            raise DatasetError("create_session needs at least one run store")
        attrs = {a.key: a for a in ontology}
        rng = random.Random(spec.seed)
        tasks: list[dict] = []
        for store in stores:
            pairs = _structured_pairs(store)
            if not pairs:
                raise DatasetError(f"run {store.run_id!r} has no structured summary pairs")
            doc_ids = sorted(pairs)
            if spec.docs_per_run is not None and spec.docs_per_run < len(doc_ids):
                doc_ids = rng.sample(doc_ids, spec.docs_per_run)
            for doc_id in doc_ids:
                ref_values, cand_values = pairs[doc_id]
                for key, ref_value in ref_values.items():
                    if key not in attrs:
                        raise DatasetError(f"structured key {key!r} is not in the ontology")
                    cand_value = cand_values.get(key)
                    if ref_value is None and cand_value is None:
                        continue  # nothing to compare
                    reference_is_a = rng.random() < 0.5
                    first, second = (ref_value, cand_value) if reference_is_a else (cand_value, ref_value)
                    tasks.append(
                        {
                            "task_id": f"t{len(tasks):04d}",
                            "run_id": store.run_id,
                            "doc_id": doc_id,
                            "attribute_key": key,
                            "attribute_name": attrs[key].name,
                            "attribute_description": attrs[key].description,
                            "value_a": _display(first),
                            "value_b": _display(second),
                            "reference_is_a": reference_is_a,
                        }
                    )
        if spec.max_tasks is not None:
            tasks = tasks[: spec.max_tasks]
        if not tasks:
            raise DatasetError("session would contain no tasks")
        session_id = session_id or uuid.uuid4().hex[:12]
        session_dir = Path(sessions_root) / session_id
        session_dir.mkdir(parents=True, exist_ok=False)
        meta = {
            "session_id": session_id,
            "created_at": _utc_now(),
            "seed": spec.seed,
            "runs": [s.run_id for s in stores],
            "tasks": tasks,
        }
        (session_dir / "session.json").write_text(
            json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        return cls(session_dir)

    @classmethod
    def open(cls, sessions_root: str | Path, session_id: str) -> "AnnotationSession":
        session_dir = Path(sessions_root) / session_id
        if not (session_dir / "session.json").exists():
            raise DatasetError(f"no session {session_id!r} under {sessions_root}")
        return cls(session_dir)

    # -- labels --------------------------------------------------------------

    def _replay(self) -> None:
        if not self.labels_path.exists():
            return
        with open(self.labels_path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    continue  # a torn final write was never acknowledged
                if event.get("event") == "label" and event.get("task_id") in self._by_id:
                    self._labels[(event["task_id"], event["annotator_id"])] = event

    def next_task(self, annotator_id: str) -> AnnotationTask | None:
        if not annotator_id:
            raise ValueError("annotator_id must be non-empty")
        with self._lock:
            for task in self.tasks:
                if (task.task_id, annotator_id) not in self._labels:
                    return task
        return None

    def submit_label(self, task_id: str, annotator_id: str, label: int) -> dict:
        """Durably record one label; returns the stored event."""
        if label not in LABEL_NAMES:
            raise ValueError(f"label must be in 1..4, got {label}")
        if not annotator_id:
            raise ValueError("annotator_id must be non-empty")
        if task_id not in self._by_id:
            raise KeyError(f"unknown task_id {task_id!r}")
        with self._lock:
            prior = self._labels.get((task_id, annotator_id))
            event = {
                "event": "label",
                "task_id": task_id,
                "annotator_id": annotator_id,
                "label": label,
                "label_name": LABEL_NAMES[label],
                "submitted_at": _utc_now(),
                "prior_label": prior["label"] if prior else None,
            }
            line = json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n"
            with open(self.labels_path, "ab") as f:
                f.write(line.encode("utf-8"))
                f.flush()
                os.fsync(f.fileno())
            self._labels[(task_id, annotator_id)] = event
        return event

    def progress(self) -> dict:
        with self._lock:
            per_annotator: dict[str, int] = {}
            for (_, annotator_id) in self._labels:
                per_annotator[annotator_id] = per_annotator.get(annotator_id, 0) + 1
        return {"total_tasks": len(self.tasks), "annotators": dict(sorted(per_annotator.items()))}

    def export(self, blinded: bool = False) -> dict:
        """Effective labels joined with task identity.

        With blinded=True the reference-side mapping is stripped so the
        export can be shared without unblinding anyone.
        """
        records = []
        with self._lock:
            effective = dict(self._labels)
        for task in self.tasks:
            for (task_id, annotator_id), event in sorted(effective.items()):
                if task_id != task.task_id:
                    continue
                record = {
                    "run_id": task.run_id,
                    "doc_id": task.doc_id,
                    "attribute_key": task.attribute_key,
                    "annotator_id": annotator_id,
                    "label": event["label"],
                    "label_name": event["label_name"],
                    "submitted_at": event["submitted_at"],
                }
                if not blinded:
                    record["reference_is_a"] = task.reference_is_a
                records.append(record)
        n_labeled = len({t for (t, _) in effective})
        completeness = 100.0 * n_labeled / len(self.tasks) if self.tasks else 0.0
        return {
            "records": records,
            "n_tasks": len(self.tasks),
            "n_labels": len(records),
            "completeness": completeness,
        }


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
