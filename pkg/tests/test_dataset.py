import json

import pytest

from attrscore.errors import DatasetError
from attrscore.harness.dataset import DatasetRecord, heuristic_token_count, ingest
from tests.conftest import FIXTURES


def write_jsonl(tmp_path, records, name="data.jsonl"):
    path = tmp_path / name
    with path.open("w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    return path


def record(doc_id="d1", **kw):
    base = dict(doc_id=doc_id, source_note="note text", reference_summary="ref text")
    base.update(kw)
    return base


def test_heuristic_token_count_is_ceil_of_quarter_chars():
    assert heuristic_token_count("") == 0
    assert heuristic_token_count("abcd") == 1
    assert heuristic_token_count("abcde") == 2
    assert heuristic_token_count("x" * 4000 * 4) == 4000


def test_ingest_bundled_fixture_has_five_documents():
    dataset = ingest(FIXTURES / "dataset.jsonl", token_limit=4000)
    assert len(dataset) == 5
    assert dataset.n_excluded == 0
    ids = [r.doc_id for r in dataset]
    assert len(set(ids)) == 5
    for r in dataset:
        assert isinstance(r, DatasetRecord)
        assert r.candidate_summary


def test_ingest_excludes_documents_over_token_limit(tmp_path):
    path = write_jsonl(
        tmp_path,
        [
            record("short"),
            record("long", source_note="w" * 100),
        ],
    )
    dataset = ingest(path, token_limit=10)
    assert [r.doc_id for r in dataset] == ["short"]
    assert dataset.n_excluded == 1


def test_ingest_token_count_recorded(tmp_path):
    path = write_jsonl(tmp_path, [record(source_note="abcdefgh")])
    (rec,) = ingest(path, token_limit=100)
    assert rec.token_count == 2


def test_ingest_duplicate_doc_id_names_both_lines(tmp_path):
    path = write_jsonl(tmp_path, [record("dup"), record("other"), record("dup")])
    with pytest.raises(DatasetError) as exc:
        ingest(path, token_limit=100)
    message = str(exc.value)
    assert "dup" in message and "line 1" in message and "line 3" in message


def test_ingest_unknown_field_rejected_with_line_number(tmp_path):
    path = write_jsonl(tmp_path, [record(), {**record("d2"), "extra": 1}])
    with pytest.raises(DatasetError, match="line 2"):
        ingest(path, token_limit=100)


def test_ingest_missing_required_field(tmp_path):
    path = write_jsonl(tmp_path, [{"doc_id": "x", "source_note": "n"}])
    with pytest.raises(DatasetError, match="reference_summary"):
        ingest(path, token_limit=100)


def test_ingest_empty_candidate_rejected(tmp_path):
    path = write_jsonl(tmp_path, [record(candidate_summary="  ")])
    with pytest.raises(DatasetError, match="candidate_summary"):
        ingest(path, token_limit=100)


def test_ingest_malformed_line_reports_position(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(record()) + "\n{torn\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="line 2"):
        ingest(path, token_limit=100)


def test_ingest_blank_lines_are_tolerated(tmp_path):
    path = tmp_path / "gaps.jsonl"
    path.write_text(json.dumps(record()) + "\n\n" + json.dumps(record("d2")) + "\n", encoding="utf-8")
    dataset = ingest(path, token_limit=100)
    assert [r.doc_id for r in dataset] == ["d1", "d2"]


def test_ingest_missing_file_is_dataset_error(tmp_path):
    with pytest.raises(DatasetError):
        ingest(tmp_path / "gone.jsonl", token_limit=100)


def test_ingest_custom_counter(tmp_path):
    path = write_jsonl(tmp_path, [record("a"), record("b", source_note="xx")])
    dataset = ingest(path, token_limit=5, counter=lambda text: len(text))
    assert [r.doc_id for r in dataset] == ["b"]
    assert dataset.n_excluded == 1
