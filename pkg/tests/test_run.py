import json

import pytest

from attrscore.errors import ConfigError
from attrscore.gateway import UNLIMITED_RPM, Gateway, ModelRef, ProviderConfig, mock_gateway
from attrscore.harness.run import (
    PRECOMPUTED,
    RunConfig,
    ScorerSpec,
    load_run_configs,
    run,
)
from attrscore.harness.store import RunStore
from tests.conftest import STANDARD_SCORERS, standard_config


# --- ScorerSpec -----------------------------------------------------------------


def test_scorer_spec_parse_forms():
    llm = ScorerSpec.parse("llm@gpt4:gpt-4-0613")
    assert llm.kind == "llm"
    assert llm.provider == ModelRef("gpt4", "gpt-4-0613")
    assert llm.name == "llm@gpt4:gpt-4-0613"
    assert ScorerSpec.parse("rougeL").name == "rougeL"
    assert ScorerSpec.parse("holistic@mock").provider == ModelRef("mock", "default")


def test_scorer_spec_validation():
    with pytest.raises(ConfigError):
        ScorerSpec.parse("llm")  # model kind without provider
    with pytest.raises(ConfigError):
        ScorerSpec.parse("rouge1@mock")  # metric kind with provider
    with pytest.raises(ConfigError):
        ScorerSpec.parse("bleu")  # unknown kind


# --- RunConfig -------------------------------------------------------------------


def test_run_config_round_trips_through_dict(dataset_path):
    config = standard_config(dataset_path, generator="mock", seed=3, workers=2, ground=False)
    again = RunConfig.from_dict(config.to_dict())
    assert again == config


def test_run_config_rejects_duplicate_scorers(dataset_path):
    with pytest.raises(ConfigError, match="duplicate"):
        standard_config(dataset_path, scorers=(ScorerSpec.parse("rouge1"), ScorerSpec.parse("rouge1")))


def test_run_config_rejects_unknown_fields(dataset_path):
    payload = standard_config(dataset_path).to_dict()
    payload["scoring_mode"] = "fast"
    with pytest.raises(ConfigError, match="scoring_mode"):
        RunConfig.from_dict(payload)


def test_run_config_requires_scorers(dataset_path):
    with pytest.raises(ConfigError):
        standard_config(dataset_path, scorers=())


def test_load_run_configs_single_and_list(tmp_path, dataset_path):
    single = standard_config(dataset_path).to_dict()
    path = tmp_path / "one.json"
    path.write_text(json.dumps(single), encoding="utf-8")
    assert len(load_run_configs(path)) == 1

    multi = {"runs": [single, {**single, "run_id": "other"}]}
    path2 = tmp_path / "many.json"
    path2.write_text(json.dumps(multi), encoding="utf-8")
    assert [c.run_id for c in load_run_configs(path2)] == ["std", "other"]


def test_load_run_configs_duplicate_run_ids_rejected(tmp_path, dataset_path):
    single = standard_config(dataset_path).to_dict()
    path = tmp_path / "dup.json"
    path.write_text(json.dumps({"runs": [single, single]}), encoding="utf-8")
    with pytest.raises(ConfigError, match="duplicate"):
        load_run_configs(path)


# --- full runs ----------------------------------------------------------------------


def expected_kind_counts(n_docs, n_attrs, n_present_pairs, n_present_values):
    return {
        "candidate": n_docs,
        "structured": 2 * n_docs,
        "attribute_score": n_docs * n_attrs,
        "summary_score": n_docs,
        "holistic": n_docs,
        "metric_attr": 2 * n_docs * n_attrs,  # rougeL and embed_match
        "metric_summary": 2 * n_docs,
        "metric_default": 2 * n_docs,
        "grounding": n_present_values,
        "doc_complete": n_docs,
    }


def test_standard_run_record_inventory(completed_run, ontology):
    counts: dict = {}
    present_values = 0
    for record in completed_run.records():
        counts[record["kind"]] = counts.get(record["kind"], 0) + 1
        if record["kind"] == "structured":
            present_values += sum(1 for v in record["values"].values() if v is not None)
    expected = expected_kind_counts(5, len(ontology), None, present_values)
    assert counts == expected
    assert "failure" not in counts


def test_run_manifest_contents(completed_run):
    manifest = completed_run.read_manifest()
    assert manifest["run_id"] == "std"
    assert manifest["n_documents"] == 5
    assert manifest["n_failures"] == 0
    assert manifest["n_excluded"] == 0
    assert manifest["config"]["scorers"] == [s.name for s in STANDARD_SCORERS]
    assert "started_at" in manifest and "finished_at" in manifest
    assert "toolkit_version" in manifest


def test_model_records_carry_provenance(completed_run):
    for record in completed_run.records():
        if record["kind"] in ("structured", "holistic", "grounding"):
            prov = record["provenance"]
            assert set(prov) == {"cache_key", "provider", "model"}
            assert len(prov["cache_key"]) == 64
        elif record["kind"] == "attribute_score":
            if record["score"] is not None and record.get("skip_reason") is None:
                # either a real model call (provenance) or a local one-absent rule
                assert record["provenance"] is None or set(record["provenance"]) == {
                    "cache_key",
                    "provider",
                    "model",
                }


def test_grounding_records_only_for_present_values(completed_run):
    present: set = set()
    grounded: set = set()
    for record in completed_run.records():
        if record["kind"] == "structured":
            for key, value in record["values"].items():
                if value is not None:
                    present.add((record["doc_id"], record["role"], key))
        elif record["kind"] == "grounding":
            grounded.add((record["doc_id"], record["role"], record["attribute_key"]))
    assert grounded == present


def test_cold_cache_runs_are_byte_identical(tmp_path, ontology, dataset_path):
    config = standard_config(dataset_path)
    a = run(config, mock_gateway(tmp_path / "cache-a"), ontology, runs_root=tmp_path / "runs-a")
    b = run(config, mock_gateway(tmp_path / "cache-b"), ontology, runs_root=tmp_path / "runs-b")
    assert a.records_path.read_bytes() == b.records_path.read_bytes()


def test_workers_do_not_change_bytes(tmp_path, ontology, dataset_path):
    serial = run(
        standard_config(dataset_path),
        mock_gateway(None),
        ontology,
        runs_root=tmp_path / "runs-serial",
    )
    threaded = run(
        standard_config(dataset_path, workers=4),
        mock_gateway(None),
        ontology,
        runs_root=tmp_path / "runs-threaded",
    )
    assert serial.records_path.read_bytes() == threaded.records_path.read_bytes()


class StopRun(Exception):
    pass


def test_interrupt_resume_is_byte_identical(tmp_path, ontology, dataset_path):
    config = standard_config(dataset_path)
    full = run(config, mock_gateway(None), ontology, runs_root=tmp_path / "runs-full")

    seen = []

    def interrupt(doc_id):
        seen.append(doc_id)
        if len(seen) == 2:
            raise StopRun

    with pytest.raises(StopRun):
        run(
            config,
            mock_gateway(None),
            ontology,
            runs_root=tmp_path / "runs-resumed",
            on_doc_complete=interrupt,
        )
    interrupted = RunStore(tmp_path / "runs-resumed", config.run_id)
    assert len(interrupted.completed_docs()) == 2

    resumed = run(config, mock_gateway(None), ontology, runs_root=tmp_path / "runs-resumed")
    assert resumed.records_path.read_bytes() == full.records_path.read_bytes()
    assert resumed.read_manifest()["n_resumed"] == 2


def test_resume_skips_completed_documents_without_model_calls(tmp_path, ontology, dataset_path):
    config = standard_config(dataset_path)
    gw1 = mock_gateway(None)
    run(config, gw1, ontology, runs_root=tmp_path / "runs")
    gw2 = mock_gateway(None)
    run(config, gw2, ontology, runs_root=tmp_path / "runs")
    assert gw2.call_count() == 0


def test_resume_recovers_torn_tail(tmp_path, ontology, dataset_path):
    config = standard_config(dataset_path)
    full = run(config, mock_gateway(None), ontology, runs_root=tmp_path / "runs-full")

    target = tmp_path / "runs-torn"
    store = run(config, mock_gateway(None), ontology, runs_root=target)
    # chop the file mid-record: simulates a crash during an append
    data = store.records_path.read_bytes()
    store.records_path.write_bytes(data[: int(len(data) * 0.83)])

    resumed = run(config, mock_gateway(None), ontology, runs_root=target)
    assert resumed.records_path.read_bytes() == full.records_path.read_bytes()


def test_generated_candidates_via_generator_provider(tmp_path, ontology, dataset_path):
    config = standard_config(dataset_path, run_id="gen", generator="mock", ground=False)
    store = run(config, mock_gateway(None), ontology, runs_root=tmp_path / "runs")
    candidates = [r for r in store.records() if r["kind"] == "candidate"]
    assert len(candidates) == 5
    for record in candidates:
        assert record["generator"] == "mock"
        assert record["provenance"] is not None
        assert "[[main_diag]]" in record["text"]


def test_precomputed_requires_candidate_summary(tmp_path, ontology):
    data = tmp_path / "nocand.jsonl"
    data.write_text(
        json.dumps({"doc_id": "d1", "source_note": "[[main_diag]] flu\n", "reference_summary": "[[main_diag]] flu\n"})
        + "\n",
        encoding="utf-8",
    )
    config = standard_config(data, run_id="nocand", scorers=(ScorerSpec.parse("rouge1"),), ground=False)
    store = run(config, mock_gateway(None), ontology, runs_root=tmp_path / "runs")
    failures = [r for r in store.records() if r["kind"] == "failure"]
    assert len(failures) == 1
    assert failures[0]["stage"] == "candidate"
    assert store.read_manifest()["n_failures"] == 1


def test_failure_isolates_document_and_run_continues(tmp_path, ontology, dataset_path):
    def brittle(request):
        from attrscore.gateway import MockProvider

        # precomputed runs embed summary text, not notes; key on cel-005's reference
        if "Left lower extremity cellulitis" in request.user_text:
            raise RuntimeError("synthetic provider crash")
        return MockProvider()(request)

    gw = Gateway(cache_dir=None)
    gw.register(
        ProviderConfig(provider_id="mock", kind="mock", requests_per_minute=UNLIMITED_RPM),
        impl=brittle,
    )
    config = standard_config(dataset_path)
    store = run(config, gw, ontology, runs_root=tmp_path / "runs")
    failures = [r for r in store.records() if r["kind"] == "failure"]
    assert len(failures) == 1
    assert failures[0]["doc_id"] == "cel-005"
    assert failures[0]["error_type"] == "RuntimeError"
    assert store.read_manifest()["n_failures"] == 1
    # the other four documents completed normally
    ok_docs = {r["doc_id"] for r in store.records() if r["kind"] == "summary_score"}
    assert len(ok_docs) == 4


def test_failed_document_is_not_retried_on_resume(tmp_path, ontology):
    data = tmp_path / "one.jsonl"
    data.write_text(
        json.dumps({"doc_id": "d1", "source_note": "[[main_diag]] flu\n", "reference_summary": "[[main_diag]] flu\n"})
        + "\n",
        encoding="utf-8",
    )
    config = standard_config(data, run_id="fail", scorers=(ScorerSpec.parse("rouge1"),), ground=False)
    root = tmp_path / "runs"
    run(config, mock_gateway(None), ontology, runs_root=root)
    store = run(config, mock_gateway(None), ontology, runs_root=root)
    failures = [r for r in store.records() if r["kind"] == "failure"]
    assert len(failures) == 1  # not re-attempted, not duplicated


def test_token_limit_exclusion_reflected_in_manifest(tmp_path, ontology, dataset_path):
    config = standard_config(dataset_path, run_id="tiny", token_limit=60, ground=False)
    store = run(config, mock_gateway(None), ontology, runs_root=tmp_path / "runs")
    manifest = store.read_manifest()
    assert manifest["n_excluded"] > 0
    assert manifest["n_documents"] + manifest["n_excluded"] == 5


def test_unknown_provider_fails_before_any_writes(tmp_path, ontology, dataset_path):
    config = standard_config(dataset_path, run_id="badprov", structurer="claude")
    with pytest.raises(ConfigError, match="claude"):
        run(config, mock_gateway(None), ontology, runs_root=tmp_path / "runs")
    assert not (tmp_path / "runs" / "badprov" / "records.jsonl").exists()


def test_precomputed_constant():
    assert PRECOMPUTED == "precomputed"
