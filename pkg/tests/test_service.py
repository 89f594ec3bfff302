"""HTTP service endpoints over the mock gateway."""

import pytest
from fastapi.testclient import TestClient

from attrscore._version import __version__
from attrscore.annotation import AnnotationSession, SampleSpec
from attrscore.errors import TransportError
from attrscore.gateway import UNLIMITED_RPM, Gateway, ProviderConfig
from attrscore.service import create_app

REFERENCE = """[[main_diag]]
Acute decompensated heart failure.

[[ds_med]]
Furosemide 40 mg daily.
"""

CANDIDATE_SAME = REFERENCE

CANDIDATE_DIFFERENT = """[[main_diag]]
Fractured wrist after skateboard accident.

[[ds_med]]
Ibuprofen as needed.
"""


@pytest.fixture()
def client(tmp_path):
    app = create_app(sessions_root=tmp_path / "sessions")
    return TestClient(app)


def _gateway_with(impl):
    gw = Gateway(cache_dir=None)
    gw.register(
        ProviderConfig(provider_id="mock", kind="mock", requests_per_minute=UNLIMITED_RPM),
        impl=impl,
    )
    return gw


# --- Health and metrics -------------------------------------------------------------


def test_health(client):
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok", "version": __version__}


def test_metrics_endpoint(client):
    response = client.post(
        "/api/metrics",
        json={"reference": REFERENCE, "candidate": CANDIDATE_SAME, "metric": "rougeL"},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["metric"] == "rougeL"
    assert body["f1"] == pytest.approx(1.0)


def test_metrics_unknown_metric(client):
    response = client.post(
        "/api/metrics", json={"reference": "a", "candidate": "b", "metric": "bleu"}
    )
    assert response.status_code == 422
    assert "unknown metric" in response.json()["detail"]


# --- Evaluate -----------------------------------------------------------------------


def test_evaluate_identical_pair_all_scorers(client):
    response = client.post(
        "/api/evaluate",
        json={
            "reference": REFERENCE,
            "candidate": CANDIDATE_SAME,
            "scorers": ["llm@mock", "holistic@mock", "rougeL", "embed_match"],
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["structured"]["reference"]["main_diag"] == "Acute decompensated heart failure."
    assert body["structured"]["reference"] == body["structured"]["candidate"]
    llm = body["scores"]["llm@mock"]
    assert llm["normalized"] == pytest.approx(100.0)
    assert llm["n_scored"] == 2
    assert len(llm["per_attribute"]) == 17
    assert body["scores"]["holistic@mock"]["score"] == 10
    assert body["scores"]["rougeL"]["default"]["f1"] == pytest.approx(1.0)
    assert body["scores"]["rougeL"]["as_mode"]["mean"] == pytest.approx(1.0)
    assert body["scores"]["embed_match"]["as_mode"]["mean"] == pytest.approx(1.0)


def test_evaluate_disjoint_pair_scores_zero(client):
    response = client.post(
        "/api/evaluate",
        json={
            "reference": REFERENCE,
            "candidate": CANDIDATE_DIFFERENT,
            "scorers": ["llm@mock"],
        },
    )
    body = response.json()
    assert body["scores"]["llm@mock"]["normalized"] == pytest.approx(0.0)


def test_evaluate_unknown_scorer(client):
    response = client.post(
        "/api/evaluate",
        json={"reference": REFERENCE, "candidate": CANDIDATE_SAME, "scorers": ["bleu"]},
    )
    assert response.status_code == 422
    assert "unknown scorer" in response.json()["detail"]


def test_evaluate_validates_body(client):
    response = client.post(
        "/api/evaluate", json={"reference": "", "candidate": CANDIDATE_SAME}
    )
    assert response.status_code == 422


def test_evaluate_transport_failure_maps_to_502(tmp_path):
    def failing(request):
        raise TransportError("provider unreachable")

    app = create_app(sessions_root=tmp_path, gateway=_gateway_with(failing))
    response = TestClient(app).post(
        "/api/evaluate", json={"reference": REFERENCE, "candidate": CANDIDATE_SAME}
    )
    assert response.status_code == 502
    assert "unreachable" in response.json()["detail"]


def test_evaluate_parse_failure_maps_to_400(tmp_path):
    def unparseable(request):
        return "no dictionary in sight"

    app = create_app(sessions_root=tmp_path, gateway=_gateway_with(unparseable))
    response = TestClient(app).post(
        "/api/evaluate", json={"reference": REFERENCE, "candidate": CANDIDATE_SAME}
    )
    assert response.status_code == 400
    assert "reference" in response.json()["detail"]


# --- Ground -------------------------------------------------------------------------


def test_ground_verified_span(client):
    document = "Admitted for chest pain. Discharged on furosemide 40 mg daily."
    response = client.post(
        "/api/ground",
        json={"document": document, "attribute_key": "ds_med", "value": "furosemide 40 mg"},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "verified"
    assert document[body["char_start"] : body["char_end"]] == body["span"]
    assert "furosemide" in body["span"]


def test_ground_unknown_attribute(client):
    response = client.post(
        "/api/ground",
        json={"document": "text", "attribute_key": "nope", "value": "v"},
    )
    assert response.status_code == 422
    assert "valid keys" in response.json()["detail"]


def test_ground_validates_body(client):
    response = client.post(
        "/api/ground", json={"document": "", "attribute_key": "ds_med", "value": "v"}
    )
    assert response.status_code == 422


# --- Annotation endpoints -----------------------------------------------------------


@pytest.fixture()
def annotation_app(completed_run, ontology, tmp_path):
    root = tmp_path / "sessions"
    session = AnnotationSession.create(
        [completed_run], ontology, SampleSpec(seed=5), root, session_id="sess1"
    )
    return create_app(sessions_root=root), root, session


def test_session_flow(annotation_app):
    app, _, session = annotation_app
    client = TestClient(app)

    response = client.get("/api/session/sess1/next", params={"annotator": "ann1"})
    assert response.status_code == 200
    body = response.json()
    assert body["done"] == 0
    assert body["total"] == len(session.tasks)
    task = body["task"]
    assert set(task) == {
        "task_id", "attribute_key", "attribute_name", "attribute_description",
        "value_a", "value_b",
    }

    response = client.post(
        "/api/session/sess1/labels",
        json={"task_id": task["task_id"], "annotator_id": "ann1", "label": 3},
    )
    assert response.status_code == 200
    assert response.json() == {"ok": True, "task_id": task["task_id"], "label": 3}

    response = client.get("/api/session/sess1/next", params={"annotator": "ann1"})
    assert response.json()["done"] == 1
    assert response.json()["task"]["task_id"] != task["task_id"]

    progress = client.get("/api/session/sess1/progress").json()
    assert progress == {"total_tasks": len(session.tasks), "annotators": {"ann1": 1}}


def test_session_export_blinded_strips_reference_side(annotation_app):
    app, _, session = annotation_app
    client = TestClient(app)
    client.post(
        "/api/session/sess1/labels",
        json={"task_id": session.tasks[0].task_id, "annotator_id": "ann1", "label": 2},
    )
    full = client.get("/api/session/sess1/export").json()
    assert full["records"][0]["reference_is_a"] in (True, False)
    blinded = client.get("/api/session/sess1/export", params={"blinded": "true"}).json()
    assert "reference_is_a" not in blinded["records"][0]
    assert blinded["n_labels"] == 1


def test_session_survives_service_restart(annotation_app):
    app, root, session = annotation_app
    client = TestClient(app)
    for task in session.tasks[:3]:
        response = client.post(
            "/api/session/sess1/labels",
            json={"task_id": task.task_id, "annotator_id": "ann1", "label": 4},
        )
        assert response.status_code == 200
    fresh = TestClient(create_app(sessions_root=root))
    progress = fresh.get("/api/session/sess1/progress").json()
    assert progress["annotators"] == {"ann1": 3}
    export = fresh.get("/api/session/sess1/export").json()
    assert export["n_labels"] == 3


def test_session_error_paths(annotation_app):
    app, _, _ = annotation_app
    client = TestClient(app)
    assert client.get("/api/session/ghost/progress").status_code == 404
    response = client.post(
        "/api/session/sess1/labels",
        json={"task_id": "t9999", "annotator_id": "ann1", "label": 2},
    )
    assert response.status_code == 404
    response = client.post(
        "/api/session/sess1/labels",
        json={"task_id": "t0000", "annotator_id": "ann1", "label": 9},
    )
    assert response.status_code == 422
    assert client.get("/api/session/sess1/next").status_code == 422  # annotator required


# --- Static frontend ----------------------------------------------------------------


def test_frontend_mounted_when_directory_exists(tmp_path):
    ui = tmp_path / "dist"
    ui.mkdir()
    (ui / "index.html").write_text("<html>annotator</html>", encoding="utf-8")
    app = create_app(sessions_root=tmp_path / "sessions", frontend_dir=ui)
    response = TestClient(app).get("/")
    assert response.status_code == 200
    assert "annotator" in response.text


def test_no_frontend_mount_without_directory(client):
    assert client.get("/").status_code == 404
