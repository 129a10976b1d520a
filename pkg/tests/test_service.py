from __future__ import annotations

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

import themekit.service as service_mod
from themekit import dump_dataset, generate_corpus, keyword_map
from themekit.service import create_app


@pytest.fixture
def root(tmp_path):
    corpus = generate_corpus(16, seed=7)
    (tmp_path / "corpus.jsonl").write_text(dump_dataset(corpus), encoding="utf-8")
    script = tmp_path / "scenario.json"
    script.write_text(json.dumps({
        "default": {"mode": "keyword-echo", "keywords": keyword_map(), "k": 3},
    }), encoding="utf-8")
    return tmp_path


@pytest.fixture
def client(root):
    app = create_app(root / "runs")
    with TestClient(app) as c:
        yield c


def create_run(client, root, name="r1") -> str:
    response = client.post("/api/runs", json={
        "name": name,
        "dataset_path": str(root / "corpus.jsonl"),
        "research_questions": ["What kinds of theft appear?"],
        "config": {
            "backend_kind": "scripted",
            "backend_script": str(root / "scenario.json"),
            "k": 3,
        },
    })
    assert response.status_code == 201, response.text
    return name


def wait_stage_done(client, run_id, timeout=10.0) -> None:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        record = client.get(f"/api/runs/{run_id}").json()
        active = record.get("active_stage")
        if active is None or active["finished"]:
            assert active is None or active["error"] is None, active
            return
        time.sleep(0.05)
    raise AssertionError("stage did not finish in time")


def run_stage(client, run_id, stage, **body) -> None:
    response = client.post(f"/api/runs/{run_id}/stages/{stage}", json=body or {})
    assert response.status_code == 202, response.text
    wait_stage_done(client, run_id)


class TestRunsEndpoints:
    def test_create_list_get(self, client, root):
        create_run(client, root)
        listed = client.get("/api/runs").json()["runs"]
        assert [r["run_id"] for r in listed] == ["r1"]
        record = client.get("/api/runs/r1").json()
        assert record["n_points"] == 16
        assert record["rounds"] == [1]
        assert record["contexts"]["1"]["research_questions"] == ["What kinds of theft appear?"]

    def test_unknown_run_404_with_error_shape(self, client):
        response = client.get("/api/runs/ghost")
        assert response.status_code == 404
        body = response.json()
        assert set(body) == {"error"}
        assert body["error"]["code"] == "UNKNOWN_RUN"
        assert body["error"]["message"]

    def test_duplicate_run_conflict(self, client, root):
        create_run(client, root)
        response = client.post("/api/runs", json={
            "name": "r1", "dataset_path": str(root / "corpus.jsonl"),
        })
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "RUN_EXISTS"

    def test_invalid_payload_wrapped_as_api_error(self, client):
        response = client.post("/api/runs", json={"name": 3})
        assert response.status_code == 422
        assert response.json()["error"]["code"] == "INVALID_PAYLOAD"


class TestCodesAndFeedback:
    def test_codes_pagination_and_filter(self, client, root):
        run_id = create_run(client, root)
        run_stage(client, run_id, "code", seed=7)
        page1 = client.get(f"/api/runs/{run_id}/codes", params={"limit": 10}).json()
        assert page1["total"] == 16
        assert len(page1["items"]) == 10
        page2 = client.get(f"/api/runs/{run_id}/codes", params={"limit": 10, "offset": 10}).json()
        assert len(page2["items"]) == 6
        ids = {item["id"] for item in page1["items"] + page2["items"]}
        assert len(ids) == 16
        filtered = client.get(f"/api/runs/{run_id}/codes", params={"q": "bicycle"}).json()
        assert 0 < filtered["total"] < 16
        assert all("bicycle" in item["code"] for item in filtered["items"])
        with_text = client.get(f"/api/runs/{run_id}/codes", params={"include_text": "true", "limit": 2}).json()
        assert all(item["text"] for item in with_text["items"])

    def test_feedback_appears_in_next_context_snapshot(self, client, root):
        run_id = create_run(client, root)
        response = client.post(f"/api/runs/{run_id}/feedback", json={
            "positive": ["modus operandi"],
            "negative": ["value of stolen goods"],
            "exemplars": ["vehicle theft with forceful entry and disassembly of vehicles"],
        })
        assert response.status_code == 200
        assert response.json() == {"round": 2, "rerun_started": False}
        record = client.get(f"/api/runs/{run_id}").json()
        ctx2 = record["contexts"]["2"]
        assert "focus on: modus operandi" in ctx2["custom_requirements"]
        assert "do not encode: value of stolen goods" in ctx2["custom_requirements"]
        assert ctx2["positive_exemplars"] == [
            "vehicle theft with forceful entry and disassembly of vehicles"
        ]

    def test_feedback_with_rerun_triggers_coding(self, client, root):
        run_id = create_run(client, root)
        run_stage(client, run_id, "code", seed=7)
        response = client.post(f"/api/runs/{run_id}/feedback", json={
            "positive": ["target"], "rerun": True, "seed": 7,
        })
        assert response.status_code == 200
        assert response.json()["rerun_started"] is True
        wait_stage_done(client, run_id)
        codes = client.get(f"/api/runs/{run_id}/codes", params={"round": 2}).json()
        assert codes["total"] == 16

    def test_empty_feedback_rejected(self, client, root):
        run_id = create_run(client, root)
        response = client.post(f"/api/runs/{run_id}/feedback", json={})
        assert response.status_code == 422
        assert response.json()["error"]["code"] == "INVALID_INPUT"


class TestAnnotations:
    def test_round_trip_and_tally(self, client, root):
        run_id = create_run(client, root)
        items = [
            {"data_point_id": "dp-0000", "round": 1, "verdict": "not_how"},
            {"data_point_id": "dp-0001", "round": 1, "verdict": "not_what"},
            {"data_point_id": "dp-0002", "round": 1, "verdict": "ok"},
        ]
        response = client.post(f"/api/runs/{run_id}/annotations", json={"items": items})
        assert response.status_code == 200
        assert response.json() == {"stored": 3}
        got = client.get(f"/api/runs/{run_id}/annotations", params={"round": 1}).json()
        assert len(got["items"]) == 3
        assert got["tally"]["counts"] == {"not_how": 1, "not_what": 1, "ok": 1}

    def test_empty_batch_rejected(self, client, root):
        run_id = create_run(client, root)
        response = client.post(f"/api/runs/{run_id}/annotations", json={"items": []})
        assert response.status_code == 422

    def test_unknown_data_point_rejected(self, client, root):
        run_id = create_run(client, root)
        response = client.post(f"/api/runs/{run_id}/annotations", json={
            "items": [{"data_point_id": "ghost", "round": 1, "verdict": "ok"}],
        })
        assert response.status_code == 422

    def test_bad_verdict_rejected(self, client, root):
        run_id = create_run(client, root)
        response = client.post(f"/api/runs/{run_id}/annotations", json={
            "items": [{"data_point_id": "dp-0000", "round": 1, "verdict": "meh"}],
        })
        assert response.status_code == 422
        assert response.json()["error"]["code"] == "INVALID_PAYLOAD"


class TestThemesAndClassification:
    def pipeline_to_merge(self, client, root, run_id):
        run_stage(client, run_id, "code", seed=7)
        run_stage(client, run_id, "collate", seed=7)
        run_stage(client, run_id, "merge")

    def test_classify_blocked_until_approved(self, client, root):
        run_id = create_run(client, root)
        self.pipeline_to_merge(client, root, run_id)
        blocked = client.post(f"/api/runs/{run_id}/stages/classify", json={})
        assert blocked.status_code == 409
        assert blocked.json()["error"]["code"] == "THEMES_UNAPPROVED"

        themes = client.get(f"/api/runs/{run_id}/themes").json()
        assert themes["merged"] is not None
        assert themes["approved"] is None
        assert themes["candidates"]

        approved = client.post(f"/api/runs/{run_id}/themes/approve", json={})
        assert approved.status_code == 200
        assert approved.json()["approved"]["themes"]

        run_stage(client, run_id, "classify", k=3)
        evaluation = client.get(f"/api/runs/{run_id}/evaluation", params={"k": 3}).json()
        assert evaluation["recall"]["overall"]["r_at_1"] == 1.0
        mapping = client.get(f"/api/runs/{run_id}/mapping").json()
        assert mapping["flows"]
        assert all(set(f) == {"source", "target", "weight"} for f in mapping["flows"])
        assignments = client.get(f"/api/runs/{run_id}/assignments", params={"limit": 5}).json()
        assert assignments["total"] == 16
        assert len(assignments["items"]) == 5
        first = assignments["items"][0]
        assert len(first["themes"]) == 3 and first["gold_theme"]

    def test_approve_with_edits_validated(self, client, root):
        run_id = create_run(client, root)
        self.pipeline_to_merge(client, root, run_id)
        themes = client.get(f"/api/runs/{run_id}/themes").json()
        merged = themes["merged"]["themes"]
        all_subs = [s for t in merged for s in t["sub_themes"]]
        edited = [{"label": "everything", "sub_themes": all_subs}]
        response = client.post(f"/api/runs/{run_id}/themes/approve", json={"themes": edited})
        assert response.status_code == 200
        assert response.json()["approved"]["themes"][0]["label"] == "everything"
        # invalid edit: drops a candidate
        bad = [{"label": "partial", "sub_themes": all_subs[:-1]}]
        response = client.post(f"/api/runs/{run_id}/themes/approve", json={"themes": bad})
        assert response.status_code == 422

    def test_unknown_stage_404(self, client, root):
        run_id = create_run(client, root)
        response = client.post(f"/api/runs/{run_id}/stages/transmogrify", json={})
        assert response.status_code == 404


class TestConcurrencyAndProgress:
    def test_concurrent_stage_posts_one_wins(self, client, root, monkeypatch):
        run_id = create_run(client, root)
        release = threading.Event()
        started = threading.Event()

        class BlockingRunner:
            def __init__(self, store, gateway, **kwargs):
                self.store = store

            def run_initial_coding(self, round_, seed=None):
                started.set()
                release.wait(timeout=10)

        monkeypatch.setattr(service_mod, "Runner", BlockingRunner)
        statuses = []

        def post():
            statuses.append(client.post(f"/api/runs/{run_id}/stages/code", json={}).status_code)

        threads = [threading.Thread(target=post) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(statuses) == [202, 409]
        assert started.wait(timeout=5)
        release.set()
        wait_stage_done(client, run_id)

    def test_mutations_blocked_while_stage_runs(self, client, root, monkeypatch):
        run_id = create_run(client, root)
        release = threading.Event()

        class BlockingRunner:
            def __init__(self, store, gateway, **kwargs):
                pass

            def run_initial_coding(self, round_, seed=None):
                release.wait(timeout=10)

        monkeypatch.setattr(service_mod, "Runner", BlockingRunner)
        assert client.post(f"/api/runs/{run_id}/stages/code", json={}).status_code == 202
        response = client.post(f"/api/runs/{run_id}/feedback", json={"positive": ["x"]})
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "STAGE_RUNNING"
        release.set()
        wait_stage_done(client, run_id)

    def test_progress_long_poll(self, client, root):
        run_id = create_run(client, root)
        first = client.get(f"/api/runs/{run_id}/progress", params={"cursor": -1}).json()
        assert first["version"] >= 1  # context snapshot already committed
        # cursor at current version: poll times out quickly with same version
        t0 = time.monotonic()
        same = client.get(
            f"/api/runs/{run_id}/progress",
            params={"cursor": first["version"], "timeout": 0.3},
        ).json()
        assert time.monotonic() - t0 >= 0.25
        assert same["version"] == first["version"]
        # a mutation bumps the version and unblocks the next poll
        client.post(f"/api/runs/{run_id}/annotations", json={
            "items": [{"data_point_id": "dp-0000", "round": 1, "verdict": "ok"}],
        })
        bumped = client.get(
            f"/api/runs/{run_id}/progress",
            params={"cursor": first["version"], "timeout": 5},
        ).json()
        assert bumped["version"] > first["version"]

    def test_progress_reports_stage_batches(self, client, root):
        run_id = create_run(client, root)
        run_stage(client, run_id, "code", seed=7)
        progress = client.get(f"/api/runs/{run_id}/progress", params={"cursor": -1}).json()
        coding = [s for s in progress["stages"] if s["stage"] == "coding"]
        assert coding and coding[0]["batches_done"] >= 1


class TestStatelessness:
    def test_restart_preserves_everything(self, root):
        app1 = create_app(root / "runs")
        with TestClient(app1) as c1:
            run_id = create_run(c1, root)
            run_stage(c1, run_id, "code", seed=7)
            codes_before = c1.get(f"/api/runs/{run_id}/codes").json()
        app2 = create_app(root / "runs")
        with TestClient(app2) as c2:
            codes_after = c2.get(f"/api/runs/{run_id}/codes").json()
            assert codes_after == codes_before
