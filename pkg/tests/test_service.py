from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from cropscout.service import create_app


@pytest.fixture
def client():
    return TestClient(create_app())


@pytest.fixture
def scene(fixtures_dir):
    return str(fixtures_dir / "images" / "scene-a.png")


@pytest.fixture
def golden_suite(fixtures_dir):
    return str(fixtures_dir / "backends" / "golden-stub.json")


class TestHealthAndBackends:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"

    def test_backends_lists_builtins(self, client):
        suites = client.get("/backends").json()["suites"]
        assert "stub" in suites


class TestDetectEndpoint:
    def test_detect_returns_records(self, client, scene, golden_suite):
        response = client.post(
            "/detect",
            json={
                "images": [scene],
                "vocabulary": ["tomato", "cucumber"],
                "backends": golden_suite,
                "seed": 7,
            },
        )
        assert response.status_code == 200
        [record] = response.json()["records"]
        assert record["image"] == scene
        assert record["detections"][0]["class_name"] == "tomato"
        assert record["config"]["backends"] == golden_suite

    def test_worker_counts_agree(self, client, fixtures_dir, golden_suite):
        images = [
            str(fixtures_dir / "images" / "scene-a.png"),
            str(fixtures_dir / "images" / "scene-b.png"),
        ]
        payload = {
            "images": images,
            "vocabulary": ["tomato", "cucumber"],
            "backends": golden_suite,
            "seed": 7,
        }
        solo = client.post("/detect", json={**payload, "workers": 1}).json()
        pooled = client.post("/detect", json={**payload, "workers": 4}).json()
        assert solo == pooled

    def test_unknown_backend_is_config_error(self, client, scene):
        response = client.post(
            "/detect",
            json={"images": [scene], "vocabulary": ["a"], "backends": "missing"},
        )
        assert response.status_code == 400
        assert response.json()["detail"]["category"] == "config"

    def test_missing_image_is_data_error(self, client):
        response = client.post(
            "/detect", json={"images": ["/absent.png"], "vocabulary": ["a"]}
        )
        assert response.status_code == 400
        detail = response.json()["detail"]
        assert detail["category"] == "data"
        assert "/absent.png" in detail["message"]

    def test_backend_crash_is_backend_error(self, client, scene, tmp_path):
        spec = {
            "image_encoder": {"kind": "mean-color", "dim": 16},
            "text_encoder": {"kind": "hashing", "dim": 32},
            "canonical_proposer": {"kind": "grid"},
            "grounded_proposer": {"kind": "empty", "source": "grounded"},
            "mask_refiner": {"kind": "shrink"},
        }
        path = tmp_path / "mismatched.json"
        path.write_text(json.dumps(spec), encoding="utf-8")
        response = client.post(
            "/detect",
            json={"images": [scene], "vocabulary": ["a"], "backends": str(path)},
        )
        # Encoder dim mismatch is caught at suite construction: config error.
        assert response.status_code == 400
        assert response.json()["detail"]["category"] == "config"

    def test_validation_error_is_422(self, client):
        response = client.post("/detect", json={"images": [], "vocabulary": ["a"]})
        assert response.status_code == 422


class TestClassifyEndpoint:
    def test_classify_record_shape(self, client, scene, golden_suite):
        response = client.post(
            "/classify",
            json={
                "images": [scene],
                "vocabulary": ["tomato", "cucumber"],
                "backends": golden_suite,
                "seed": 7,
            },
        )
        [record] = response.json()["records"]
        assert set(record) >= {"image", "class_index", "class_name", "probabilities"}
        assert abs(sum(record["probabilities"]) - 1.0) < 1e-9


class TestTrainEndpoint:
    def test_train_runs_and_reduces_loss(self, client, fixtures_dir):
        manifest = str(fixtures_dir / "train" / "manifest.jsonl")
        response = client.post(
            "/train/alignment",
            json={
                "manifest": manifest,
                "epochs": 30,
                "learning_rate": 0.02,
                "batch_size": 2,
                "embedding_dim": 32,
                "seed": 1,
            },
        )
        assert response.status_code == 200
        body = response.json()
        trace = body["trace"]
        assert len(trace) == 30
        assert trace[-1]["mean_loss"] < trace[0]["mean_loss"]
        assert body["final_tau"] > 0
        assert body["params"]["tokens"]

    def test_train_missing_manifest_is_data_error(self, client, tmp_path):
        response = client.post(
            "/train/alignment", json={"manifest": str(tmp_path / "absent.jsonl")}
        )
        assert response.status_code == 400
        assert response.json()["detail"]["category"] == "data"


class TestEvalEndpoints:
    def test_eval_detection_on_golden(self, client, fixtures_dir):
        response = client.post(
            "/evaluate/detection",
            json={
                "detections": str(fixtures_dir / "golden" / "detect.jsonl"),
                "dataset": str(fixtures_dir / "data" / "dataset.json"),
            },
        )
        assert response.status_code == 200
        report = response.json()["report"]
        assert report["mean_ap"]["0.5"] == 1.0
        assert report["mean_ap"]["0.75"] == 1.0

    def test_eval_classification(self, client, tmp_path):
        predictions = tmp_path / "preds.jsonl"
        truths = tmp_path / "truths.jsonl"
        predictions.write_text(
            "\n".join(
                json.dumps({"image": f"i{i}.png", "class_index": i % 2}) for i in range(4)
            )
            + "\n",
            encoding="utf-8",
        )
        truths.write_text(
            "\n".join(json.dumps({"image": f"i{i}.png", "class_index": 0}) for i in range(4))
            + "\n",
            encoding="utf-8",
        )
        response = client.post(
            "/evaluate/classification",
            json={"predictions": str(predictions), "truths": str(truths)},
        )
        assert response.json()["report"]["overall_accuracy"] == 0.5

    def test_eval_classification_missing_prediction(self, client, tmp_path):
        predictions = tmp_path / "preds.jsonl"
        truths = tmp_path / "truths.jsonl"
        predictions.write_text(
            json.dumps({"image": "a.png", "class_index": 0}) + "\n", encoding="utf-8"
        )
        truths.write_text(
            "\n".join(
                json.dumps({"image": img, "class_index": 0}) for img in ("a.png", "b.png")
            )
            + "\n",
            encoding="utf-8",
        )
        response = client.post(
            "/evaluate/classification",
            json={"predictions": str(predictions), "truths": str(truths)},
        )
        assert response.status_code == 400
        assert "b.png" in response.json()["detail"]["message"]


class TestCaptionEndpoints:
    def test_prompts(self, client, fixtures_dir):
        response = client.post(
            "/captions/prompts",
            json={"listing": str(fixtures_dir / "data" / "listing.jsonl")},
        )
        records = response.json()["records"]
        assert len(records) == 3
        assert records[0]["prompt"].startswith("For this tomato image, ")

    def test_ingest(self, client, fixtures_dir):
        response = client.post(
            "/captions/ingest",
            json={
                "listing": str(fixtures_dir / "data" / "listing.jsonl"),
                "responses": str(fixtures_dir / "data" / "responses.jsonl"),
            },
        )
        records = response.json()["records"]
        assert [r["species"] for r in records] == ["tomato", "cucumber", "dragon fruit"]
