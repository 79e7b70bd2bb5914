import io

import numpy as np
import pandas as pd
import pytest
from fastapi.testclient import TestClient

from grpcoll.core.config import settings
from grpcoll.main import create_app
from grpcoll.protocol.coordinator import Coordinator
from grpcoll.schemas.nn import TrainConfig
from grpcoll.services.nn.network import build_toy_mlp

API = f"{settings.API_V1_STR}/coordinator"


def _coordinator(trained: bool) -> Coordinator:
    coordinator = Coordinator(2, lambda d, c: build_toy_mlp(d, classes=c), TrainConfig(epochs=1), timeout_secs=5)
    if trained:
        coordinator.model = build_toy_mlp(input_dim=2, classes=2, seed=3)
        coordinator.dimension = 2
        coordinator.class_count = 2
        coordinator.trained_samples = 40
    return coordinator


@pytest.fixture
def idle_client():
    return TestClient(create_app(_coordinator(trained=False)))


@pytest.fixture
def trained_client():
    return TestClient(create_app(_coordinator(trained=True)))


def test_health_and_request_id(idle_client):
    response = idle_client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy"}
    assert response.headers["X-Request-ID"]


def test_ready_follows_training(idle_client, trained_client):
    assert idle_client.get("/ready").status_code == 503
    response = trained_client.get("/ready")
    assert response.status_code == 200
    assert response.json() == {"status": "ready", "trained_samples": 40}


def test_no_coordinator_attached():
    client = TestClient(create_app())
    assert client.get("/ready").status_code == 503
    assert client.get(f"{API}/status").status_code == 503


def test_status(idle_client):
    body = idle_client.get(f"{API}/status").json()
    assert body["expected_participants"] == 2
    assert body["completed_participants"] == 0
    assert body["ready"] is False
    assert body["sessions"] == []


def test_classify_before_training(idle_client):
    response = idle_client.post(f"{API}/classify", json={"vector": [0.1, 0.2]})
    assert response.status_code == 503
    assert response.json()["detail"]["code"] == 53


def test_classify(trained_client):
    response = trained_client.post(f"{API}/classify", json={"vector": [0.5, -1.0]})
    assert response.status_code == 200
    body = response.json()
    assert body["label"] in (0, 1)
    assert np.sum(body["probabilities"]) == pytest.approx(1.0)


def test_classify_wrong_dimension(trained_client):
    response = trained_client.post(f"{API}/classify", json={"vector": [0.5, -1.0, 2.0]})
    assert response.status_code == 422
    assert response.json()["detail"]["code"] == 52
    assert trained_client.post(f"{API}/classify", json={"vector": []}).status_code == 422


def test_report_json_and_csv(trained_client):
    body = trained_client.get(f"{API}/report").json()
    assert body["experiment_id"] == "serve"
    assert body["runs"][0]["extra"]["trained_samples"] == 40.0

    response = trained_client.get(f"{API}/report", params={"format": "csv"})
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("text/csv")
    frame = pd.read_csv(io.StringIO(response.text))
    assert frame.loc[0, "label"] == "coordinator"
