"""REST endpoints through FastAPI's test client."""

import math

import pytest
from fastapi.testclient import TestClient

import api


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with TestClient(api.app) as test_client:
        yield test_client


def test_root_and_health(client):
    assert client.get("/").json()["status"] == "operational"
    health = client.get("/health").json()
    assert health["status"] == "healthy"
    assert "partition" in health["suites"]


def test_norm_endpoint(client):
    body = {"n_points": 256, "input": "constant", "space": {"kind": "lebesgue", "p": 2.0}}
    response = client.post("/api/v1/norm", json=body)
    assert response.status_code == 200
    report = response.json()
    assert report["command"] == "norm"
    assert report["summary"]["norm"] == pytest.approx(math.sqrt(2 * math.pi))

    stored = client.get(f"/api/v1/reports/{report['run_id']}")
    assert stored.status_code == 200
    assert stored.json()["run_id"] == report["run_id"]


def test_infinite_exponents_round_trip(client):
    body = {"n_points": 256, "input": "constant", "space": {"kind": "besov", "s": 0.0, "p": "Infinity", "q": 1.0}}
    response = client.post("/api/v1/norm", json=body)
    assert response.status_code == 200
    assert response.json()["config"]["space"]["p"] == "Infinity"


def test_invalid_request_maps_to_400(client):
    response = client.post("/api/v1/apply", json={"n_points": 256, "input": "theta:N=3"})
    assert response.status_code == 400
    assert "N^2=9" in response.json()["detail"]


def test_validation_error_maps_to_422(client):
    response = client.post("/api/v1/probe", json={"t": 2.0})
    assert response.status_code == 422


def test_missing_report(client):
    assert client.get("/api/v1/reports/nope").status_code == 404
