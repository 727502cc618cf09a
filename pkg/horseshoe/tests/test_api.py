"""
Tests for the HTTP API

Tests verify the query endpoints return documents that match their
schemas and reject parameters outside the bifurcation conventions.
"""

import math

import pytest
from fastapi import status

from horseshoe.core.config import settings


def test_health_check(client):
    """
    Test that the health endpoint returns 200 OK.

    Why this matters:
    - Liveness and readiness probes call this endpoint
    """
    response = client.get("/health")
    assert response.status_code == status.HTTP_200_OK, \
        "Health endpoint should return 200"
    assert response.json() == {"status": "healthy"}, \
        "Health endpoint should report healthy"


def test_root_endpoint(client):
    response = client.get("/")
    data = response.json()
    assert data["service"] == settings.service_name and data["docs"] == "/docs", \
        "Root should describe the service"


def test_metrics_endpoint(client):
    """Test that request metrics appear after a query."""
    client.post("/api/v1/h4", json={"d_s": 0.55, "d_u": 0.55})
    response = client.get("/metrics")
    assert response.status_code == status.HTTP_200_OK, \
        "Metrics endpoint should return 200"
    assert "http_requests_total" in response.text, \
        "Request counter should be exported"


def test_exponents_endpoint(client):
    """
    Test the exponent calculus at (0.55, 0.55).

    What we're testing:
    - beta_max = 0.495 / 0.3575
    - (H4) is reported as true
    """
    response = client.post("/api/v1/exponents", json={"d_s": 0.55, "d_u": 0.55})
    assert response.status_code == status.HTTP_200_OK, \
        f"Exponents should succeed, got {response.text}"
    data = response.json()
    assert data["beta_max"] == pytest.approx(0.495 / 0.3575, rel=1e-12), \
        "beta_max should match the closed form"
    assert data["h4"] is True, \
        "(H4) holds at (0.55, 0.55)"


@pytest.mark.parametrize("payload", [
    {"d_s": 0.5, "d_u": 0.6},
    {"d_s": 1.2, "d_u": 0.5},
    {"d_u": 0.5},
])
def test_exponents_rejects_bad_dimensions(client, payload):
    """Test that reversed or out-of-range dimensions return 422."""
    response = client.post("/api/v1/exponents", json=payload)
    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY, \
        f"Payload {payload} should be rejected"


def test_h4_endpoint(client):
    thin = client.post("/api/v1/h4", json={"d_s": 0.55, "d_u": 0.55}).json()
    assert thin["h4"] and thin["beta_max"] > 1.0, \
        "Thin horseshoes satisfy (H4)"
    shallow = client.post("/api/v1/h4", json={"d_s": 0.3, "d_u": 0.3}).json()
    assert shallow["beta_max"] is None, \
        "beta_max is undefined when d_s + d_u <= 1"


def test_h4_region_endpoint(client):
    response = client.get("/api/v1/h4-region", params={"n": 10})
    assert response.status_code == status.HTTP_200_OK, \
        "Region query should succeed"
    assert response.json()["n"] == 10 and response.json()["rows"], \
        "Region should carry its grid size and rows"
    for n in (1, 500):
        assert client.get("/api/v1/h4-region", params={"n": n}).status_code == status.HTTP_422_UNPROCESSABLE_ENTITY, \
            f"n={n} lies outside [2, 200]"


def test_interval_tree_endpoint(client):
    """Test the interval-tree report for the default eps0 and tau."""
    response = client.post("/api/v1/interval-tree", json={"eps0": 0.02, "tau": 0.25, "depth": 2})
    assert response.status_code == status.HTTP_200_OK, \
        f"Interval tree should succeed, got {response.text}"
    levels = response.json()["levels"]
    assert [lvl["level"] for lvl in levels] == [0, 1, 2], \
        "One entry per level"
    assert levels[0]["log_length"] == pytest.approx(math.log(0.02), rel=1e-14), \
        "Root log-length is log eps0"


@pytest.mark.slow
def test_affine_dimension_endpoint(client):
    """
    Test the transverse dimension of the middle-thirds family.

    What we're testing:
    - the solved dimension equals log 2 / log 3
    - the response carries the lambda_d curve

    Why this matters:
    - End-to-end path through family, class, transfer matrix and root finder
    """
    response = client.post("/api/v1/dimension/affine", json={"lambda_s": 1.0 / 3.0, "m_trunc": 4})
    assert response.status_code == status.HTTP_200_OK, \
        f"Dimension solve should succeed, got {response.text}"
    data = response.json()
    assert data["d_s"] == pytest.approx(math.log(2.0) / math.log(3.0), abs=1e-6), \
        f"d_s should be 0.630930, got {data['d_s']}"
    assert data["closed_form"] == pytest.approx(math.log(2.0) / math.log(3.0)), \
        "Closed form should be log 2 / log(1/lambda)"
    assert data["states"] == 32 and data["lambda_curve"], \
        "Response should report states and the eigenvalue curve"


def test_affine_dimension_validates_lambda(client):
    response = client.post("/api/v1/dimension/affine", json={"lambda_s": 0.7})
    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY, \
        "lambda_s must lie below 1/2"
