import pytest
from fastapi import HTTPException

from app.controllers.bounds_controller import get_bounds


@pytest.mark.asyncio
async def test_get_bounds_worked_point():
    """Test the derived parameters of a valid configuration."""
    response = await get_bounds(m=64, epsilon=0.2, tau=0.1, r=800, tau_s=0.05)

    assert response.params.s == 1000
    assert response.params.n == 2286
    assert response.params.d_k == 480
    assert response.params.q_min == 722
    assert response.params.feasible
    assert response.report.feasible_m_max == 94
    assert 0.05 < response.epsilon_star < 0.15


@pytest.mark.asyncio
async def test_get_bounds_invalid_parameters():
    """Test that a violated constraint becomes a 400 naming it."""
    with pytest.raises(HTTPException) as excinfo:
        await get_bounds(m=8, epsilon=0.2, tau=0.5, r=800, tau_s=0.05)

    assert excinfo.value.status_code == 400
    assert "2*epsilon/(1-epsilon) + tau" in str(excinfo.value.detail)


def test_bounds_endpoint(test_client):
    """Test the endpoint through the application."""
    response = test_client.get("/api/v1/bounds", params={"m": 8, "epsilon": 0.1, "tau": 0.2, "r": 200, "tau_s": 0.1})

    assert response.status_code == 200
    body = response.json()
    assert body["params"]["s"] == 222
    assert body["params"]["d_k"] == 85
    assert body["params"]["feasible_m_max"] == 51
    assert body["report"]["entropy_lower_bound"] >= 0


def test_bounds_endpoint_validation(test_client):
    """Test query validation and parameter errors."""
    assert test_client.get("/api/v1/bounds", params={"m": 0, "epsilon": 0.1, "tau": 0.2, "r": 200}).status_code == 422
    assert test_client.get("/api/v1/bounds", params={"m": 8, "epsilon": 0.3, "tau": 0.2, "r": 200}).status_code == 400
