from fastapi import APIRouter, HTTPException, Query, status
from typing import Any

from app.exceptions import ParameterError
from app.models.schemas import BoundsResponse, ErrorResponse
from app.services import bounds

# Create router
router = APIRouter(tags=["Security Bounds"])


@router.get(
    "/bounds",
    response_model=BoundsResponse,
    responses={400: {"model": ErrorResponse}},
    summary="Derive protocol parameters and security bounds",
    description="Compute s, n, d_K, q_min, feasibility, theta(r), the key-entropy bound and epsilon*."
)
async def get_bounds(
        m: int = Query(..., ge=1, description="Private key length"),
        epsilon: float = Query(..., description="Error-rate threshold"),
        tau: float = Query(..., description="Security constant"),
        r: int = Query(..., ge=1, description="Reconciled-set size"),
        tau_s: float = Query(0.05, description="Sifting margin constant"),
) -> Any:
    """
    Derive protocol parameters and security bounds.

    Args:
        m (int): Private key length
        epsilon (float): Error-rate threshold
        tau (float): Security constant
        r (int): Reconciled-set size
        tau_s (float): Sifting margin constant

    Returns:
        BoundsResponse: Parameters, bound report and epsilon*
    """
    try:
        params = bounds.derive_params(m, epsilon, tau, tau_s, r)
        report = bounds.bound_report(m, epsilon, tau, r)
    except ParameterError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    return BoundsResponse(params=params, report=report, epsilon_star=bounds.epsilon_star())
