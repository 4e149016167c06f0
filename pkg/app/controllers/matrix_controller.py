from fastapi import APIRouter, HTTPException, status
from typing import Any
import numpy as np

from app.exceptions import MatrixSearchExhaustedError, ParameterError
from app.models.schemas import (
    ErrorResponse,
    GenerateMatrixRequest,
    MatrixResponse,
    VerifyMatrixRequest,
    VerifyMatrixResponse,
)
from app.services import gf2

# Create router
router = APIRouter(tags=["Privacy Amplification Matrices"])


@router.post(
    "/matrices",
    response_model=MatrixResponse,
    responses={400: {"model": ErrorResponse}, 422: {"model": ErrorResponse}},
    summary="Generate a privacy-amplification matrix",
    description="Search seeded random m x r matrices until one has independent rows and minimum "
                "combination weight at least d_K."
)
async def generate_matrix(request: GenerateMatrixRequest) -> Any:
    """
    Generate a privacy-amplification matrix.

    Args:
        request (GenerateMatrixRequest): Dimensions, weight target and seed

    Returns:
        MatrixResponse: The matrix rows and its verified weight
    """
    try:
        K = gf2.generate_pa_matrix(request.m, request.r, request.d_k, np.random.default_rng(request.seed))
    except MatrixSearchExhaustedError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    except ParameterError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    report = gf2.min_combination_weight(K)
    return MatrixResponse(
        m=request.m,
        r=request.r,
        d_k=request.d_k,
        rows=[gf2.to_bitstring(row) for row in K],
        min_weight=report.min_weight,
        full_rank=report.full_rank,
    )


@router.post(
    "/matrices/verify",
    response_model=VerifyMatrixResponse,
    responses={400: {"model": ErrorResponse}},
    summary="Verify a privacy-amplification matrix",
    description="Exhaustively compute the minimum weight over all nonzero row combinations."
)
async def verify_matrix(request: VerifyMatrixRequest) -> Any:
    """
    Verify a privacy-amplification matrix.

    Args:
        request (VerifyMatrixRequest): Matrix rows and optional weight target

    Returns:
        VerifyMatrixResponse: Minimum weight, rank flag, witness and verdict
    """
    try:
        report = gf2.min_combination_weight(gf2.as_bitmatrix(request.rows))
    except ParameterError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    passes = None
    if request.d_k is not None:
        passes = report.full_rank and report.min_weight >= request.d_k
    return VerifyMatrixResponse(
        min_weight=report.min_weight,
        full_rank=report.full_rank,
        witness=gf2.to_bitstring(report.witness),
        passes=passes,
    )
