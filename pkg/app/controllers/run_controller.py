from fastapi import APIRouter, Depends, HTTPException, Path, Query, status
from typing import Any
from sqlalchemy.orm import Session

from app.database.connection import get_db
from app.database.models import SimulationRun
from app.database.repository import RunRepository
from app.exceptions import ConfigurationError, MatrixSearchExhaustedError, ParameterError
from app.models.schemas import (
    ErrorResponse,
    RunConfig,
    RunListResponse,
    RunResponse,
    RunSummary,
    SweepRequest,
    SweepResponse,
)
from app.services.session_service import SessionService

# Create router
router = APIRouter(tags=["Simulation Runs"])


def _summary(run: SimulationRun) -> RunSummary:
    return RunSummary(
        id=run.id,
        kind=run.kind,
        master_seed=int(run.master_seed),
        session_count=run.session_count,
        validation_rate=run.validation_rate,
        created_at=run.created_at,
    )


def _response(run: SimulationRun) -> RunResponse:
    return RunResponse(
        **_summary(run).model_dump(),
        config=run.config,
        records=RunRepository.records_of(run),
    )


@router.post(
    "/runs",
    response_model=RunResponse,
    status_code=status.HTTP_201_CREATED,
    responses={400: {"model": ErrorResponse}, 422: {"model": ErrorResponse}},
    summary="Run and store simulation sessions",
    description="Run the configured number of sessions and store one row per session."
)
async def create_run(config: RunConfig, db: Session = Depends(get_db)) -> Any:
    """
    Run and store simulation sessions.

    Args:
        config (RunConfig): Run configuration
        db (Session): Database session

    Returns:
        RunResponse: Stored run with its session rows
    """
    try:
        run, _ = await SessionService.run_and_store(db, config)
    except MatrixSearchExhaustedError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    except (ParameterError, ConfigurationError) as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    return _response(run)


@router.post(
    "/runs/sweeps",
    response_model=SweepResponse,
    status_code=status.HTTP_201_CREATED,
    responses={400: {"model": ErrorResponse}, 422: {"model": ErrorResponse}},
    summary="Run and store a parameter sweep",
    description="Run the configured sessions at every grid point and store them as one sweep."
)
async def create_sweep(request: SweepRequest, db: Session = Depends(get_db)) -> Any:
    """
    Run and store a parameter sweep.

    Args:
        request (SweepRequest): Base configuration, parameter and grid
        db (Session): Database session

    Returns:
        SweepResponse: Stored sweep with its session rows and per-point aggregates
    """
    try:
        run, rows = await SessionService.sweep_and_store(db, request.config, request.parameter, request.grid)
    except MatrixSearchExhaustedError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    except (ParameterError, ConfigurationError) as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    return SweepResponse(**_response(run).model_dump(), rows=rows)


@router.get(
    "/runs/{run_id}",
    response_model=RunResponse,
    responses={404: {"model": ErrorResponse}},
    summary="Get a stored run by ID",
    description="Retrieve a stored run with its configuration and session rows."
)
async def get_run(
        run_id: str = Path(..., description="ID of the stored run"),
        db: Session = Depends(get_db)
) -> Any:
    """
    Get a stored run by ID.

    Args:
        run_id (str): ID of the stored run
        db (Session): Database session

    Returns:
        RunResponse: Stored run
    """
    run = RunRepository.get_run(db, run_id)
    if not run:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail=f"Run with ID {run_id} not found"
        )
    return _response(run)


@router.get(
    "/runs",
    response_model=RunListResponse,
    summary="List stored runs",
    description="Retrieve stored runs, newest first, with pagination."
)
async def list_runs(
        skip: int = Query(0, ge=0, description="Number of records to skip"),
        limit: int = Query(10, ge=1, le=100, description="Maximum number of records to return"),
        db: Session = Depends(get_db)
) -> Any:
    """
    List stored runs.

    Args:
        skip (int): Number of records to skip
        limit (int): Maximum number of records to return
        db (Session): Database session

    Returns:
        RunListResponse: Page of run summaries
    """
    runs = RunRepository.list_runs(db, skip=skip, limit=limit)
    return RunListResponse(
        runs=[_summary(run) for run in runs],
        total=RunRepository.count_runs(db),
        skip=skip,
        limit=limit,
    )
