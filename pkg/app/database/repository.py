import uuid
from sqlalchemy.orm import Session
from typing import Any, Dict, List, Optional, Sequence

from app.database.models import SessionResult, SimulationRun
from app.models.schemas import SessionRecord


class RunRepository:
    """Repository for stored simulation runs."""

    @staticmethod
    def create_run(
            db: Session,
            kind: str,
            master_seed: int,
            config: Dict[str, Any],
            validation_rate: float = 0.0,
            session_count: int = 0,
    ) -> SimulationRun:
        """
        Create a new run record.

        Args:
            db (Session): Database session
            kind (str): "run" for a plain run, "sweep" for a stored parameter sweep
            master_seed (int): Seed all session seeds derive from
            config (Dict[str, Any]): Run configuration as JSON-compatible values
            validation_rate (float): Fraction of validated sessions
            session_count (int): Number of sessions

        Returns:
            SimulationRun: Created run record
        """
        db_run = SimulationRun(
            id=str(uuid.uuid4()),
            kind=kind,
            master_seed=str(master_seed),
            config=config,
            validation_rate=validation_rate,
            session_count=session_count,
        )
        db.add(db_run)
        db.commit()
        db.refresh(db_run)
        return db_run

    @staticmethod
    def save_records(db: Session, run_id: str, records: Sequence[SessionRecord]) -> List[SessionResult]:
        """
        Save the session rows of a run in order.

        Args:
            db (Session): Database session
            run_id (str): Run ID
            records (Sequence[SessionRecord]): Session rows

        Returns:
            List[SessionResult]: Created rows
        """
        rows = []
        for position, record in enumerate(records):
            values = record.model_dump()
            values["seed"] = str(values["seed"])
            row = SessionResult(run_id=run_id, position=position, **values)
            db.add(row)
            rows.append(row)

        db.commit()
        return rows

    @staticmethod
    def get_run(db: Session, run_id: str) -> Optional[SimulationRun]:
        """
        Get a run by ID.

        Args:
            db (Session): Database session
            run_id (str): Run ID

        Returns:
            Optional[SimulationRun]: Run if found, None otherwise
        """
        return db.query(SimulationRun).filter(SimulationRun.id == run_id).first()

    @staticmethod
    def list_runs(db: Session, skip: int = 0, limit: int = 100) -> List[SimulationRun]:
        """
        List runs, newest first, with pagination.

        Args:
            db (Session): Database session
            skip (int): Number of records to skip
            limit (int): Maximum number of records to return

        Returns:
            List[SimulationRun]: List of runs
        """
        return db.query(SimulationRun).order_by(SimulationRun.created_at.desc()).offset(skip).limit(limit).all()

    @staticmethod
    def count_runs(db: Session) -> int:
        return db.query(SimulationRun).count()

    @staticmethod
    def records_of(run: SimulationRun) -> List[SessionRecord]:
        """Session rows of a stored run as records."""
        return [
            SessionRecord(
                seed=int(row.seed), n=row.n, s=row.s, r=row.r, m=row.m, qber=row.qber,
                validated=row.validated, fault=row.fault, pad_consumed=row.pad_consumed,
                net_gain=row.net_gain, keys_equal=row.keys_equal,
            )
            for row in run.sessions
        ]
