import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sqlalchemy.orm import Session

from app.database.models import SimulationRun
from app.database.repository import RunRepository
from app.exceptions import PadExhaustedError, ParameterError, QKDError
from app.models.schemas import (
    ProtocolParams,
    ReconcileConfig,
    RunConfig,
    SessionRecord,
    SourceModel,
    SourceVariant,
    SweepRow,
)
from app.services import bounds, gf2
from app.services.protocol import run_session
from app.utils.file_utils import read_matrix, write_transcript

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("epsilon", "tau", "r", "interception_probability", "delta")
_MATRIX_PARAMETERS = ("epsilon", "tau", "r")

SessionTask = Tuple[
    ProtocolParams, SourceModel, ReconcileConfig, int, np.ndarray, Optional[int], Optional[int], Optional[str]
]


def _run_one(task: SessionTask) -> SessionRecord:
    """Run a single session; faults become a row with fault set."""
    params, source, reconcile_config, seed, matrix, pad_bits, pad_seed, transcript_dir = task
    try:
        outcome = run_session(
            params, source, reconcile_config, seed, matrix, pad_bits=pad_bits, pad_seed=pad_seed
        )
    except QKDError as e:
        logger.error(f"Session {seed} faulted: {str(e)}")
        consumed = e.consumed if isinstance(e, PadExhaustedError) else 0
        return SessionRecord(
            seed=seed, n=0, s=params.s, r=params.r, m=params.m, qber=None, validated=False,
            fault=True, pad_consumed=consumed, net_gain=-consumed, keys_equal=False,
        )
    if transcript_dir:
        write_transcript(outcome.transcript.log, transcript_dir, seed)
    return outcome.to_record()


class SessionService:
    """Service running batches of sessions, parameter sweeps and stored runs."""

    @staticmethod
    def derive_session_seed(master_seed: int, index: int) -> int:
        """Independent 63-bit seed for session `index` of a run."""
        state = np.random.SeedSequence([master_seed, index]).generate_state(2, dtype=np.uint64)
        return int(state[0]) & (2**63 - 1)

    @staticmethod
    def derive_params(config: RunConfig) -> ProtocolParams:
        return bounds.derive_params(config.m, config.epsilon, config.tau, config.tau_s, config.r)

    @staticmethod
    def load_matrix(config: RunConfig, params: ProtocolParams, regenerate: bool = False) -> np.ndarray:
        """
        Read the configured matrix file, or search for a matrix seeded by matrix_seed (or seed).

        Args:
            config (RunConfig): Run configuration
            params (ProtocolParams): Parameters fixing m, r and d_K
            regenerate (bool): Ignore matrix_path, e.g. when a sweep changes r or d_K

        Returns:
            np.ndarray: The m x r matrix
        """
        if config.matrix_path and not regenerate:
            return read_matrix(config.matrix_path)
        if not params.feasible:
            raise ParameterError(
                f"m={params.m} exceeds the feasible maximum {params.feasible_m_max} for r={params.r}"
            )
        seed = config.matrix_seed if config.matrix_seed is not None else config.seed
        return gf2.generate_pa_matrix(params.m, params.r, params.d_k, np.random.default_rng(seed))

    @staticmethod
    def run_sessions(
            config: RunConfig,
            params: Optional[ProtocolParams] = None,
            matrix: Optional[np.ndarray] = None,
    ) -> List[SessionRecord]:
        """
        Run config.sessions sessions with seeds derived from config.seed.

        Args:
            config (RunConfig): Run configuration
            params (ProtocolParams): Precomputed parameters, derived from config when absent
            matrix (np.ndarray): Precomputed matrix, loaded from config when absent

        Returns:
            List[SessionRecord]: One record per session in seed order
        """
        params = params or SessionService.derive_params(config)
        if matrix is None:
            matrix = SessionService.load_matrix(config, params)
        source = config.source_model()
        reconcile_config = config.reconcile_config()
        tasks: List[SessionTask] = [
            (
                params, source, reconcile_config, SessionService.derive_session_seed(config.seed, index),
                matrix, config.pad_bits, config.pad_seed, config.transcript_dir,
            )
            for index in range(config.sessions)
        ]
        logger.info(f"Running {len(tasks)} sessions with {config.workers} worker(s)")
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as executor:
                return list(executor.map(_run_one, tasks))
        return [_run_one(task) for task in tasks]

    @staticmethod
    def summarize(records: Sequence[SessionRecord]) -> Dict[str, Any]:
        """Aggregate columns over a batch of records."""
        frame = pd.DataFrame([record.model_dump() for record in records])
        if frame.empty:
            return {"sessions": 0, "mean_qber": None, "validation_rate": 0.0, "mean_net_gain": 0.0, "fault_count": 0}
        mean_qber = frame["qber"].astype(float).mean()
        return {
            "sessions": int(len(frame)),
            "mean_qber": None if pd.isna(mean_qber) else float(mean_qber),
            "validation_rate": float(frame["validated"].mean()),
            "mean_net_gain": float(frame["net_gain"].mean()),
            "fault_count": int(frame["fault"].sum()),
        }

    @staticmethod
    def point_config(config: RunConfig, parameter: str, value: float) -> RunConfig:
        """Configuration of one sweep grid point."""
        if parameter not in SWEEP_PARAMETERS:
            raise ParameterError(f"Unknown sweep parameter '{parameter}'; choose from {', '.join(SWEEP_PARAMETERS)}")
        update: Dict[str, Any] = {parameter: int(value) if parameter == "r" else value}
        if parameter == "delta":
            update["source"] = SourceVariant.IID_BELL_DIAGONAL
        if parameter == "interception_probability":
            update["source"] = SourceVariant.INTERCEPT_RESEND
        return RunConfig.model_validate({**config.model_dump(), **update})

    @staticmethod
    def sweep(
            config: RunConfig, parameter: str, grid: Sequence[float]
    ) -> Tuple[List[SweepRow], List[SessionRecord]]:
        """
        Run the configured sessions at every grid point and aggregate per point.

        Every grid point reuses the same session seeds. The matrix is searched
        again whenever the parameter changes r or d_K.

        Returns:
            Tuple[List[SweepRow], List[SessionRecord]]: Aggregates in grid order and all session rows
        """
        if not grid:
            raise ParameterError("Sweep grid must not be empty")
        if parameter not in SWEEP_PARAMETERS:
            raise ParameterError(f"Unknown sweep parameter '{parameter}'; choose from {', '.join(SWEEP_PARAMETERS)}")

        shared_matrix = None
        if parameter not in _MATRIX_PARAMETERS:
            shared_matrix = SessionService.load_matrix(config, SessionService.derive_params(config))

        frames = []
        thetas = {}
        all_records: List[SessionRecord] = []
        for value in grid:
            point = SessionService.point_config(config, parameter, value)
            params = SessionService.derive_params(point)
            matrix = shared_matrix
            if matrix is None:
                matrix = SessionService.load_matrix(point, params, regenerate=True)
            records = SessionService.run_sessions(point, params=params, matrix=matrix)
            all_records.extend(records)
            frame = pd.DataFrame([record.model_dump() for record in records])
            frame["value"] = float(value)
            frames.append(frame)
            thetas[float(value)] = bounds.theta(params.r, params.tau)

        combined = pd.concat(frames, ignore_index=True)
        combined["qber"] = combined["qber"].astype(float)
        grouped = combined.groupby("value", sort=False).agg(
            sessions=("seed", "size"),
            mean_qber=("qber", "mean"),
            validation_rate=("validated", "mean"),
            mean_net_gain=("net_gain", "mean"),
            fault_count=("fault", "sum"),
        )
        rows = [
            SweepRow(
                parameter=parameter,
                value=value,
                sessions=int(row.sessions),
                mean_qber=None if pd.isna(row.mean_qber) else float(row.mean_qber),
                validation_rate=float(row.validation_rate),
                mean_net_gain=float(row.mean_net_gain),
                fault_count=int(row.fault_count),
                theta=thetas[value],
            )
            for value, row in grouped.iterrows()
        ]
        return rows, all_records

    @staticmethod
    async def run_and_store(db: Session, config: RunConfig) -> Tuple[SimulationRun, List[SessionRecord]]:
        """
        Run the configured sessions and persist the run with its rows.

        Args:
            db (Session): Database session
            config (RunConfig): Run configuration

        Returns:
            Tuple[SimulationRun, List[SessionRecord]]: Stored run and its records
        """
        records = SessionService.run_sessions(config)
        summary = SessionService.summarize(records)
        run = RunRepository.create_run(
            db,
            kind="run",
            master_seed=config.seed,
            config=config.model_dump(mode="json"),
            validation_rate=summary["validation_rate"],
            session_count=summary["sessions"],
        )
        RunRepository.save_records(db, run.id, records)
        logger.info(f"Stored run {run.id} with {len(records)} sessions")
        return run, records

    @staticmethod
    async def sweep_and_store(
            db: Session, config: RunConfig, parameter: str, grid: Sequence[float]
    ) -> Tuple[SimulationRun, List[SweepRow]]:
        """
        Run a sweep and persist it as one run holding the sessions of every grid point.

        Args:
            db (Session): Database session
            config (RunConfig): Base run configuration
            parameter (str): Swept parameter
            grid (Sequence[float]): Parameter values

        Returns:
            Tuple[SimulationRun, List[SweepRow]]: Stored run and the per-point aggregates
        """
        rows, records = SessionService.sweep(config, parameter, grid)
        summary = SessionService.summarize(records)
        stored_config = config.model_dump(mode="json")
        stored_config["sweep"] = {"parameter": parameter, "grid": [float(value) for value in grid]}
        run = RunRepository.create_run(
            db,
            kind="sweep",
            master_seed=config.seed,
            config=stored_config,
            validation_rate=summary["validation_rate"],
            session_count=summary["sessions"],
        )
        RunRepository.save_records(db, run.id, records)
        logger.info(f"Stored sweep {run.id} over {parameter} with {len(rows)} grid points")
        return run, rows
