import math
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError

from app.config import settings
from app.exceptions import ConfigurationError, ParameterError
from app.models.schemas import RunConfig, SessionRecord, SweepRow
from app.services import gf2
from app.services.cascade import ChannelMessage, transcript_lines

SESSION_CSV_COLUMNS = [
    "seed", "n", "s", "r", "m", "qber", "validated", "fault", "pad_consumed", "net_gain", "keys_equal",
]
SWEEP_CSV_COLUMNS = [
    "parameter", "value", "sessions", "mean_qber", "validation_rate", "mean_net_gain", "fault_count", "theta",
]
_BOOL_COLUMNS = ("validated", "fault", "keys_equal")


def output_path(filename: str) -> str:
    """
    Resolve a bare filename against the output directory.

    Args:
        filename (str): File name or path

    Returns:
        str: The path itself when it has a directory part, otherwise a path in OUTPUT_DIR
    """
    if os.path.dirname(filename):
        return filename
    settings.initialize()
    return os.path.join(settings.OUTPUT_DIR, filename)


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_matrix(K: Any, path: str) -> str:
    """Write a matrix in the "m r" header plus rows text format."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(gf2.serialize_matrix(K))
    return path


def read_matrix(path: str) -> np.ndarray:
    """
    Read a matrix file.

    Raises:
        ConfigurationError: The file is missing or malformed
    """
    try:
        with open(path, encoding="utf-8") as handle:
            return gf2.parse_matrix(handle.read())
    except OSError as e:
        raise ConfigurationError(f"Cannot read matrix file: {e}", path)
    except ParameterError as e:
        raise ConfigurationError(f"Malformed matrix file: {e}", path)


def load_run_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Load a flat key = value run configuration.

    Args:
        path (str): Config file path; '#' starts a comment
        overrides (Dict[str, Any]): Values taking precedence over the file, None entries ignored

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigurationError: Unreadable file, keys without values, unknown keys or invalid values
    """
    if not os.path.isfile(path):
        raise ConfigurationError("Config file not found", path)
    values: Dict[str, Any] = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigurationError(f"Key '{key}' has no value", path)
        if value.strip() != "":
            values[key] = value.strip()
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigurationError(str(e), path)


def records_to_frame(records: Sequence[SessionRecord]) -> pd.DataFrame:
    frame = pd.DataFrame([record.model_dump() for record in records], columns=SESSION_CSV_COLUMNS)
    for column in _BOOL_COLUMNS:
        frame[column] = frame[column].astype(int)
    return frame


def write_session_csv(records: Sequence[SessionRecord], path: str) -> str:
    """Write one row per session with the fixed column order; booleans as 0/1."""
    _ensure_parent(path)
    records_to_frame(records).to_csv(path, index=False)
    return path


def read_session_csv(path: str) -> List[SessionRecord]:
    """Parse a session CSV back into records."""
    frame = pd.read_csv(path)
    if list(frame.columns) != SESSION_CSV_COLUMNS:
        raise ConfigurationError(f"Unexpected CSV columns {list(frame.columns)}", path)
    records = []
    for row in frame.to_dict(orient="records"):
        qber = row["qber"]
        row["qber"] = None if qber is None or (isinstance(qber, float) and math.isnan(qber)) else float(qber)
        for column in _BOOL_COLUMNS:
            row[column] = bool(row[column])
        records.append(SessionRecord(**row))
    return records


def write_sweep_csv(rows: Sequence[SweepRow], path: str) -> str:
    _ensure_parent(path)
    pd.DataFrame([row.model_dump() for row in rows], columns=SWEEP_CSV_COLUMNS).to_csv(path, index=False)
    return path


def write_transcript(log: Sequence[ChannelMessage], directory: str, seed: int) -> str:
    """Write one session transcript, one message per line."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"session_{seed}.log")
    with open(path, "w", encoding="utf-8") as handle:
        handle.writelines(f"{line}\n" for line in transcript_lines(log))
    return path
