"""Bit-vector and binary-matrix arithmetic over GF(2).

Bit vectors are one-dimensional ``numpy.uint8`` arrays holding 0/1 entries and
matrices are two-dimensional ones. Index 0 is the leftmost written bit in every
textual format.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, List, Optional, Tuple

import galois
import numpy as np
import numpy.typing as npt

from app.config import settings
from app.exceptions import (
    DimensionMismatchError,
    ExhaustiveLimitError,
    MatrixSearchExhaustedError,
    ParameterError,
    RankDeficientError,
)

logger = logging.getLogger(__name__)

BitVec = npt.NDArray[np.uint8]
BitMatrix = npt.NDArray[np.uint8]

# Number of set bits in every byte value
_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1)


@dataclass(frozen=True)
class WeightReport:
    """Result of the exhaustive minimum-weight search over row combinations."""
    min_weight: int
    witness: BitVec
    full_rank: bool


def _parse_text_bits(text: str) -> List[int]:
    bits = []
    for ch in text.strip():
        if ch not in "01":
            raise ParameterError(f"Invalid bit character {ch!r}")
        bits.append(int(ch))
    return bits


def as_bitvec(bits: Any) -> BitVec:
    """Coerce a string of 0/1 characters or a sequence of bits to a BitVec."""
    if isinstance(bits, str):
        bits = _parse_text_bits(bits)
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ParameterError(f"Bit vector must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ParameterError("Bit vector entries must be 0 or 1")
    return arr.astype(np.uint8)


def as_bitmatrix(rows: Any) -> BitMatrix:
    """Coerce a list of row strings or a 2-D array of bits to a BitMatrix."""
    if isinstance(rows, (list, tuple)) and rows and isinstance(rows[0], str):
        rows = [_parse_text_bits(row) for row in rows]
        if len({len(row) for row in rows}) != 1:
            raise ParameterError("All matrix rows must have the same length")
    arr = np.asarray(rows)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError(f"Matrix must be two-dimensional and non-empty, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ParameterError("Matrix entries must be 0 or 1")
    return arr.astype(np.uint8)


def to_bitstring(v: BitVec) -> str:
    return "".join(str(int(bit)) for bit in v)


def weight(v: Any) -> int:
    """Number of 1-entries of a bit vector."""
    return int(np.count_nonzero(as_bitvec(v)))


def matvec_mod2(K: Any, x: Any) -> BitVec:
    """Compute K x over GF(2)."""
    K = as_bitmatrix(K)
    x = as_bitvec(x)
    if x.shape[0] != K.shape[1]:
        raise DimensionMismatchError(
            f"Vector of length {x.shape[0]} does not match matrix with {K.shape[1]} columns"
        )
    product = K.astype(np.int64) @ x.astype(np.int64)
    return (product & 1).astype(np.uint8)


def rank(K: Any) -> int:
    """Rank of K over GF(2)."""
    return int(np.linalg.matrix_rank(galois.GF2(as_bitmatrix(K))))


def _packed_span(rows: BitMatrix) -> npt.NDArray[np.uint8]:
    # Row i of the result is the combination whose coefficient bits are the binary digits of i
    packed = np.packbits(rows, axis=1)
    span = np.zeros((1, packed.shape[1]), dtype=np.uint8)
    for row in packed:
        span = np.concatenate([span, span ^ row])
    return span


def _coefficients(index: int, count: int) -> List[int]:
    return [(index >> bit) & 1 for bit in range(count)]


def min_combination_weight(K: Any, limit: Optional[int] = None) -> WeightReport:
    """
    Exact minimum weight of x^T K over all nonzero coefficient vectors x.

    The rows are split in two halves whose spans are enumerated separately;
    every combination is then the XOR of one element of each span.

    Args:
        K: Binary matrix with m rows
        limit: Largest m accepted, defaults to settings.EXHAUSTIVE_WEIGHT_LIMIT

    Returns:
        WeightReport: Minimum weight, a coefficient vector achieving it, and
        whether the rows are linearly independent
    """
    K = as_bitmatrix(K)
    m, r = K.shape
    limit = settings.EXHAUSTIVE_WEIGHT_LIMIT if limit is None else limit
    if m > limit:
        raise ExhaustiveLimitError(m, limit)

    low_count = (m + 1) // 2
    low_span = _packed_span(K[:low_count])
    high_span = _packed_span(K[low_count:])

    best_weight = r + 1
    best_low, best_high = 0, 0
    for high_index, high_row in enumerate(high_span):
        weights = _POPCOUNT[low_span ^ high_row].sum(axis=1)
        if high_index == 0:
            # skip the all-zero combination
            weights[0] = r + 1
        low_index = int(np.argmin(weights))
        if weights[low_index] < best_weight:
            best_weight = int(weights[low_index])
            best_low, best_high = low_index, high_index
            if best_weight == 0:
                break

    witness = np.array(
        _coefficients(best_low, low_count) + _coefficients(best_high, m - low_count),
        dtype=np.uint8,
    )
    return WeightReport(min_weight=best_weight, witness=witness, full_rank=best_weight > 0)


def generate_pa_matrix(
        m: int,
        r: int,
        d_k: int,
        rng: np.random.Generator,
        max_attempts: Optional[int] = None,
        limit: Optional[int] = None,
) -> BitMatrix:
    """
    Draw uniform random m x r matrices until one has full row rank and every
    nonzero row combination has weight at least d_k.

    Args:
        m (int): Number of rows (private key length)
        r (int): Number of columns (reconciled key length)
        d_k (int): Required minimum combination weight
        rng (np.random.Generator): Source of randomness
        max_attempts (int): Attempt budget, defaults to settings.MATRIX_ATTEMPT_BUDGET
        limit (int): Exhaustive verification limit on m

    Returns:
        BitMatrix: The accepted matrix

    Raises:
        MatrixSearchExhaustedError: No matrix accepted within the budget
    """
    limit = settings.EXHAUSTIVE_WEIGHT_LIMIT if limit is None else limit
    if m < 1 or r < 1:
        raise ParameterError(f"Matrix dimensions must be positive, got {m}x{r}")
    if m > limit:
        raise ExhaustiveLimitError(m, limit)
    if not 0 <= d_k <= r:
        raise ParameterError(f"d_K must lie in [0, r={r}], got {d_k}")
    attempts = settings.MATRIX_ATTEMPT_BUDGET if max_attempts is None else max_attempts

    best_weight = -1
    for trial in range(1, attempts + 1):
        K = rng.integers(0, 2, size=(m, r), dtype=np.uint8)
        # a single row is itself a combination, so a light row bounds the minimum
        lightest_row = int(K.sum(axis=1).min())
        if lightest_row < d_k and lightest_row <= best_weight:
            continue
        report = min_combination_weight(K, limit=limit)
        best_weight = max(best_weight, report.min_weight)
        if report.full_rank and report.min_weight >= d_k:
            logger.info(
                f"Found {m}x{r} matrix with minimum combination weight "
                f"{report.min_weight} >= {d_k} after {trial} trials"
            )
            return K

    logger.warning(f"Matrix search exhausted {attempts} trials, best weight {best_weight}")
    raise MatrixSearchExhaustedError(attempts, max(best_weight, 0), d_k)


@lru_cache(maxsize=64)
def _cached_report(data: bytes, rows: int, cols: int) -> WeightReport:
    K = np.frombuffer(data, dtype=np.uint8).reshape(rows, cols)
    return min_combination_weight(K)


def verify_pa_matrix(K: Any, d_k: int) -> WeightReport:
    """Check that K has independent rows and minimum combination weight >= d_k."""
    K = as_bitmatrix(K)
    report = _cached_report(K.tobytes(), K.shape[0], K.shape[1])
    if not report.full_rank:
        raise RankDeficientError("Privacy-amplification matrix rows are linearly dependent")
    if report.min_weight < d_k:
        raise ParameterError(
            f"Privacy-amplification matrix has minimum combination weight "
            f"{report.min_weight} < d_K = {d_k}"
        )
    return report


def kernel_basis(K: Any) -> List[BitVec]:
    """Basis of {x : K x = 0} for a full-row-rank K; it has r - m vectors."""
    K = as_bitmatrix(K)
    if rank(K) < K.shape[0]:
        raise RankDeficientError("Kernel basis requires a matrix with full row rank")
    null_space = galois.GF2(K).null_space()
    return [np.array(row, dtype=np.uint8) for row in null_space]


def serialize_matrix(K: Any) -> str:
    """Text format: "m r" header line, then one line of r characters per row."""
    K = as_bitmatrix(K)
    lines = [f"{K.shape[0]} {K.shape[1]}"]
    lines.extend(to_bitstring(row) for row in K)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> BitMatrix:
    """Inverse of serialize_matrix."""
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise ParameterError("Empty matrix text")
    header: Tuple[str, ...] = tuple(lines[0].split())
    if len(header) != 2 or not all(part.isdigit() for part in header):
        raise ParameterError(f"Matrix header must be 'm r', got {lines[0]!r}")
    m, r = int(header[0]), int(header[1])
    rows = lines[1:]
    if len(rows) != m:
        raise ParameterError(f"Matrix header announces {m} rows, found {len(rows)}")
    if any(len(row) != r for row in rows):
        raise ParameterError(f"Every matrix row must have {r} characters")
    return as_bitmatrix(rows)
