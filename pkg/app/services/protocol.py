"""Session state machine: sifting, validation, reconciled-set selection,
privacy amplification and the net-gain ledger."""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from app.exceptions import DimensionMismatchError, ParameterError, ProtocolFault
from app.models.schemas import ProtocolParams, ReconcileConfig, SessionRecord, SourceModel
from app.services import gf2
from app.services.bounds import exact
from app.services.cascade import (
    ChannelMessage,
    ClassicalLink,
    ReconcileReport,
    default_pad_length,
    estimate_error_rate,
    reconcile,
)
from app.services.quantum import MeasurementRecord, sample_transmission

logger = logging.getLogger(__name__)

Bits = npt.NDArray[np.uint8]
Indices = npt.NDArray[np.int64]


@dataclass(frozen=True)
class ClassicalData:
    """Everything the two parties generate: bases and measurement outcomes."""
    a: Bits
    b: Bits
    alpha: Bits
    beta: Bits

    def __post_init__(self) -> None:
        lengths = {arr.shape[0] for arr in (self.a, self.b, self.alpha, self.beta)}
        if len(lengths) != 1:
            raise DimensionMismatchError("Classical data strings must share one length")

    @classmethod
    def from_record(cls, record: MeasurementRecord) -> "ClassicalData":
        return cls(a=record.a, b=record.b, alpha=record.alpha, beta=record.beta)


@dataclass(frozen=True)
class SiftResult:
    d: Bits
    sifted: Optional[Indices]

    @property
    def failed(self) -> bool:
        return self.sifted is None


@dataclass(frozen=True)
class Transcript:
    """
    Public announcement of a session.

    ``e`` flags the positions of ``sifted`` where an error was found; it is None
    when sifting failed. Estimation positions lie outside ``sifted``.
    """
    a: Bits
    d: Bits
    e: Optional[Bits]
    log: Tuple[ChannelMessage, ...]
    validated: bool
    sifted: Optional[Indices] = None
    estimation_indices: Indices = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    estimation_errors: Indices = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def sifted_indices(self) -> Indices:
        return self.sifted if self.sifted is not None else np.zeros(0, dtype=np.int64)

    def error_positions(self) -> Indices:
        if self.e is None or self.sifted is None:
            return np.zeros(0, dtype=np.int64)
        return self.sifted[self.e.astype(bool)]


@dataclass(frozen=True)
class SiftState:
    S: Indices
    E: Indices
    R: Indices
    T: Indices

    @property
    def t(self) -> int:
        return int(self.T.shape[0])


@dataclass
class SessionOutcome:
    kappa_a: Bits
    kappa_b: Optional[Bits]
    validated: bool
    qber: Optional[float]
    pad_consumed: int
    net_gain: int
    transcript: Transcript
    params: ProtocolParams
    seed: int
    record: MeasurementRecord
    reconciliation: Optional[ReconcileReport] = None
    sift_state: Optional[SiftState] = None

    @property
    def keys_equal(self) -> bool:
        return self.kappa_b is not None and bool(np.array_equal(self.kappa_a, self.kappa_b))

    def to_record(self) -> SessionRecord:
        return SessionRecord(
            seed=self.seed,
            n=self.record.n,
            s=self.params.s,
            r=self.params.r,
            m=self.params.m,
            qber=self.qber,
            validated=self.validated,
            fault=False,
            pad_consumed=self.pad_consumed,
            net_gain=self.net_gain,
            keys_equal=self.keys_equal,
        )


def sift(a: npt.ArrayLike, b: npt.ArrayLike, s: int) -> SiftResult:
    """
    Keep the first s positions where the bases agree.

    Returns:
        SiftResult: d_i = [a_i == b_i], and the sifted indices or None when fewer than s agree
    """
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Basis strings differ in length: {a.shape[0]} vs {b.shape[0]}")
    if not 0 <= s <= a.shape[0]:
        raise ParameterError(f"Cannot sift {s} bits from {a.shape[0]} pairs")
    d = (a == b).astype(np.uint8)
    agreeing = np.flatnonzero(d)
    if agreeing.shape[0] < s:
        return SiftResult(d=d, sifted=None)
    return SiftResult(d=d, sifted=agreeing[:s].astype(np.int64))


def validate(e: int, epsilon: float, s: int) -> bool:
    """Validation test e < epsilon * s, evaluated exactly."""
    if not 0 <= e <= s:
        raise ParameterError(f"Error count must lie in [0, s={s}], got {e}")
    return bool(e < exact(epsilon) * s)


def reconciled_set(S: npt.ArrayLike, E: npt.ArrayLike, r: int) -> Indices:
    """The first r indices of S that are not in E, ascending."""
    remaining = np.setdiff1d(np.asarray(S, dtype=np.int64), np.asarray(E, dtype=np.int64))
    if remaining.shape[0] < r:
        raise ParameterError(f"Only {remaining.shape[0]} error-free sifted positions, need r={r}")
    return remaining[:r]


def sift_state(S: npt.ArrayLike, E: npt.ArrayLike, r: int) -> SiftState:
    S = np.asarray(S, dtype=np.int64)
    E = np.asarray(E, dtype=np.int64)
    R = reconciled_set(S, E, r)
    return SiftState(S=S, E=E, R=R, T=np.setdiff1d(S, np.union1d(E, R)))


def privacy_amplify(K: npt.ArrayLike, alpha_r: npt.ArrayLike) -> Bits:
    """Private key K alpha_R mod 2."""
    return gf2.matvec_mod2(K, alpha_r)


def fallback_key(m: int, rng: np.random.Generator) -> Bits:
    """Uniform m-bit key Alice outputs when the validation test fails."""
    return rng.integers(0, 2, size=m, dtype=np.uint8)


def transcript_compatible(C: ClassicalData, P: Transcript) -> bool:
    """
    Whether classical data C could have produced the public announcement P.

    C must repeat Alice's bases, have Bob's basis equal to Alice's exactly where
    d_i = 1, and disagree on the announced error positions of S while agreeing
    on the rest of S.
    """
    if C.a.shape != P.a.shape or P.d.shape != C.a.shape:
        raise DimensionMismatchError("Classical data and transcript lengths differ")
    if not np.array_equal(C.a, P.a):
        return False
    if not np.array_equal(C.a == C.b, P.d.astype(bool)):
        return False
    if P.e is None or P.sifted is None:
        return True
    S = P.sifted
    differs = C.alpha[S] != C.beta[S]
    return bool(np.array_equal(differs, P.e.astype(bool)))


def estimation_sample_size(params: ProtocolParams, fraction: float) -> int:
    return max(1, math.ceil(fraction * params.s))


def session_pairs(params: ProtocolParams, sample_size: int) -> int:
    """Pairs needed to sift s + sample_size bits with the tau_S margin."""
    eps = exact(params.epsilon)
    margin = (1 - eps) / 2 - exact(params.tau_s)
    return max(params.n, math.ceil((params.s + sample_size) * (1 - eps) / margin))


def run_session(
        params: ProtocolParams,
        source: SourceModel,
        config: ReconcileConfig,
        master_seed: int,
        matrix: npt.ArrayLike,
        session_index: int = 0,
        pad_bits: Optional[int] = None,
        pad_seed: Optional[int] = None,
) -> SessionOutcome:
    """
    Run one complete session: transmission, sifting, estimation, Cascade,
    validation, and privacy amplification or the fallback key.

    Args:
        params (ProtocolParams): Setup parameters
        source (SourceModel): Source and eavesdropper model
        config (ReconcileConfig): Reconciliation settings
        master_seed (int): Seed every random choice of the session derives from
        matrix: Verified m x r privacy-amplification matrix
        session_index (int): Index mixed into the seed
        pad_bits (int): Pad length, defaults to a worst-case bound
        pad_seed (int): Seed of the shared pad, defaults to a stream of master_seed

    Returns:
        SessionOutcome: Keys, validation outcome, ledger and transcript

    Raises:
        PadExhaustedError: The pad ran out
        ProtocolFault: Keys differ although validation passed with no residual error
    """
    K = gf2.as_bitmatrix(matrix)
    if K.shape != (params.m, params.r):
        raise DimensionMismatchError(f"Matrix is {K.shape[0]}x{K.shape[1]}, expected {params.m}x{params.r}")
    gf2.verify_pa_matrix(K, params.d_k)

    root = np.random.SeedSequence([master_seed, session_index])
    quantum_seq, estimate_seq, pad_seq, fallback_seq, shuffle_seq = root.spawn(5)
    if config.shuffle_seed is None:
        config = config.model_copy(update={"shuffle_seed": int(shuffle_seq.generate_state(1)[0])})

    sample_size = estimation_sample_size(params, config.estimation_fraction)
    record = sample_transmission(source, session_pairs(params, sample_size), np.random.default_rng(quantum_seq))
    sifting = sift(record.a, record.b, params.s + sample_size)

    if sifting.sifted is None:
        logger.warning(f"Sifting failed for seed {master_seed}: fewer than {params.s + sample_size} agreeing bases")
        transcript = Transcript(a=record.a, d=sifting.d, e=None, log=(), validated=False)
        return SessionOutcome(
            kappa_a=fallback_key(params.m, np.random.default_rng(fallback_seq)),
            kappa_b=None,
            validated=False,
            qber=None,
            pad_consumed=0,
            net_gain=0,
            transcript=transcript,
            params=params,
            seed=master_seed,
            record=record,
        )

    pad_length = pad_bits if pad_bits is not None else default_pad_length(
        params.s, config.pass_count, sample_size
    )
    pad_rng = np.random.default_rng(pad_seed) if pad_seed is not None else np.random.default_rng(pad_seq)
    link = ClassicalLink.open(pad_rng.integers(0, 2, size=pad_length, dtype=np.uint8), budget=params.q_min)

    sifted = sifting.sifted
    estimate = estimate_error_rate(
        record.alpha[sifted],
        record.beta[sifted],
        config.estimation_fraction,
        link,
        np.random.default_rng(estimate_seq),
        sample_size=sample_size,
    )
    S = np.delete(sifted, estimate.sample_indices)

    # Blocks are never planned for a rate below the validation threshold
    report = reconcile(
        record.alpha[S], record.beta[S], config, link, estimated_rate=estimate.rate, rate_floor=params.epsilon
    )
    e = np.zeros(params.s, dtype=np.uint8)
    e[list(report.error_positions)] = 1
    E = S[e.astype(bool)]
    validated = validate(int(E.shape[0]), params.epsilon, params.s)
    pad_consumed = link.pad_consumed
    if link.alice_pad.over_budget:
        logger.warning(f"Session {master_seed} consumed {pad_consumed} pad bits, above the q_min budget {params.q_min}")

    state = None
    if validated:
        state = sift_state(S, E, params.r)
        kappa_a = privacy_amplify(K, record.alpha[state.R])
        kappa_b: Optional[Bits] = privacy_amplify(K, record.beta[state.R])
        net_gain = params.m - pad_consumed
        if report.residual_mismatch == 0 and not np.array_equal(kappa_a, kappa_b):
            raise ProtocolFault(f"Keys differ after a clean reconciliation in session {master_seed}")
    else:
        kappa_a = fallback_key(params.m, np.random.default_rng(fallback_seq))
        kappa_b = None
        net_gain = -pad_consumed

    transcript = Transcript(
        a=record.a,
        d=sifting.d,
        e=e,
        log=tuple(link.transcript),
        validated=validated,
        sifted=S,
        estimation_indices=sifted[estimate.sample_indices],
        estimation_errors=sifted[estimate.mismatch_indices],
    )
    qber = float(E.shape[0]) / params.s
    logger.info(
        f"Session {master_seed}: qber={qber:.4f}, validated={validated}, "
        f"pad_consumed={pad_consumed}, net_gain={net_gain}"
    )
    return SessionOutcome(
        kappa_a=kappa_a,
        kappa_b=kappa_b,
        validated=validated,
        qber=qber,
        pad_consumed=pad_consumed,
        net_gain=net_gain,
        transcript=transcript,
        params=params,
        seed=master_seed,
        record=record,
        reconciliation=report,
        sift_state=state,
    )
