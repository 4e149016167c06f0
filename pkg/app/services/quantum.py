"""Measurement statistics of Bell-state photon pairs in the + and x bases."""
import logging
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np
import numpy.typing as npt
import sympy as sp

from app.exceptions import DimensionMismatchError, ParameterError
from app.models.schemas import SourceModel, SourceVariant

logger = logging.getLogger(__name__)


class Basis(IntEnum):
    PLUS = 0
    TIMES = 1


# Bell indices whose pairs agree (X) or disagree (Y) when both sides measure in basis a
_AGREE: Dict[Basis, FrozenSet[int]] = {Basis.PLUS: frozenset({0, 1}), Basis.TIMES: frozenset({0, 2})}
_DISAGREE: Dict[Basis, FrozenSet[int]] = {Basis.PLUS: frozenset({2, 3}), Basis.TIMES: frozenset({1, 3})}

OUTCOMES: Tuple[Tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class EveLog:
    """Intercept-resend records: pair index, basis and outcome of every interception."""
    indices: npt.NDArray[np.int64]
    bases: npt.NDArray[np.uint8]
    bits: npt.NDArray[np.uint8]


@dataclass(frozen=True)
class MeasurementRecord:
    """
    Outcome of the quantum transmission of n pairs.

    ``bell`` holds the Bell index each pair was emitted in, or -1 where an
    eavesdropper replaced the pair with a product state.
    """
    a: npt.NDArray[np.uint8]
    b: npt.NDArray[np.uint8]
    alpha: npt.NDArray[np.uint8]
    beta: npt.NDArray[np.uint8]
    bell: npt.NDArray[np.int8]
    eve_log: Optional[EveLog] = None

    @property
    def n(self) -> int:
        return int(self.a.shape[0])


def bell_sets(a: Basis) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """Return (X_a, Y_a): Bell indices giving equal / opposite bits when both measure in a."""
    a = Basis(a)
    return _AGREE[a], _DISAGREE[a]


def outcome_dist(c: int, a: Basis, b: Basis) -> Dict[Tuple[int, int], Fraction]:
    """
    Exact joint distribution of (alpha, beta) for Bell state c measured in bases (a, b).

    Equal bases give a perfectly correlated (c in X_a) or anti-correlated
    (c in Y_a) pair of uniform bits; unequal bases give four equally likely outcomes.
    """
    if c not in (0, 1, 2, 3):
        raise ParameterError(f"Bell index must be 0..3, got {c}")
    a, b = Basis(a), Basis(b)
    if a != b:
        return {outcome: Fraction(1, 4) for outcome in OUTCOMES}
    agree = c in _AGREE[a]
    return {
        (alpha, beta): Fraction(1, 2) if (alpha == beta) == agree else Fraction(0)
        for alpha, beta in OUTCOMES
    }


def _outcome_cdf() -> npt.NDArray[np.float64]:
    # cdf[c, a, b, k] over outcomes k = 2 alpha + beta
    table = np.zeros((4, 2, 2, 4))
    for c in range(4):
        for a in Basis:
            for b in Basis:
                dist = outcome_dist(c, a, b)
                table[c, a, b] = [float(dist[outcome]) for outcome in OUTCOMES]
    return np.cumsum(table, axis=-1)


_CDF = _outcome_cdf()

_SQRT2 = sp.sqrt(2)
_BASIS_KETS = {
    Basis.PLUS: ((sp.Integer(1), sp.Integer(0)), (sp.Integer(0), sp.Integer(1))),
    Basis.TIMES: ((1 / _SQRT2, 1 / _SQRT2), (1 / _SQRT2, -1 / _SQRT2)),
}
# Components on |00>, |01>, |10>, |11>
_BELL_KETS = (
    (1 / _SQRT2, 0, 0, 1 / _SQRT2),
    (1 / _SQRT2, 0, 0, -1 / _SQRT2),
    (0, 1 / _SQRT2, 1 / _SQRT2, 0),
    (0, 1 / _SQRT2, -1 / _SQRT2, 0),
)


@lru_cache(maxsize=None)
def exact_amplitude_oracle(c: int, a: Basis, b: Basis, alpha: int, beta: int) -> sp.Expr:
    """Symbolic amplitude <alpha_a beta_b | c> from the ket definitions."""
    if c not in (0, 1, 2, 3) or alpha not in (0, 1) or beta not in (0, 1):
        raise ParameterError(f"Invalid arguments c={c}, alpha={alpha}, beta={beta}")
    left = _BASIS_KETS[Basis(a)][alpha]
    right = _BASIS_KETS[Basis(b)][beta]
    product = [left[i] * right[j] for i in (0, 1) for j in (0, 1)]
    return sp.nsimplify(sp.simplify(sum(p * q for p, q in zip(product, _BELL_KETS[c]))))


def _sample_bell_indices(source: SourceModel, n: int, rng: np.random.Generator) -> npt.NDArray[np.int8]:
    if source.variant == SourceVariant.IID_BELL_DIAGONAL:
        return rng.choice(4, size=n, p=np.asarray(source.probabilities, dtype=float)).astype(np.int8)
    if source.variant == SourceVariant.SCRIPTED:
        # scripts shorter than n repeat cyclically
        return np.resize(np.asarray(source.script, dtype=np.int8), n)
    return np.zeros(n, dtype=np.int8)


def sample_transmission(source: SourceModel, n: int, rng: np.random.Generator) -> MeasurementRecord:
    """
    Sample bases and measurement outcomes for n photon pairs.

    Args:
        source (SourceModel): Source and eavesdropper configuration
        n (int): Number of pairs
        rng (np.random.Generator): Stream the whole record is drawn from

    Returns:
        MeasurementRecord: Bases, outcomes, emitted Bell indices and interception log
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    a = rng.integers(0, 2, size=n, dtype=np.uint8)
    b = rng.integers(0, 2, size=n, dtype=np.uint8)
    bell = _sample_bell_indices(source, n, rng)

    cdf = _CDF[bell, a, b]
    u = rng.random(n)
    k = np.minimum((u[:, None] >= cdf).sum(axis=1), 3)
    alpha = (k >> 1).astype(np.uint8)
    beta = (k & 1).astype(np.uint8)

    eve_log = None
    if source.variant == SourceVariant.INTERCEPT_RESEND:
        intercepted = np.flatnonzero(rng.random(n) < source.interception_probability)
        count = intercepted.shape[0]
        eve_bases = rng.integers(0, 2, size=count, dtype=np.uint8)
        eve_bits = rng.integers(0, 2, size=count, dtype=np.uint8)
        alice_guess = rng.integers(0, 2, size=count, dtype=np.uint8)
        bob_guess = rng.integers(0, 2, size=count, dtype=np.uint8)
        # the resent product state |x_e>|x_e> is read back faithfully only in Eve's basis
        alpha[intercepted] = np.where(a[intercepted] == eve_bases, eve_bits, alice_guess)
        beta[intercepted] = np.where(b[intercepted] == eve_bases, eve_bits, bob_guess)
        bell[intercepted] = -1
        eve_log = EveLog(indices=intercepted.astype(np.int64), bases=eve_bases, bits=eve_bits)
        logger.debug(f"Intercepted {count} of {n} pairs")

    return MeasurementRecord(a=a, b=b, alpha=alpha, beta=beta, bell=bell, eve_log=eve_log)


def gamma_of(c_r: npt.ArrayLike, a_r: npt.ArrayLike) -> npt.NDArray[np.uint8]:
    """
    Map Bell indices to bits given Alice's bases: gamma_i = 0 iff c_i = 0.

    Raises:
        ParameterError: Some c_i is not in X_{a_i}
    """
    c = np.asarray(c_r, dtype=np.int64)
    a = np.asarray(a_r, dtype=np.int64)
    if c.shape != a.shape:
        raise DimensionMismatchError(f"Bell string of shape {c.shape} does not match bases {a.shape}")
    allowed = np.where(a == Basis.PLUS, np.isin(c, (0, 1)), np.isin(c, (0, 2)))
    if not allowed.all():
        bad = int(np.flatnonzero(~allowed)[0])
        raise ParameterError(
            f"Bell index {int(c[bad])} at position {bad} is not in X for basis {Basis(int(a[bad])).name}"
        )
    return (c != 0).astype(np.uint8)


def bell_overlap(alpha_r: npt.ArrayLike, a_r: npt.ArrayLike, c_r: npt.ArrayLike) -> sp.Expr:
    """Overlap <alpha_R, alpha_R | c_R> = (-1)^(alpha_R . gamma) / sqrt(2)^r."""
    alpha = np.asarray(alpha_r, dtype=np.int64)
    gamma = gamma_of(c_r, a_r)
    if alpha.shape != gamma.shape:
        raise DimensionMismatchError(f"Outcome string of shape {alpha.shape} does not match {gamma.shape}")
    sign = int(alpha @ gamma.astype(np.int64)) & 1
    return sp.Integer(-1) ** sign / _SQRT2 ** alpha.shape[0]
