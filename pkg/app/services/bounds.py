"""Closed-form security parameters: entropy functions, the entropy-deficit
bound theta(r), parameter derivation, feasibility and net-gain conditions."""
import logging
import math
from fractions import Fraction
from typing import Any, Iterable, Tuple

import numpy as np
from scipy import optimize, special, stats

from app.exceptions import ParameterError
from app.models.schemas import BoundReport, ProtocolParams

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
THETA_TAU_MAX = Fraction(8, 3)


def exact(x: Any) -> Fraction:
    """Exact rational value of a user-supplied decimal, e.g. 0.2 -> 1/5."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(repr(float(x)))


def binary_entropy(p: float) -> float:
    """Shannon's binary entropy h(p) in bits, with h(0) = h(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"binary_entropy needs p in [0, 1], got {p}")
    return float((special.entr(p) + special.entr(1.0 - p)) / LN2)


def _entropy_gap(u: float) -> float:
    # 1 - h((1 - u) / 2) without cancellation for small u
    return float((special.xlog1py(1.0 + u, u) + special.xlog1py(1.0 - u, -u)) / (2.0 * LN2))


def theta(r: int, tau: float) -> float:
    """
    Entropy-deficit parameter theta(r) = 2^(-(1 - h(1/2 - 3 tau / 16)) (tau / 2) r).

    Args:
        r (int): Reconciled-set size, r >= 0
        tau (float): Security constant, 0 <= tau <= 8/3

    Returns:
        float: theta in (0, 1]
    """
    if r < 0:
        raise ParameterError(f"theta needs r >= 0, got {r}")
    if not 0 <= exact(tau) <= THETA_TAU_MAX:
        raise ParameterError(f"theta needs 0 <= tau <= 8/3, got {tau}")
    exponent = _entropy_gap(3.0 * tau / 8.0) * (tau / 2.0) * r
    return float(np.exp2(-exponent))


def entropy_lower_bound(m: int, theta_value: float) -> Tuple[float, float]:
    """
    Lower bound m - 2 (m + 1/ln 2)(theta + 2 sqrt(theta)) on the key entropy
    given the eavesdropper's view.

    Returns:
        Tuple[float, float]: Raw bound (may be negative) and the bound clamped to [0, m]
    """
    if not 0.0 <= theta_value <= 1.0:
        raise ParameterError(f"theta must lie in [0, 1], got {theta_value}")
    deficit = 2.0 * (m + 1.0 / LN2) * (theta_value + 2.0 * math.sqrt(theta_value))
    raw = m - deficit
    return raw, max(0.0, min(float(m), raw))


def feasible_m_max(epsilon: float, tau: float, r: int) -> int:
    """Largest m for which an m x r matrix with the required weight exists: r (1 - h(eps/(1-eps) + tau/2))."""
    ratio = epsilon / (1.0 - epsilon) + tau / 2.0
    if not 0.0 <= ratio <= 1.0:
        raise ParameterError(f"eps/(1-eps) + tau/2 must lie in [0, 1], got {ratio}")
    return math.floor(r * (1.0 - binary_entropy(ratio)))


def derive_params(m: int, epsilon: float, tau: float, tau_s: float, r: int) -> ProtocolParams:
    """
    Derive the full protocol setup from (m, epsilon, tau, tau_S, r).

    Setup arithmetic is done on exact rationals so boundary values such as
    d_K = (2 eps / (1 - eps) + tau) r land on the integer they denote.

    Args:
        m (int): Private key length
        epsilon (float): Error-rate threshold, < 1/4
        tau (float): Security constant, > 0
        tau_s (float): Sifting margin constant, in (0, (1 - eps)/2)
        r (int): Reconciled-set size

    Returns:
        ProtocolParams: Setup parameters with feasibility flag

    Raises:
        ParameterError: Naming the violated constraint
    """
    eps, t, t_s = exact(epsilon), exact(tau), exact(tau_s)
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if r < 1:
        raise ParameterError(f"r must be >= 1, got {r}")
    if not 0 <= eps < Fraction(1, 4):
        raise ParameterError(f"epsilon must satisfy 0 <= epsilon < 1/4, got {epsilon}")
    if t <= 0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    if 2 * eps / (1 - eps) + t >= 1:
        raise ParameterError(
            f"2*epsilon/(1-epsilon) + tau must be < 1, got {float(2 * eps / (1 - eps) + t)}"
        )
    sift_margin = (1 - eps) / 2 - t_s
    if t_s <= 0 or sift_margin <= 0:
        raise ParameterError(f"tau_s must lie in (0, (1-epsilon)/2), got {tau_s}")

    s = math.floor(r / (1 - eps))
    d_k = math.ceil((2 * eps / (1 - eps) + t) * r)
    n = math.ceil(r / sift_margin)
    q_min = math.ceil(s * binary_entropy(float(eps)))
    m_max = feasible_m_max(float(eps), float(t), r)

    params = ProtocolParams(
        m=m, epsilon=epsilon, tau=tau, tau_s=tau_s, r=r, s=s, n=n, d_k=d_k,
        q_min=q_min, feasible_m_max=m_max, feasible=m <= m_max,
    )
    if not params.feasible:
        logger.warning(f"m={m} exceeds the feasible maximum {m_max} for r={r}")
    return params


def net_gain_margin(epsilon: float) -> float:
    """Asymptotic net-gain margin 1 - h(eps/(1-eps)) - h(eps)/(1-eps); positive means key gain."""
    if not 0.0 <= epsilon <= 0.5:
        raise ParameterError(f"net_gain_margin needs 0 <= epsilon <= 1/2, got {epsilon}")
    return 1.0 - binary_entropy(epsilon / (1.0 - epsilon)) - binary_entropy(epsilon) / (1.0 - epsilon)


def epsilon_star(tolerance: float = 1e-6) -> float:
    """Root of net_gain_margin on (0, 1/4), located by bisection to within tolerance."""
    if tolerance <= 0:
        raise ParameterError(f"tolerance must be > 0, got {tolerance}")
    lo, hi = 0.0, 0.25
    if not net_gain_margin(lo) > 0 > net_gain_margin(hi):
        raise ParameterError("net_gain_margin does not change sign on [0, 1/4]")
    return float(optimize.bisect(net_gain_margin, lo, hi, xtol=tolerance))


def bound_report(m: int, epsilon: float, tau: float, r: int) -> BoundReport:
    """Security bounds for one (m, epsilon, tau, r) point."""
    theta_value = theta(r, tau)
    raw, clamped = entropy_lower_bound(m, theta_value)
    return BoundReport(
        theta=theta_value,
        entropy_lower_bound_raw=raw,
        entropy_lower_bound=clamped,
        feasible_m_max=feasible_m_max(epsilon, tau, r),
        net_gain_margin=net_gain_margin(epsilon),
    )


def hoeffding_deviation(sample_size: int, confidence: float) -> float:
    """Half-width t with P(|estimate - rate| >= t) <= confidence for a sample of the given size."""
    if sample_size < 1:
        raise ParameterError(f"sample_size must be >= 1, got {sample_size}")
    if not 0.0 < confidence < 1.0:
        raise ParameterError(f"confidence must lie in (0, 1), got {confidence}")
    return math.sqrt(math.log(2.0 / confidence) / (2.0 * sample_size))


def _key_values(keys: Iterable[Any], m: int) -> np.ndarray:
    arr = np.asarray([np.asarray(k, dtype=np.int64) for k in keys])
    if arr.ndim != 2 or arr.shape[1] != m:
        raise ParameterError(f"Keys must all have length m={m}")
    weights = np.left_shift(1, np.arange(m - 1, -1, -1, dtype=np.int64))
    return arr @ weights


def key_uniformity_pvalue(keys: Iterable[Any], m: int) -> float:
    """Chi-square goodness-of-fit p-value of observed m-bit keys against the uniform law."""
    if not 1 <= m <= 16:
        raise ParameterError(f"Uniformity test supports 1 <= m <= 16, got {m}")
    counts = np.bincount(_key_values(keys, m), minlength=2**m)
    return float(stats.chisquare(counts).pvalue)


def empirical_key_entropy(keys: Iterable[Any]) -> float:
    """Plug-in Shannon entropy, in bits, of the observed key distribution."""
    keys = list(keys)
    if not keys:
        raise ParameterError("empirical_key_entropy needs at least one key")
    m = len(keys[0])
    _, counts = np.unique(_key_values(keys, m), return_counts=True)
    return float(stats.entropy(counts, base=2))


def _plan_ok(m: int, epsilon: float, tau: float, r: int, max_deficit: float) -> bool:
    if feasible_m_max(epsilon, tau, r) < m:
        return False
    _, clamped = entropy_lower_bound(m, theta(r, tau))
    return m - clamped <= max_deficit


def plan_r(m: int, epsilon: float, tau: float, max_deficit: float, r_limit: int = 10**9) -> int:
    """
    Smallest r for which m is feasible and the entropy deficit is at most max_deficit.

    Both conditions are monotone in r, so an exponential search brackets the
    answer and a binary search narrows it.
    """
    if max_deficit <= 0:
        raise ParameterError(f"max_deficit must be > 0, got {max_deficit}")
    if tau <= 0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    hi = 1
    while not _plan_ok(m, epsilon, tau, hi, max_deficit):
        hi *= 2
        if hi > r_limit:
            raise ParameterError(f"No r <= {r_limit} meets the requested deficit {max_deficit}")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _plan_ok(m, epsilon, tau, mid, max_deficit):
            hi = mid
        else:
            lo = mid
    logger.info(f"Planned r={hi} for m={m}, epsilon={epsilon}, tau={tau}")
    return hi
