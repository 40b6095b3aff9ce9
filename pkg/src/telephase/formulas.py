"""Closed-form moments, effective squeezing and coherent-state baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass

from telephase.errors import InvalidParameter, SensitivityUndefined

# below this |1 - eta1| the geometric ratios are summed term by term
GEOMETRIC_SUM_THRESHOLD = 1e-6
# |cos| below this is a fringe zero up to rounding of the phase argument
COS_ZERO_TOL = 1e-15


@dataclass(frozen=True)
class IdealMoments:
    mean_x: float
    var_x: float
    sigma: float
    n_m: float
    n_total: float


@dataclass(frozen=True)
class LossyMoments:
    mean_x: float
    var_x: float
    sigma: float
    n_total: float


def _abs_cos(m: int, phi: float) -> float:
    c = abs(math.cos((m + 1) * phi))
    if c < COS_ZERO_TOL:
        raise SensitivityUndefined(f"cos((m+1)phi) = 0 at m={m}, phi={phi}")
    return c


def ideal_moments(alpha: float, phi: float, r: float, m: int) -> IdealMoments:
    """Lossless, unit-gain protocol after m teleportations."""
    if alpha <= 0:
        raise InvalidParameter("alpha must be > 0 for a finite sensitivity")
    e = math.exp(-2 * r)
    var_x = (1 + 2 * m * e) / 4
    sigma = math.sqrt(1 + 2 * m * e) / (2 * (m + 1) * alpha * _abs_cos(m, phi))
    return IdealMoments(
        mean_x=alpha * math.sin((m + 1) * phi),
        var_x=var_x,
        sigma=sigma,
        n_m=alpha ** 2 + m * e,
        n_total=(m + 1) * alpha ** 2 + 0.5 * m * (m + 1) * e,
    )


def resource_noise(r: float, eta2: float, n_th: float = 0.0) -> float:
    """Effective resource noise e^{-2 r_lim} = eta2 e^{-2r} + (1 + 2 n_th)(1 - eta2)."""
    return eta2 * math.exp(-2 * r) + (1 + 2 * n_th) * (1 - eta2)


def _geometric_terms(eta1: float, m: int) -> tuple[float, float, float]:
    """(sum_{k=1..m} eta^k, sum_{k=0..m} eta^k, sum_{k=0..m-1} (m-k) eta^k)."""
    if abs(1.0 - eta1) < GEOMETRIC_SUM_THRESHOLD:
        powers = [eta1 ** k for k in range(m + 1)]
        return (
            math.fsum(powers[1:]),
            math.fsum(powers),
            math.fsum((m - k) * powers[k] for k in range(m)),
        )
    q = 1.0 - eta1
    return (
        eta1 * (1 - eta1 ** m) / q,
        (1 - eta1 ** (m + 1)) / q,
        (m * q - eta1 * (1 - eta1 ** m)) / q ** 2,
    )


def lossy_moments(alpha, phi, r, m, eta1=1.0, eta2=1.0, n_th=0.0) -> LossyMoments:
    """Unit-gain protocol with probe loss eta1 and resource loss eta2."""
    if alpha <= 0:
        raise InvalidParameter("alpha must be > 0 for a finite sensitivity")
    if not (0 < eta1 <= 1 and 0 <= eta2 <= 1):
        raise InvalidParameter("need 0 < eta1 <= 1 and 0 <= eta2 <= 1")
    noise = resource_noise(r, eta2, n_th)
    passed, photon_a, photon_b = _geometric_terms(eta1, m)
    amplitude = alpha * eta1 ** ((m + 1) / 2)
    sigma = math.sqrt(1 + 2 * passed * noise) / (2 * (m + 1) * amplitude * _abs_cos(m, phi))
    return LossyMoments(
        mean_x=amplitude * math.sin((m + 1) * phi),
        var_x=(1 + 2 * passed * noise) / 4,
        sigma=sigma,
        n_total=photon_a * alpha ** 2 + photon_b * noise,
    )


def effective_squeezing(r: float, eta2: float, n_th: float = 0.0) -> float:
    arg = resource_noise(r, eta2, n_th)
    assert arg > 0, "resource noise must be positive for valid parameters"
    return -0.5 * math.log(arg)


def coherent_baseline_sigma(n_total: float, phi: float, eta1: float = 1.0) -> float:
    """Sensitivity of a single coherent probe carrying all n_total photons."""
    if not n_total > 0:
        raise InvalidParameter("n_total must be > 0")
    c = abs(math.cos(phi))
    if c < COS_ZERO_TOL or eta1 == 0.0:
        raise SensitivityUndefined("coherent baseline has zero slope")
    return 1 / (2 * math.sqrt(eta1 * n_total) * c)
