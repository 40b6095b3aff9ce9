"""
The repeated-teleportation phase probe, propagated exactly in the moments.

One run: a coherent probe passes the phase shift m+1 times. After every pass
the probe suffers loss eta1; after every pass but the last it is teleported
back through a fresh two-mode squeezed vacuum (each mode with loss eta2 and
thermal excess n_th). The final x quadrature is read out.

The teleportation is averaged over homodyne outcomes, which turns
measure-and-feed-forward into the affine reduction

    x_out = x3 + g_x (x1 - x2),    p_out = p3 + g_p (p1 + p2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

from telephase.errors import InvalidParameter, SensitivityUndefined
from telephase.gaussian import (
    VACUUM_VARIANCE,
    AffineMap,
    GaussianState,
    beamsplitter_map,
    loss_channel,
    loss_map,
    make_coherent,
    make_squeezed,
    mean_photons,
    rotation_derivative,
    rotation_map,
    tensor,
)


@dataclass(frozen=True)
class ProtocolParams:
    alpha: float = 1.0
    phi: float = 0.0
    r: float = 1.0
    m: int = 1
    g_x: float = 1.0
    g_p: float = 1.0
    eta1: float = 1.0
    eta2: float = 1.0
    n_th: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "phi", "r", "g_x", "g_p", "eta1", "eta2", "n_th"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidParameter(f"{name} must be a finite number")
        if isinstance(self.m, bool) or not isinstance(self.m, (int, np.integer)) or self.m < 0:
            raise InvalidParameter("m must be an integer >= 0")
        if self.alpha < 0:
            raise InvalidParameter("alpha must be >= 0")
        if self.r < 0:
            raise InvalidParameter("r must be >= 0")
        if self.g_x <= 0:
            raise InvalidParameter("g_x must be > 0")
        if self.g_p <= 0:
            raise InvalidParameter("g_p must be > 0")
        for name in ("eta1", "eta2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameter(f"{name} must be in [0,1]")
        if self.n_th < 0:
            raise InvalidParameter("n_th must be >= 0")

    @property
    def unit_gains(self) -> bool:
        return self.g_x == 1.0 and self.g_p == 1.0


@dataclass
class ProtocolMoments:
    mean_x: float
    mean_p: float
    var_x: float
    var_p: float
    dmeanx_dphi: float
    per_pass_photons: list[float] = field(default_factory=list)
    n_total: float = 0.0
    sigma: float = math.inf


def feedback_reduction(g_x: float, g_p: float) -> np.ndarray:
    """2x6 map (x1,p1,x2,p2,x3,p3) -> (x_out, p_out) after averaging over outcomes.

    Mode 1 is the probe, modes 2 and 3 the resource pair. Equivalent to a
    balanced beamsplitter on (1, 2), homodyne of p1' and x2', and the
    displacement x3 += g_x sqrt2 x2', p3 += g_p sqrt2 p1'.
    """
    return np.array([
        [g_x, 0.0, -g_x, 0.0, 1.0, 0.0],
        [0.0, g_p, 0.0, g_p, 0.0, 1.0],
    ])


@lru_cache(maxsize=256)
def _resource(r: float, eta2: float, n_th: float) -> GaussianState:
    # Equal loss with equal thermal noise on both arms commutes with the
    # balanced beamsplitter, so it is applied to the two squeezers instead
    # of the entangled pair. Keeps the e^{2r} terms out of any subtraction.
    a = loss_channel(make_squeezed(-r), 0, eta2, n_th)
    b = loss_channel(make_squeezed(r), 0, eta2, n_th)
    return tensor(a, b)


@lru_cache(maxsize=256)
def _teleport_map(g_x: float, g_p: float) -> AffineMap:
    # squeezers (a, b) -> entangled pair via the beamsplitter, then the reduction
    return AffineMap.linear(feedback_reduction(g_x, g_p)).compose(beamsplitter_map(3, 1, 2))


def teleport_step(probe: GaussianState, params: ProtocolParams, dmean=None):
    """One outcome-averaged teleportation of a single-mode probe.

    Returns ``(state, dmean)``; ``dmean`` is the phase derivative of the mean,
    pushed through the same linear map (zeros if not given).
    """
    if probe.n_modes != 1:
        raise InvalidParameter("teleport_step needs a single-mode probe")
    tm = _teleport_map(float(params.g_x), float(params.g_p))
    out = tm.apply(tensor(probe, _resource(float(params.r), float(params.eta2), float(params.n_th))))
    dmean = np.zeros(2) if dmean is None else np.asarray(dmean, dtype=float)
    return out, tm.A[:, :2] @ dmean


def run_ensemble(params: ProtocolParams) -> ProtocolMoments:
    state = make_coherent(params.alpha)
    dmean = np.zeros(2)
    ledger = []
    # one phase pass = U(phi) followed by the eta1 loss
    phase_pass = loss_map(1, 0, params.eta1).compose(rotation_map(1, 0, params.phi))
    slope_pass = loss_map(1, 0, params.eta1).A @ rotation_derivative(params.phi)
    for k in range(params.m + 1):
        ledger.append(mean_photons(state))
        dmean = phase_pass.A @ dmean + slope_pass @ state.mean
        state = phase_pass.apply(state)
        if k < params.m:
            state, dmean = teleport_step(state, params, dmean)

    var_x = float(state.cov[0, 0])
    slope = float(dmean[0])
    if slope == 0.0:
        raise SensitivityUndefined(f"d<x>/dphi vanishes at {params}")
    return ProtocolMoments(
        mean_x=float(state.mean[0]),
        mean_p=float(state.mean[1]),
        var_x=var_x,
        var_p=float(state.cov[1, 1]),
        dmeanx_dphi=slope,
        per_pass_photons=ledger,
        n_total=math.fsum(ledger),
        sigma=math.sqrt(var_x) / abs(slope),
    )


def photon_budget_coefficients(params: ProtocolParams) -> tuple[float, float]:
    """(A, B) with n_total(alpha) = A alpha^2 + B."""
    b = _photons_only(params, 0.0)
    return _photons_only(params, 1.0) - b, b


def _photons_only(params: ProtocolParams, alpha: float) -> float:
    # run_ensemble without the slope requirement (slope is zero at alpha = 0)
    state = make_coherent(alpha)
    ledger = []
    phase_pass = loss_map(1, 0, params.eta1).compose(rotation_map(1, 0, params.phi))
    for k in range(params.m + 1):
        ledger.append(mean_photons(state))
        state = phase_pass.apply(state)
        if k < params.m:
            state, _ = teleport_step(state, params)
    return math.fsum(ledger)


@dataclass(frozen=True)
class ZeroPhaseScan:
    """Per-m outputs at phi = 0 for unit probe amplitude, m = 0..m_max.

    For amplitude alpha: slope = alpha * slope_unit, photons = A alpha^2 + B,
    var_x unchanged.
    """

    var_x: np.ndarray
    slope_unit: np.ndarray
    photon_a: np.ndarray
    photon_b: np.ndarray


def scan_zero_phase(r, eta1, eta2, n_th, g_x, g_p, m_max: int) -> ZeroPhaseScan:
    """All prefixes m = 0..m_max of the protocol in a single sweep.

    At phi = 0 the rotation is the identity, the covariance stays diagonal and
    <x> stays zero, so every moment obeys a scalar first-order recursion.
    """
    k = np.arange(m_max + 1)
    lossy = (1.0 - eta1) * VACUUM_VARIANCE
    thermal = (1.0 - eta2) * (1.0 + 2.0 * n_th) * VACUUM_VARIANCE
    s_minus = eta2 * math.exp(-2 * r) * VACUUM_VARIANCE + thermal
    s_plus = eta2 * math.exp(2 * r) * VACUUM_VARIANCE + thermal
    noise_x = 0.5 * (1 - g_x) ** 2 * s_plus + 0.5 * (1 + g_x) ** 2 * s_minus
    noise_p = 0.5 * (1 - g_p) ** 2 * s_plus + 0.5 * (1 + g_p) ** 2 * s_minus

    with np.errstate(over="ignore", invalid="ignore"):
        mean_p = (math.sqrt(eta1) * g_p) ** k

        def before_pass(g, noise):
            drive = np.full(m_max + 1, g * g * lossy + noise)
            drive[0] = VACUUM_VARIANCE
            return lfilter([1.0], [1.0, -g * g * eta1], drive)

        vx = before_pass(g_x, noise_x)
        vp = before_pass(g_p, noise_p)
        a = g_x * math.sqrt(eta1)
        drive = np.zeros(m_max + 1)
        drive[1:] = a * mean_p[:-1]
        slope_before = lfilter([1.0], [1.0, -a], drive)

        return ZeroPhaseScan(
            var_x=eta1 * vx + lossy,
            slope_unit=math.sqrt(eta1) * (slope_before + mean_p),
            photon_a=np.cumsum(mean_p ** 2),
            photon_b=np.cumsum(np.maximum(vx + vp - 0.5, 0.0)),
        )
