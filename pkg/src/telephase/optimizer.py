"""
Search over teleportation count, probe amplitude and feedback gains.

For a squeezing budget r, a probe photon budget and losses, the probe
amplitude is fixed by spending the whole photon budget, so the free knobs are
m and (g_x, g_p). Enhancement is the ratio of the coherent-state sensitivity
at the same photon number to the protocol sensitivity, both at phi = 0.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import minimize

from telephase.errors import InfeasibleBudget, InvalidParameter, TelephaseError
from telephase.formulas import coherent_baseline_sigma, effective_squeezing
from telephase.protocol import ProtocolParams, photon_budget_coefficients, run_ensemble, scan_zero_phase

log = logging.getLogger(__name__)

GAIN_MIN = 1e-9
GAIN_MAX = 2.0
SIMPLEX_TOL = 1e-6
SEED_GRID = np.linspace(0.5, 1.5, 5)
POLISH_WINDOW = 2
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Constraint:
    r: float
    n_total_budget: float
    eta1: float = 1.0
    eta2: float = 1.0
    n_th: float = 0.0
    unit_gains: bool = False
    m_max: Optional[int] = None

    def __post_init__(self):
        for name in ("r", "n_total_budget", "eta1", "eta2", "n_th"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameter(f"{name} must be finite")
        if self.r < 0:
            raise InvalidParameter("r must be >= 0")
        if self.n_total_budget <= 0:
            raise InvalidParameter("n_total must be > 0")
        for name in ("eta1", "eta2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameter(f"{name} must be in [0,1]")
        if self.eta1 == 0:
            raise InvalidParameter("eta1 must be > 0 (no signal survives otherwise)")
        if self.n_th < 0:
            raise InvalidParameter("n_th must be >= 0")
        if self.m_max is not None and self.m_max < 0:
            raise InvalidParameter("m_max must be >= 0")

    def params(self, m: int, g_x: float = 1.0, g_p: float = 1.0, alpha: float = 1.0) -> ProtocolParams:
        return ProtocolParams(alpha=alpha, phi=0.0, r=self.r, m=m, g_x=g_x, g_p=g_p,
                              eta1=self.eta1, eta2=self.eta2, n_th=self.n_th)

    def sigma_coh(self) -> float:
        return coherent_baseline_sigma(self.n_total_budget, 0.0, self.eta1)


@dataclass(frozen=True)
class Optimum:
    m: int
    alpha: float
    g_x: float
    g_p: float
    sigma: float
    sigma_coh: float
    enhancement: float
    enhancement_db: float
    feasible: bool = True
    at_bound: bool = False


def default_m_max(constraint: Constraint) -> int:
    """Search cap: min(user cap, 20 * ceil(e^{2 r_lim})).

    The resource photons grow monotonically with m, so once a budget becomes
    infeasible every larger m is too; scans simply stop contributing there.
    """
    r_lim = effective_squeezing(constraint.r, constraint.eta2, constraint.n_th)
    cap = 20 * math.ceil(math.exp(2 * r_lim))
    if constraint.m_max is not None:
        cap = min(cap, constraint.m_max)
    return cap


def solve_alpha(m: int, gains: tuple[float, float], constraint: Constraint) -> float:
    a, b = photon_budget_coefficients(constraint.params(m, *gains))
    assert a > 0, "probe photon coefficient must be positive"
    if constraint.n_total_budget <= b:
        raise InfeasibleBudget(
            f"m={m}: resource photons {b:.6g} exhaust the budget {constraint.n_total_budget:.6g}")
    return math.sqrt((constraint.n_total_budget - b) / a)


def _evaluate_full(m, gains, constraint):
    alpha = solve_alpha(m, gains, constraint)
    moments = run_ensemble(constraint.params(m, *gains, alpha=alpha))
    return alpha, moments.sigma


def evaluate(m: int, gains: tuple[float, float], constraint: Constraint) -> float:
    """Enhancement sigma_coh / sigma at phi = 0 with the budget-solved alpha."""
    _, sigma = _evaluate_full(m, gains, constraint)
    return constraint.sigma_coh() / sigma


def enhancement_profile(constraint: Constraint, g_x: float, g_p: float, m_max: int) -> np.ndarray:
    """Enhancement for every m = 0..m_max at fixed gains (0 where infeasible)."""
    scan = scan_zero_phase(constraint.r, constraint.eta1, constraint.eta2, constraint.n_th, g_x, g_p, m_max)
    budget = constraint.n_total_budget
    with np.errstate(all="ignore"):
        alpha_sq = (budget - scan.photon_b) / scan.photon_a
        feasible = np.isfinite(alpha_sq) & (alpha_sq > 0)
        sigma = np.sqrt(scan.var_x) / (np.sqrt(np.where(feasible, alpha_sq, 1.0)) * np.abs(scan.slope_unit))
        enh = np.where(feasible, constraint.sigma_coh() / sigma, 0.0)
    enh[~np.isfinite(enh)] = 0.0
    return enh


def _in_box(g) -> bool:
    return GAIN_MIN <= g[0] <= GAIN_MAX and GAIN_MIN <= g[1] <= GAIN_MAX


def _nelder_mead(objective, start):
    res = minimize(
        objective, np.asarray(start, dtype=float), method="Nelder-Mead",
        bounds=[(GAIN_MIN, GAIN_MAX)] * 2,
        options={"xatol": SIMPLEX_TOL, "fatol": 1e-14, "maxiter": 4000},
    )
    return res.x, -res.fun


def _better(a, b) -> bool:
    """Candidate ordering: larger enhancement, then smaller m, g_x, g_p."""
    enh_a, enh_b = a[0], b[0]
    if abs(enh_a - enh_b) > TIE_RTOL * max(abs(enh_a), abs(enh_b)):
        return enh_a > enh_b
    return a[1:] < b[1:]


def optimize(constraint: Constraint) -> Optimum:
    m_cap = default_m_max(constraint)
    unit = enhancement_profile(constraint, 1.0, 1.0, m_cap)
    m_unit = int(np.argmax(unit))
    best = (float(unit[m_unit]), m_unit, 1.0, 1.0)

    if not constraint.unit_gains:
        def profile(g):
            if not _in_box(g):
                return 0.0
            return -float(np.max(enhancement_profile(constraint, g[0], g[1], m_cap)))

        starts = [(1.0, 1.0)] + [(gx, gp) for gx in SEED_GRID for gp in SEED_GRID]
        for start in starts:
            g, _ = _nelder_mead(profile, start)
            enh = enhancement_profile(constraint, g[0], g[1], m_cap)
            m = int(np.argmax(enh))
            cand = (float(enh[m]), m, float(g[0]), float(g[1]))
            if _better(cand, best):
                best = cand

        # per-m refinement: the profile is only piecewise smooth across m
        m0, g0 = best[1], best[2:]
        for m in range(max(1, m0 - POLISH_WINDOW), min(m_cap, m0 + POLISH_WINDOW) + 1):
            g, _ = _nelder_mead(
                lambda g, m=m: -float(enhancement_profile(constraint, g[0], g[1], m)[m]) if _in_box(g) else 0.0,
                g0,
            )
            cand = (float(enhancement_profile(constraint, g[0], g[1], m)[m]), m, float(g[0]), float(g[1]))
            if _better(cand, best):
                best = cand

    _, m, g_x, g_p = best
    if m == 0:
        # gains never act without a teleportation
        g_x = g_p = 1.0
    if best[0] <= 0.0:
        return _infeasible(constraint)

    alpha, sigma = _evaluate_full(m, (g_x, g_p), constraint)
    sigma_coh = constraint.sigma_coh()
    at_bound = m > 0 and any(
        abs(g - GAIN_MAX) < 10 * SIMPLEX_TOL or g < GAIN_MIN + 10 * SIMPLEX_TOL for g in (g_x, g_p))
    if at_bound:
        log.warning("gain search hit the box boundary at %s: g=(%g, %g)", constraint, g_x, g_p)
    enhancement = sigma_coh / sigma
    return Optimum(
        m=m, alpha=alpha, g_x=g_x, g_p=g_p, sigma=sigma, sigma_coh=sigma_coh,
        enhancement=enhancement, enhancement_db=20 * math.log10(enhancement),
        feasible=True, at_bound=at_bound,
    )


def _infeasible(constraint: Constraint) -> Optimum:
    nan = math.nan
    return Optimum(m=0, alpha=nan, g_x=nan, g_p=nan, sigma=nan, sigma_coh=constraint.sigma_coh(),
                   enhancement=nan, enhancement_db=nan, feasible=False)


@dataclass(frozen=True)
class SweepRow:
    constraint: Constraint
    optimum: Optimum
    error: str = ""

    def as_dict(self) -> dict:
        return {**asdict(self.constraint), **asdict(self.optimum), "error": self.error}


def _sweep_point(constraint: Constraint) -> SweepRow:
    try:
        return SweepRow(constraint, optimize(constraint))
    except TelephaseError as exc:
        nan = math.nan
        failed = Optimum(m=0, alpha=nan, g_x=nan, g_p=nan, sigma=nan, sigma_coh=nan,
                         enhancement=nan, enhancement_db=nan, feasible=False)
        return SweepRow(constraint, failed, error=str(exc))


def sweep(grid: Iterable[Constraint], workers: int = 1) -> list[SweepRow]:
    """Optimize every grid point; rows come back in grid order."""
    grid = list(grid)
    if not grid:
        raise InvalidParameter("sweep grid is empty")
    if workers <= 1:
        return [_sweep_point(c) for c in grid]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, grid))


def constraint_grid(r_values, budgets, eta1_values=(1.0,), eta2_values=(1.0,), n_th=0.0,
                    unit_gains=False, m_max=None) -> list[Constraint]:
    """Cartesian grid ordered r-major, then budget, eta1, eta2."""
    return [
        Constraint(r=r, n_total_budget=n, eta1=e1, eta2=e2, n_th=n_th, unit_gains=unit_gains, m_max=m_max)
        for r in r_values for n in budgets for e1 in eta1_values for e2 in eta2_values
    ]

