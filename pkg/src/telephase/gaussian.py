"""
First and second moments of multimode Gaussian states.

Quadratures are ordered (x1, p1, x2, p2, ...) with x = (a + a^dag)/2 and
p = (a - a^dag)/2i, so the vacuum covariance is I/4 and the mean photon
number of a mode is <x^2> + <p^2> - 1/2.

Every Gaussian operation used here is an affine map on the moments,

    mean -> A mean + d,    cov -> A cov A^T + N,

carried by :class:`AffineMap`. Registers never exceed a handful of modes, so
everything is dense numpy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from telephase.errors import DegenerateMeasurement, InvalidParameter

VACUUM_VARIANCE = 0.25
SYMMETRY_TOL = 1e-12
PHYSICAL_TOL = 1e-12


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.size == 0 or mean.size % 2:
            raise InvalidParameter(f"mean must have even, non-zero length, got {mean.size}")
        if cov.shape != (mean.size, mean.size):
            raise InvalidParameter(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidParameter("moments must be finite")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_TOL * max(1.0, float(np.abs(cov).max()))):
            raise InvalidParameter("cov must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def reduced(self, modes) -> "GaussianState":
        idx = _quad_indices(modes)
        return GaussianState(self.mean[idx], self.cov[np.ix_(idx, idx)])

    def symplectic_eigenvalues(self) -> np.ndarray:
        # eigenvalues of i*Omega*cov come in +/- pairs
        ev = np.linalg.eigvals(1j * symplectic_form(self.n_modes) @ self.cov)
        return np.sort(np.abs(ev.real))[::2]

    def is_physical(self, tol: float = PHYSICAL_TOL) -> bool:
        return bool(np.all(self.symplectic_eigenvalues() >= VACUUM_VARIANCE - tol))


def _quad_indices(modes) -> np.ndarray:
    if isinstance(modes, (int, np.integer)):
        modes = (modes,)
    return np.array([q for k in modes for q in (2 * k, 2 * k + 1)], dtype=int)


def _check_mode(state: GaussianState, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise IndexError(f"mode {mode} out of range for a {state.n_modes}-mode state")


def tensor(*states: GaussianState) -> GaussianState:
    mean = np.concatenate([s.mean for s in states])
    cov = np.zeros((mean.size, mean.size))
    i = 0
    for s in states:
        k = s.mean.size
        cov[i:i + k, i:i + k] = s.cov
        i += k
    return GaussianState(mean, cov)


@dataclass(frozen=True, eq=False)
class AffineMap:
    """Gaussian channel acting on moments: (A, d, N)."""

    A: np.ndarray
    d: np.ndarray
    N: np.ndarray

    @classmethod
    def linear(cls, A) -> "AffineMap":
        A = np.asarray(A, dtype=float)
        return cls(A, np.zeros(A.shape[0]), np.zeros((A.shape[0], A.shape[0])))

    def compose(self, first: "AffineMap") -> "AffineMap":
        """Return ``self`` applied after ``first``."""
        return AffineMap(
            self.A @ first.A,
            self.A @ first.d + self.d,
            self.A @ first.N @ self.A.T + self.N,
        )

    def apply(self, state: GaussianState) -> GaussianState:
        cov = self.A @ state.cov @ self.A.T + self.N
        return GaussianState(self.A @ state.mean + self.d, 0.5 * (cov + cov.T))


def _embed(n_modes: int, modes, block: np.ndarray) -> np.ndarray:
    A = np.eye(2 * n_modes)
    idx = _quad_indices(modes)
    A[np.ix_(idx, idx)] = block
    return A


def rotation_matrix(phi: float) -> np.ndarray:
    # chosen so that <p> = alpha picks up <x> = alpha sin(phi)
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, s], [-s, c]])


def rotation_derivative(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[-s, c], [-c, -s]])


def rotation_map(n_modes: int, mode: int, phi: float) -> AffineMap:
    return AffineMap.linear(_embed(n_modes, mode, rotation_matrix(phi)))


def beamsplitter_map(n_modes: int, i: int, j: int) -> AffineMap:
    h = np.sqrt(0.5)
    block = np.array([
        [h, 0.0, h, 0.0],
        [0.0, h, 0.0, h],
        [h, 0.0, -h, 0.0],
        [0.0, h, 0.0, -h],
    ])
    return AffineMap.linear(_embed(n_modes, [i, j], block))


def loss_map(n_modes: int, mode: int, eta: float, n_th: float = 0.0) -> AffineMap:
    if not 0.0 <= eta <= 1.0:
        raise InvalidParameter("eta must be in [0,1]")
    if not n_th >= 0.0:
        raise InvalidParameter("n_th must be >= 0")
    A = _embed(n_modes, mode, np.sqrt(eta) * np.eye(2))
    N = np.zeros((2 * n_modes, 2 * n_modes))
    idx = _quad_indices(mode)
    N[idx, idx] = (1.0 - eta) * (1.0 + 2.0 * n_th) * VACUUM_VARIANCE
    return AffineMap(A, np.zeros(2 * n_modes), N)


def vacuum(n_modes: int = 1) -> GaussianState:
    return GaussianState(np.zeros(2 * n_modes), VACUUM_VARIANCE * np.eye(2 * n_modes))


def make_coherent(alpha: float) -> GaussianState:
    """Coherent probe with <x> = 0 and <p> = alpha."""
    if not np.isfinite(alpha):
        raise InvalidParameter("alpha must be finite")
    return GaussianState([0.0, alpha], VACUUM_VARIANCE * np.eye(2))


def make_squeezed(r: float) -> GaussianState:
    """Single-mode squeezed vacuum with Var(x) = e^{-2r}/4, Var(p) = e^{2r}/4."""
    if not np.isfinite(r):
        raise InvalidParameter("r must be finite")
    return GaussianState(np.zeros(2), VACUUM_VARIANCE * np.diag([np.exp(-2 * r), np.exp(2 * r)]))


def make_tmsv(r: float) -> GaussianState:
    """Two-mode squeezed vacuum, x-correlated and p-anticorrelated.

    Var(x2 - x3) = Var(p2 + p3) = e^{-2r}/2.
    """
    if not np.isfinite(r) or r < 0:
        raise InvalidParameter("r must be finite and >= 0")
    c = VACUUM_VARIANCE * np.cosh(2 * r)
    s = VACUUM_VARIANCE * np.sinh(2 * r)
    cov = np.array([
        [c, 0.0, s, 0.0],
        [0.0, c, 0.0, -s],
        [s, 0.0, c, 0.0],
        [0.0, -s, 0.0, c],
    ])
    return GaussianState(np.zeros(4), cov)


def phase_rotate(state: GaussianState, mode: int, phi: float) -> GaussianState:
    _check_mode(state, mode)
    return rotation_map(state.n_modes, mode, phi).apply(state)


def balanced_bs(state: GaussianState, i: int, j: int) -> GaussianState:
    """x_i' = (x_i + x_j)/sqrt2, x_j' = (x_i - x_j)/sqrt2, same for p."""
    if i == j:
        raise InvalidParameter("beamsplitter needs two distinct modes")
    _check_mode(state, i)
    _check_mode(state, j)
    return beamsplitter_map(state.n_modes, i, j).apply(state)


def loss_channel(state: GaussianState, mode: int, eta: float, n_th: float = 0.0) -> GaussianState:
    _check_mode(state, mode)
    return loss_map(state.n_modes, mode, eta, n_th).apply(state)


def mean_photons(state: GaussianState, mode: int = 0) -> float:
    _check_mode(state, mode)
    i = 2 * mode
    n = state.mean[i] ** 2 + state.mean[i + 1] ** 2 + state.cov[i, i] + state.cov[i + 1, i + 1] - 0.5
    return max(float(n), 0.0)


@dataclass(frozen=True, eq=False)
class HomodyneUpdate:
    """Outcome-independent part of a homodyne conditioning step.

    For outcome v the remaining mean is ``keep_mean + regression * (v - marginal_mean)``.
    """

    keep: np.ndarray
    regression: np.ndarray
    cov: np.ndarray
    marginal_mean: float
    marginal_var: float


def homodyne_update(state: GaussianState, mode: int, quadrature: str) -> HomodyneUpdate:
    _check_mode(state, mode)
    if quadrature not in ("x", "p"):
        raise InvalidParameter("quadrature must be 'x' or 'p'")
    q = 2 * mode + (quadrature == "p")
    keep = np.array([k for k in range(state.mean.size) if k // 2 != mode])
    var = float(state.cov[q, q])
    if not var > 0.0:
        raise DegenerateMeasurement(f"marginal variance {var} of {quadrature}{mode} is not positive")
    cross = state.cov[keep, q]
    regression = cross / var
    cov = state.cov[np.ix_(keep, keep)] - np.outer(cross, cross) / var
    return HomodyneUpdate(keep, regression, 0.5 * (cov + cov.T), float(state.mean[q]), var)


def homodyne_condition(state: GaussianState, mode: int, quadrature: str, outcome: float):
    """Condition on a homodyne outcome and trace out the measured mode.

    Returns ``(remaining_state, marginal_mean, marginal_var)``.
    """
    up = homodyne_update(state, mode, quadrature)
    mean = state.mean[up.keep] + up.regression * (outcome - up.marginal_mean)
    return GaussianState(mean, up.cov), up.marginal_mean, up.marginal_var
