"""
Single-shot simulation of the protocol with sampled homodyne outcomes.

Each trajectory carries a conditional Gaussian state. Conditional covariances
do not depend on the outcomes, so they are computed once per run and only the
means are propagated per trajectory, which lets a block of trajectories move
through the protocol as one array.

Randomness: trajectories are cut into fixed blocks of ``BLOCK`` and block b
draws from ``SeedSequence([seed, b])``, so results depend only on the seed,
never on the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from telephase.errors import InvalidParameter
from telephase.gaussian import (
    GaussianState,
    HomodyneUpdate,
    balanced_bs,
    homodyne_update,
    loss_channel,
    make_coherent,
    make_tmsv,
    phase_rotate,
    tensor,
)
from telephase.protocol import ProtocolParams

BLOCK = 1 << 15


@dataclass
class TrajectoryResult:
    final_x: float
    per_pass_photons: list[float]
    outcomes: list[tuple[float, float]]


@dataclass
class EnsembleEstimate:
    mean_x_hat: float
    var_x_hat: float
    stderr_mean: float
    stderr_var: float
    n_traj: int
    seed: int
    photons_hat: list[float]
    photons_stderr: list[float]


@dataclass(frozen=True)
class _Round:
    """Outcome-independent data for one teleportation round."""

    cov_in: np.ndarray      # probe covariance entering the phase pass
    p1: HomodyneUpdate      # p of the probe-side output, 3-mode register
    x2: HomodyneUpdate      # x of the other output, after p1 is removed


def _lossy_tmsv(params: ProtocolParams) -> GaussianState:
    pair = make_tmsv(params.r)
    pair = loss_channel(pair, 0, params.eta2, params.n_th)
    return loss_channel(pair, 1, params.eta2, params.n_th)


def _plan(params: ProtocolParams):
    """Precompute every conditional covariance and regression vector."""
    tmsv = _lossy_tmsv(params)
    cov = make_coherent(0.0).cov
    rounds = []
    for _ in range(params.m):
        cov_in = cov
        probe = loss_channel(phase_rotate(GaussianState(np.zeros(2), cov), 0, params.phi), 0, params.eta1)
        reg = balanced_bs(tensor(probe, tmsv), 0, 1)
        up_p = homodyne_update(reg, 0, "p")
        after_p = GaussianState(np.zeros(4), up_p.cov)
        up_x = homodyne_update(after_p, 0, "x")
        cov = up_x.cov
        rounds.append(_Round(cov_in, up_p, up_x))
    cov_in = cov
    final = loss_channel(phase_rotate(GaussianState(np.zeros(2), cov), 0, params.phi), 0, params.eta1)
    return rounds, cov_in, final.cov


def _propagate(params: ProtocolParams, plan, normals: np.ndarray):
    """Push a batch of probe means through the protocol.

    ``normals`` has shape (batch, 2m + 1): per round the p1' and x2' draws,
    then the final readout draw.
    """
    rounds, last_cov_in, final_cov = plan
    batch = normals.shape[0]
    c, s = math.cos(params.phi), math.sin(params.phi)
    root_eta1 = math.sqrt(params.eta1)
    mean = np.zeros((batch, 2))
    mean[:, 1] = params.alpha
    photons = np.empty((batch, params.m + 1))
    outcomes = np.empty((batch, params.m, 2))

    def pass_phase(mean):
        x, p = mean[:, 0], mean[:, 1]
        return root_eta1 * np.column_stack([c * x + s * p, c * p - s * x])

    def photon(mean, cov):
        return np.maximum((mean ** 2).sum(axis=1) + cov[0, 0] + cov[1, 1] - 0.5, 0.0)

    h = math.sqrt(0.5)
    for k, rnd in enumerate(rounds):
        photons[:, k] = photon(mean, rnd.cov_in)
        probe = pass_phase(mean)
        # register (probe, tmsv_a, tmsv_b) after the beamsplitter on (probe, tmsv_a); tmsv mean is zero
        reg = np.zeros((batch, 6))
        reg[:, 0:2] = h * probe
        reg[:, 2:4] = h * probe

        up = rnd.p1
        p1 = reg[:, 1] + math.sqrt(up.marginal_var) * normals[:, 2 * k]
        reg = reg[:, up.keep] + np.outer(p1 - reg[:, 1], up.regression)

        up = rnd.x2
        x2 = reg[:, 0] + math.sqrt(up.marginal_var) * normals[:, 2 * k + 1]
        mean = reg[:, up.keep] + np.outer(x2 - reg[:, 0], up.regression)

        mean = mean + np.column_stack([params.g_x * math.sqrt(2) * x2, params.g_p * math.sqrt(2) * p1])
        outcomes[:, k, 0] = p1
        outcomes[:, k, 1] = x2

    photons[:, params.m] = photon(mean, last_cov_in)
    final_mean = pass_phase(mean)
    final_x = final_mean[:, 0] + math.sqrt(final_cov[0, 0]) * normals[:, -1]
    return final_x, photons, outcomes


def sample_trajectory(params: ProtocolParams, rng: np.random.Generator) -> TrajectoryResult:
    normals = rng.standard_normal((1, 2 * params.m + 1))
    final_x, photons, outcomes = _propagate(params, _plan(params), normals)
    return TrajectoryResult(
        final_x=float(final_x[0]),
        per_pass_photons=photons[0].tolist(),
        outcomes=[tuple(o) for o in outcomes[0].tolist()],
    )


def _block(params, plan, seed, index, size):
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    final_x, photons, _ = _propagate(params, plan, rng.standard_normal((size, 2 * params.m + 1)))
    return final_x, photons


def _var_stderr(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    d = x - x.mean()
    s2 = float(d @ d) / (n - 1)
    m4 = float(np.mean(d ** 4))
    return s2, math.sqrt(max(m4 - (n - 3) / (n - 1) * s2 * s2, 0.0) / n)


def estimate(params: ProtocolParams, n_traj: int, seed: int, workers: int = 1) -> EnsembleEstimate:
    if n_traj < 2:
        raise InvalidParameter("n_traj must be >= 2")
    plan = _plan(params)
    sizes = [min(BLOCK, n_traj - start) for start in range(0, n_traj, BLOCK)]
    jobs = [(params, plan, seed, i, size) for i, size in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _block(*job), jobs))
    else:
        parts = [_block(*job) for job in jobs]
    x = np.concatenate([p[0] for p in parts])
    photons = np.concatenate([p[1] for p in parts])

    var, var_err = _var_stderr(x)
    return EnsembleEstimate(
        mean_x_hat=float(x.mean()),
        var_x_hat=var,
        stderr_mean=math.sqrt(var / n_traj),
        stderr_var=var_err,
        n_traj=n_traj,
        seed=seed,
        photons_hat=photons.mean(axis=0).tolist(),
        photons_stderr=(photons.std(axis=0, ddof=1) / math.sqrt(n_traj)).tolist(),
    )
