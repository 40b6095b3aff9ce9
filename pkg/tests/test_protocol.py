import math
from dataclasses import replace

import numpy as np
import pytest

from telephase.errors import InvalidParameter, SensitivityUndefined
from telephase.gaussian import make_coherent, mean_photons, symplectic_form
from telephase.protocol import (
    ProtocolParams,
    feedback_reduction,
    photon_budget_coefficients,
    run_ensemble,
    scan_zero_phase,
    teleport_step,
    _teleport_map,
)


def test_teleport_unit_gain_adds_resource_noise():
    r = 0.8
    out, d = teleport_step(make_coherent(1.5), ProtocolParams(r=r))
    assert np.allclose(out.mean, [0.0, 1.5], atol=1e-14)
    assert out.cov[0, 0] == pytest.approx(0.25 + math.exp(-2 * r) / 2, abs=1e-14)
    assert out.cov[1, 1] == pytest.approx(0.25 + math.exp(-2 * r) / 2, abs=1e-14)
    assert np.array_equal(d, [0.0, 0.0])


def test_teleport_perfect_limit():
    probe = make_coherent(0.9)
    out, _ = teleport_step(probe, ProtocolParams(r=15.0))
    assert np.allclose(out.mean, probe.mean, rtol=0, atol=1e-10)
    assert np.allclose(out.cov, probe.cov, rtol=0, atol=1e-10)


def test_teleport_photons():
    out, _ = teleport_step(make_coherent(1.0), ProtocolParams(r=1.0))
    assert mean_photons(out) == pytest.approx(1 + math.exp(-2), abs=1e-14)
    assert mean_photons(out) == pytest.approx(1.135335, abs=1e-6)


def test_teleport_matches_explicit_tmsv_route():
    # independent route: entangled pair built directly, lossy, then the reduction
    from telephase.gaussian import AffineMap, loss_channel, make_tmsv, tensor

    p = ProtocolParams(r=0.6, g_x=0.8, g_p=1.3, eta2=0.7, n_th=0.05)
    probe = loss_channel(make_coherent(1.1), 0, 0.9)
    pair = loss_channel(loss_channel(make_tmsv(p.r), 0, p.eta2, p.n_th), 1, p.eta2, p.n_th)
    ref = AffineMap.linear(feedback_reduction(p.g_x, p.g_p)).apply(tensor(probe, pair))
    out, _ = teleport_step(probe, p)
    assert np.allclose(out.mean, ref.mean, atol=1e-13)
    assert np.allclose(out.cov, ref.cov, atol=1e-13)


@pytest.mark.parametrize("gx, gp", [(1.0, 1.0), (0.3, 1.7), (2.0, 0.5)])
def test_reduction_is_canonical(gx, gp):
    K = feedback_reduction(gx, gp)
    assert np.allclose(K @ symplectic_form(3) @ K.T, symplectic_form(1), atol=1e-15)
    T = _teleport_map(gx, gp).A
    assert np.allclose(T @ symplectic_form(3) @ T.T, symplectic_form(1), atol=1e-15)


def test_teleport_rejects_multimode():
    from telephase.gaussian import vacuum

    with pytest.raises(InvalidParameter):
        teleport_step(vacuum(2), ProtocolParams())


def test_run_ensemble_near_perfect():
    out = run_ensemble(ProtocolParams(alpha=1, r=10, m=3, phi=0.2))
    assert out.mean_x == pytest.approx(math.sin(0.8), abs=1e-6)
    assert out.mean_x == pytest.approx(0.717356, abs=1e-6)
    assert out.var_x == pytest.approx(0.25, abs=1e-6)


@pytest.mark.parametrize("r", [0.0, 1.0, 3.0])
def test_run_ensemble_no_teleportation(r):
    out = run_ensemble(ProtocolParams(alpha=1.4, r=r, m=0, phi=0.3))
    assert out.mean_x == pytest.approx(1.4 * math.sin(0.3), abs=1e-15)
    assert out.var_x == pytest.approx(0.25, abs=1e-15)
    assert out.n_total == pytest.approx(1.4 ** 2, abs=1e-14)
    assert out.per_pass_photons == [pytest.approx(1.96)]


def test_run_ensemble_lossy_point():
    p = ProtocolParams(alpha=1, r=1, m=2, phi=0.1, eta1=0.9, eta2=0.95)
    out = run_ensemble(p)
    assert out.mean_x == pytest.approx(0.9 ** 1.5 * math.sin(0.3), rel=1e-12)
    bracket = 0.95 * math.exp(-2) + 0.05
    passed = 0.9 + 0.81
    var = (1 + 2 * passed * bracket) / 4
    assert out.var_x == pytest.approx(var, rel=1e-10)
    amp = 0.9 ** 1.5
    assert out.sigma == pytest.approx(math.sqrt(var) / (3 * amp * math.cos(0.3)), rel=1e-10)
    n9 = (1 - 0.9 ** 3) / 0.1 + (2 * 0.1 - 0.9 * (1 - 0.81)) / 0.01 * bracket
    assert out.n_total == pytest.approx(n9, rel=1e-10)


def test_ledger_sums_exactly():
    out = run_ensemble(ProtocolParams(alpha=0.7, r=0.4, m=6, phi=0.2, g_x=0.9, g_p=1.1, eta1=0.8))
    assert len(out.per_pass_photons) == 7
    assert out.n_total == math.fsum(out.per_pass_photons)
    assert all(n >= 0 for n in out.per_pass_photons)


@pytest.mark.parametrize("m, r", [(0, 1.0), (1, 0.0), (4, 0.7), (9, 2.0)])
def test_photon_coefficients_lossless(m, r):
    a, b = photon_budget_coefficients(ProtocolParams(alpha=5.0, r=r, m=m))
    assert a == pytest.approx(m + 1, rel=1e-12)
    assert b == pytest.approx(m * (m + 1) * math.exp(-2 * r) / 2, rel=1e-12, abs=1e-15)


def test_photon_coefficients_lossy():
    m, e1, e2, r = 5, 0.7, 0.85, 0.9
    a, b = photon_budget_coefficients(ProtocolParams(r=r, m=m, eta1=e1, eta2=e2))
    bracket = e2 * math.exp(-2 * r) + 1 - e2
    assert a == pytest.approx((1 - e1 ** (m + 1)) / (1 - e1), rel=1e-12)
    assert b == pytest.approx((m * (1 - e1) - e1 * (1 - e1 ** m)) / (1 - e1) ** 2 * bracket, rel=1e-12)


@pytest.mark.parametrize("g", [1.0, 0.8, 1.2])
@pytest.mark.parametrize("m", [1, 3, 6])
def test_zeros_spaced_by_resolution(m, g):
    # equal gains rescale the fringe but keep the zeros at k pi/(m+1)
    for k in range(1, m + 1):
        phi = k * math.pi / (m + 1)
        out = run_ensemble(ProtocolParams(alpha=1, r=0.5, m=m, phi=phi, g_x=g, g_p=g))
        scale = abs(run_ensemble(ProtocolParams(alpha=1, r=0.5, m=m, phi=phi / (2 * k), g_x=g, g_p=g)).mean_x)
        assert abs(out.mean_x) < 1e-12 * max(scale, 1.0)


def test_slope_at_zero_phase():
    out = run_ensemble(ProtocolParams(alpha=1.3, r=0.2, m=7, phi=0.0))
    assert out.dmeanx_dphi == pytest.approx(8 * 1.3, rel=1e-14)


@pytest.mark.parametrize("g", [1.0, 0.7, 1.4])
def test_photons_independent_of_phase(g):
    base = ProtocolParams(alpha=1.1, r=0.6, m=5, g_x=g, g_p=g, eta1=0.8, eta2=0.9, n_th=0.02)
    ledgers = [run_ensemble(replace(base, phi=phi)).per_pass_photons for phi in (0.0, 0.4, -1.2)]
    for ledger in ledgers[1:]:
        assert np.allclose(ledger, ledgers[0], rtol=1e-12)


def test_unequal_gains_make_photons_phase_dependent():
    # anisotropic feedback does not commute with the phase rotation
    base = ProtocolParams(alpha=1.1, r=0.6, m=5, g_x=0.7, g_p=1.4)
    assert run_ensemble(replace(base, phi=0.4)).n_total != pytest.approx(run_ensemble(base).n_total, rel=1e-3)


@pytest.mark.parametrize("seed", range(6))
def test_slope_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = ProtocolParams(alpha=rng.uniform(0.5, 2), phi=rng.uniform(-1, 1), r=rng.uniform(0, 2),
                       m=int(rng.integers(0, 12)), g_x=rng.uniform(0.5, 1.5), g_p=rng.uniform(0.5, 1.5),
                       eta1=rng.uniform(0.5, 1), eta2=rng.uniform(0.5, 1))
    h = 1e-5
    fd = (run_ensemble(replace(p, phi=p.phi + h)).mean_x - run_ensemble(replace(p, phi=p.phi - h)).mean_x) / (2 * h)
    assert run_ensemble(p).dmeanx_dphi == pytest.approx(fd, rel=1e-6)


def test_zero_slope_raises():
    with pytest.raises(SensitivityUndefined):
        run_ensemble(ProtocolParams(alpha=0.0, m=2))


@pytest.mark.parametrize("gx, gp, e1, e2, nth", [
    (1.0, 1.0, 1.0, 1.0, 0.0),
    (0.7, 1.3, 0.9, 0.95, 0.01),
    (1.8, 0.4, 0.6, 0.5, 0.1),
])
def test_zero_phase_scan_matches_simulator(gx, gp, e1, e2, nth):
    scan = scan_zero_phase(0.9, e1, e2, nth, gx, gp, 8)
    for m in range(9):
        p = ProtocolParams(alpha=1.0, r=0.9, m=m, g_x=gx, g_p=gp, eta1=e1, eta2=e2, n_th=nth)
        out = run_ensemble(p)
        a, b = photon_budget_coefficients(p)
        assert scan.var_x[m] == pytest.approx(out.var_x, rel=1e-12)
        assert scan.slope_unit[m] == pytest.approx(out.dmeanx_dphi, rel=1e-12)
        assert scan.photon_a[m] == pytest.approx(a, rel=1e-12)
        assert scan.photon_b[m] == pytest.approx(b, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("field, value", [
    ("eta1", 1.2), ("eta2", -0.1), ("alpha", -1.0), ("r", -0.5), ("g_x", 0.0), ("m", -1), ("n_th", -0.1),
    ("phi", float("nan")),
])
def test_params_validation(field, value):
    with pytest.raises(InvalidParameter, match=field):
        ProtocolParams(**{field: value})


def test_ensemble_variance_stays_above_vacuum():
    out = run_ensemble(ProtocolParams(alpha=1, r=0.3, m=10, phi=0.7, eta1=0.5, eta2=0.6))
    assert out.var_x >= 0.25 - 1e-12 and out.var_p >= 0.25 - 1e-12
