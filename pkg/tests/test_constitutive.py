import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ductile_pf.constitutive import PlasticState, energy_density, plastic_update
from ductile_pf.materials import ONE_3D, MaterialParams
from oracles import (
    brute_force_return,
    incremental_functional,
    random_return_samples,
    to_mandel_3d,
    to_mandel_in_plane,
)

SQ2 = math.sqrt(2.0)


def _mat(mode, sigma0=0.5):
    return MaterialParams(E=1.0, nu=0.3, sigma0=sigma0, mode=mode)


def _run(m, eps_t, alpha, ep_old_t, eq_old):
    old = PlasticState(to_mandel_3d(ep_old_t), eq_old.copy())
    return plastic_update(to_mandel_in_plane(eps_t), old, alpha, m)


def test_elastic_branch_leaves_state_unchanged(mode):
    m = _mat(mode)
    eps = np.array([[1e-2, -3e-3, 2e-3]])
    new, st_ = plastic_update(eps, PlasticState.zeros(1), np.array([0.0]), m)
    assert np.all(new.eps_p == 0) and new.eps_eq[0] == 0
    assert st_.equivalent[0] < 0.5


def test_full_damage_kills_deviatoric_strength(mode):
    m = _mat(mode)
    eps = np.array([[0.3, -0.1, 0.2]])
    _, st_ = plastic_update(eps, PlasticState.zeros(1), np.array([1.0]), m)
    assert st_.equivalent[0] <= 1e-9


def test_plane_strain_uniaxial_strain_past_yield_matches_oracle():
    m = _mat("plane_strain")
    e = 3.0 * m.sigma0 / m.E
    eps_t = np.array([[e, 0.0, 0.0]])
    new, st_ = _run(m, eps_t, np.array([0.0]), np.zeros((1, 4)), np.zeros(1))
    assert st_.equivalent[0] == pytest.approx(m.sigma0, abs=1e-10)
    d, _ = brute_force_return(eps_t[0], np.zeros(4), 0.0, 0.0, m.E, m.nu, m.sigma0, m.eta, False)
    expect = np.array([d[0], d[1], -d[0] - d[1], SQ2 * d[2]])
    assert np.allclose(new.eps_p[0], expect, atol=1e-4)


@pytest.mark.parametrize("seed", [0, 1])
def test_return_matches_brute_force(mode, seed):
    m = _mat(mode)
    rng = np.random.default_rng(seed)
    eps, alpha, ep_old, eq_old = random_return_samples(rng, 15, m.sigma0, m.E, m.nu)
    new, st_ = _run(m, eps, alpha, ep_old, eq_old)
    ps = mode == "plane_stress"
    for i in range(len(eps)):
        d_ref, f_ref = brute_force_return(eps[i], ep_old[i], eq_old[i], alpha[i], m.E, m.nu, m.sigma0, m.eta, ps)
        dp = new.eps_p[i] - to_mandel_3d(ep_old[i : i + 1])[0]
        d_pkg = np.array([dp[0], dp[1], dp[3] / SQ2])
        f_pkg = incremental_functional(d_pkg[None], eps[i], ep_old[i], eq_old[i], alpha[i], m.E, m.nu, m.sigma0, m.eta, ps)[0]
        assert np.allclose(d_pkg, d_ref, atol=1e-4)
        assert f_pkg <= f_ref + 1e-9
        b = (1 - alpha[i]) ** 2
        assert st_.equivalent[i] <= b * m.sigma0 + 1e-9


def test_plane_stress_out_of_plane_stress_vanishes():
    m = _mat("plane_stress")
    rng = np.random.default_rng(3)
    eps, alpha, ep_old, eq_old = random_return_samples(rng, 200, m.sigma0, m.E, m.nu)
    _, st_ = _run(m, eps, alpha, ep_old, eq_old)
    assert np.all(np.abs(st_.sigma[:, 2]) <= 1e-9 * np.maximum(1.0, np.abs(st_.sigma).max(axis=1)))


@settings(max_examples=60, deadline=None)
@given(
    e=st.lists(st.floats(-0.05, 0.05), min_size=3, max_size=3),
    alpha=st.floats(0.0, 0.99),
    mode=st.sampled_from(["plane_strain", "plane_stress"]),
    seed=st.integers(0, 2**16),
)
def test_return_properties(e, alpha, mode, seed):
    m = MaterialParams(E=1.0, nu=0.3, sigma0=0.01, mode=mode)
    eps = np.array([e])
    old = PlasticState.zeros(1)
    new, st_ = plastic_update(eps, old, np.array([alpha]), m, want_tangent=True)
    # dissipation nonnegative and trace free
    assert new.eps_eq[0] >= 0
    assert abs(new.eps_p[0, :3].sum()) < 1e-15
    # admissibility
    b = (1 - alpha) ** 2
    assert st_.equivalent[0] <= b * m.sigma0 + 1e-9
    # normality: increment colinear with the stress deviator
    dp = new.eps_p[0]
    if np.linalg.norm(dp) > 1e-12:
        s = st_.deviator[0]
        cos = dp @ s / (np.linalg.norm(dp) * np.linalg.norm(s))
        assert cos == pytest.approx(1.0, abs=1e-9)
    # optimality against random trace-free probes
    rng = np.random.default_rng(seed)
    a = 1e-6 + (1 - alpha) ** 2
    ep = dp
    base = _incremental(m, eps[0], ep, a, b, mode)
    for _ in range(10):
        p = rng.normal(scale=1e-4, size=4)
        p[2] = -p[0] - p[1]
        assert base <= _incremental(m, eps[0], ep + p, a, b, mode) + 1e-15


def _incremental(m, eps, ep, a, b, mode):
    e = np.array([eps[0] - ep[0], eps[1] - ep[1], -ep[2], eps[2] - ep[3]])
    lam, mu = m.lam, m.mu
    if mode == "plane_stress":
        e[2] = -lam / (lam + 2 * mu) * (e[0] + e[1])
    tr = e[:3].sum()
    psi = 0.5 * lam * tr**2 + mu * (e @ e)
    return a * psi + b * m.sigma0 * math.sqrt(2.0 / 3.0) * np.linalg.norm(ep)


def test_consistent_tangent_matches_finite_differences(mode):
    m = _mat(mode, sigma0=0.02)
    rng = np.random.default_rng(7)
    eps = rng.normal(scale=0.05, size=(5, 3))
    alpha = rng.uniform(0, 0.5, 5)
    old = PlasticState.zeros(5)
    _, st0 = plastic_update(eps, old, alpha, m, want_tangent=True)
    h = 1e-7
    for j in range(3):
        d = np.zeros(3)
        d[j] = h
        _, sp = plastic_update(eps + d, old, alpha, m)
        _, sm = plastic_update(eps - d, old, alpha, m)
        fd = (sp.in_plane - sm.in_plane) / (2 * h)
        assert np.allclose(st0.tangent[:, :, j], fd, rtol=1e-5, atol=1e-7)


def test_rejects_bad_inputs():
    m = _mat("plane_strain")
    with pytest.raises(ValueError):
        plastic_update(np.array([[np.nan, 0, 0]]), PlasticState.zeros(1), np.array([0.0]), m)
    with pytest.raises(ValueError):
        plastic_update(np.zeros((1, 3)), PlasticState.zeros(1), np.array([1.2]), m)


def test_energy_density_special_cases(mode):
    m = _mat(mode)
    eps = np.array([[1e-3, 2e-3, -1e-3]])
    state = PlasticState(np.array([[1e-3, 2e-3, -3e-3, -1e-3]]), np.array([0.01]))
    psi, dis = energy_density(eps, PlasticState.zeros(1), 0.0, m)
    C = m.lam, m.mu
    tr = eps[0, 0] + eps[0, 1]
    if mode == "plane_strain":
        ref = 0.5 * C[0] * tr**2 + C[1] * (eps[0, 0] ** 2 + eps[0, 1] ** 2 + eps[0, 2] ** 2)
    else:
        lam_ps = 2 * C[0] * C[1] / (C[0] + 2 * C[1])
        ref = 0.5 * lam_ps * tr**2 + C[1] * (eps[0, 0] ** 2 + eps[0, 1] ** 2 + eps[0, 2] ** 2)
    assert psi[0] == pytest.approx((1 + m.eta) * ref, rel=1e-12)
    assert dis[0] == 0
    _, dis1 = energy_density(eps, state, 1.0, m)
    assert dis1[0] == 0
    _, dis0 = energy_density(eps, state, 0.0, m)
    assert dis0[0] == pytest.approx(m.sigma0 * 0.01)


def test_zero_elastic_strain_gives_zero_energy():
    m = _mat("plane_stress")
    # in plane stress the out-of-plane strain adjusts, so any in-plane eps = eps_p gives zero energy
    ep = np.array([[1e-3, 2e-3, -3e-3, 5e-4]])
    eps = ep[:, [0, 1, 3]]
    psi, _ = energy_density(eps, PlasticState(ep, np.zeros(1)), 0.3, m)
    assert psi[0] == pytest.approx(0.0, abs=1e-20)
    m2 = _mat("plane_strain")
    ep2 = np.array([[1e-3, -1e-3, 0.0, 5e-4]])
    psi2, _ = energy_density(ep2[:, [0, 1, 3]], PlasticState(ep2, np.zeros(1)), 0.3, m2)
    assert psi2[0] == pytest.approx(0.0, abs=1e-20)


def test_hydrostatic_and_deviator():
    m = _mat("plane_strain", sigma0=math.inf)
    _, st_ = plastic_update(np.array([[1e-3, 1e-3, 0.0]]), PlasticState.zeros(1), np.array([0.0]), m)
    assert np.allclose(st_.deviator[0] + st_.hydrostatic[0] * ONE_3D, st_.sigma[0])
