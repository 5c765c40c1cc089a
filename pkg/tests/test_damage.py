import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ductile_pf.damage import (
    DamageProblem,
    kkt_residual,
    optimal_profile,
    seed_precrack,
    solve_box_qp,
    solve_damage,
    surface_energy,
)
from ductile_pf.materials import C_W, MaterialParams
from ductile_pf.mesh import IntervalMesh, mesh_rectangle
from oracles import box_qp_enumeration, profile_at1


def _small_meshes():
    yield IntervalMesh.uniform(-1.0, 1.0, 0.2)  # 11 nodes
    yield mesh_rectangle(1.5, 1.0, 0.5)  # 3 x 2 cells, 12 nodes


@pytest.mark.parametrize("mesh", list(_small_meshes()), ids=["interval", "rect12"])
@pytest.mark.parametrize("seed", range(4))
def test_matches_enumeration_oracle(mesh, seed):
    assert mesh.n_nodes <= 12
    rng = np.random.default_rng(seed)
    m = MaterialParams(Gc=1.0, ell=0.3)
    drive = rng.uniform(0.0, 8.0, mesh.n_cells)
    lower = np.where(rng.random(mesh.n_nodes) < 0.3, rng.uniform(0, 0.8, mesh.n_nodes), 0.0)
    prob = DamageProblem(mesh, m)
    H, c = prob.system(drive)
    x_ref, f_ref = box_qp_enumeration(H.toarray(), c, lower, np.ones(mesh.n_nodes))
    res = prob.solve(drive, lower, tol=1e-12)
    f = 0.5 * res.x @ (H @ res.x) + c @ res.x
    assert abs(f - f_ref) <= 1e-10 * max(1.0, abs(f_ref))
    assert np.abs(res.x - x_ref).max() < 1e-6


@pytest.mark.parametrize("mesh", list(_small_meshes()), ids=["interval", "rect12"])
def test_system_reproduces_functional(mesh):
    rng = np.random.default_rng(3)
    m = MaterialParams(Gc=1.7, ell=0.2)
    drive = rng.uniform(0, 3, mesh.n_cells)
    prob = DamageProblem(mesh, m)
    H, c = prob.system(drive)
    const = float(np.sum(mesh.measure * drive))
    for _ in range(3):
        a = rng.uniform(0, 1, mesh.n_nodes)
        assert 0.5 * a @ (H @ a) + c @ a + const == pytest.approx(prob.energy(a, drive), rel=1e-12)


def test_zero_drive_gives_no_damage():
    mesh = mesh_rectangle(2.0, 1.0, 0.1)
    m = MaterialParams()
    a = solve_damage(mesh, np.zeros(mesh.n_cells), np.zeros(mesh.n_nodes), m)
    assert np.all(a == 0.0)


def test_irreversibility_and_bounds():
    mesh = mesh_rectangle(2.0, 1.0, 0.1)
    m = MaterialParams(ell=0.2)
    rng = np.random.default_rng(0)
    prev = np.clip(rng.normal(0.3, 0.3, mesh.n_nodes), 0, 1)
    a = solve_damage(mesh, np.zeros(mesh.n_cells), prev, m)
    assert np.all(a >= prev) and np.all(a <= 1.0)
    with pytest.raises(ValueError):
        solve_damage(mesh, np.zeros(mesh.n_cells), prev + 1.5, m)


def test_constant_damage_surface_energy():
    mesh = mesh_rectangle(2.0, 1.5, 0.25)
    m = MaterialParams(Gc=2.0, ell=0.1)
    a = np.full(mesh.n_nodes, 0.4)
    expected = m.Gc / (4 * C_W) * 0.4 / m.ell * 3.0
    assert surface_energy(a, mesh, m) == pytest.approx(expected, rel=1e-12)
    assert surface_energy(a, mesh, m, DamageProblem(mesh, m)) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("ell", [0.1, 0.25])
def test_one_dimensional_optimal_profile(ell):
    h = ell / 20
    mesh = IntervalMesh.uniform(-6 * ell, 6 * ell, h)
    m = MaterialParams(Gc=1.0, ell=ell)
    lower = np.where(np.abs(mesh.x) < 1e-12, 1.0, 0.0)
    a = solve_damage(mesh, np.zeros(mesh.n_cells), lower, m, tol=1e-12)
    ref = profile_at1(mesh.x, ell)
    assert np.abs(a - ref).max() < 0.02
    support = mesh.x[a > 0]
    width = support.max() - support.min()
    assert abs(width - 4 * ell) <= 2 * h + 1e-12
    # dissipated energy of a full 1D crack is Gc (up to discretisation)
    assert surface_energy(a, mesh, m) == pytest.approx(m.Gc, rel=0.02)


def test_optimal_profile_helper_matches_oracle():
    x = np.linspace(-1, 1, 101)
    assert np.allclose(optimal_profile(x, 0.3), profile_at1(x, 0.3))


def test_seed_precrack_shape():
    mesh = mesh_rectangle(4.0, 2.0, 0.1)
    a = seed_precrack(mesh.nodes, 1.0, 0.25)
    x, y = mesh.nodes.T
    assert np.all(a[(x <= 1.0) & (np.abs(y) <= 0.125)] == 1.0)
    assert np.all(a[np.hypot(np.maximum(x - 1.0, 0), y) > 0.125 + 0.5] == 0.0)
    assert seed_precrack(mesh.nodes, -10.0, 0.25).max() == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.5, 20.0))
def test_qp_solution_is_kkt_point_and_decreases_energy(seed, scale):
    mesh = IntervalMesh.uniform(0.0, 2.0, 0.1)
    rng = np.random.default_rng(seed)
    m = MaterialParams(ell=0.2)
    drive = scale * rng.random(mesh.n_cells)
    prev = np.clip(rng.normal(0.1, 0.2, mesh.n_nodes), 0, 1)
    prob = DamageProblem(mesh, m)
    res = prob.solve(drive, prev, tol=1e-10)
    H, c = prob.system(drive)
    g = H @ res.x + c
    assert kkt_residual(g, res.x, prev, np.ones(mesh.n_nodes)).max() <= 1e-10 * np.abs(c).max()
    assert prob.energy(res.x, drive) <= prob.energy(prev, drive) + 1e-12


def test_box_qp_trivial_cases():
    H = np.diag([2.0, 4.0])
    res = solve_box_qp(H, np.array([-2.0, 8.0]), np.zeros(2), np.ones(2))
    assert np.allclose(res.x, [1.0, 0.0])
    res = solve_box_qp(H, np.array([-1.0, -1.0]), np.zeros(2), np.ones(2))
    assert np.allclose(res.x, [0.5, 0.25])
