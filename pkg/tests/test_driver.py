import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ductile_pf.config import LoadConfig, MeshConfig, SimulationConfig, SolverSection
from ductile_pf.driver import Simulation, StepFailure, TractionProgram
from ductile_pf.equilibrium import SolverError
from ductile_pf.materials import MaterialParams


def _surfing(scheme="aup", sigma0=math.inf, t_end=1.0, n_steps=5, psi=1.0, mode="plane_strain", **solver):
    return SimulationConfig(
        name="t",
        material=MaterialParams(E=1.0, nu=0.2, Gc=1.0, ell=0.25, sigma0=sigma0, mode=mode),
        mesh=MeshConfig(L=3.0, H=1.5, delta=0.125, precrack=1.0),
        load=LoadConfig(kind="surfing", psi=psi, t_start=0.0, t_end=t_end, n_steps=n_steps),
        solver=SolverSection(scheme=scheme, tol_am=1e-7, damage_tol=1e-10, linear_rtol=1e-13, **solver),
    )


def test_zero_load_leaves_state_unchanged():
    cfg = _surfing(psi=0.0, n_steps=2)
    sim = Simulation(cfg)
    a0 = sim.state.alpha.copy()
    sim.run()
    assert np.abs(sim.state.u).max() == 0.0
    assert np.array_equal(sim.state.alpha, a0)
    row = sim.ledger[-1]
    assert row.elastic == 0.0 and row.plastic == 0.0 and row.J == 0.0


def test_zero_load_on_undamaged_strip_gives_zero_energies():
    cfg = SimulationConfig(
        mesh=MeshConfig(L=2.0, H=0.5, delta=0.125, precrack=0.0),
        load=LoadConfig(kind="traction", t_start=0.0, t_end=1e-9, n_steps=1),
    )
    sim = Simulation(cfg)
    sim.advance(0.0)
    row = sim.observe(sim.advance(0.0))
    assert (row.elastic, row.surface, row.plastic, row.total) == (0.0, 0.0, 0.0, 0.0)


def test_elastic_aup_and_upa_agree():
    a = Simulation(_surfing("aup", t_end=1.5, n_steps=3))
    b = Simulation(_surfing("upa", t_end=1.5, n_steps=3))
    a.run()
    b.run()
    assert a.state.alpha.max() > 0.9
    assert np.linalg.norm(a.state.u - b.state.u) <= 1e-6 * np.linalg.norm(a.state.u)
    assert np.linalg.norm(a.state.alpha - b.state.alpha) <= 1e-6 * np.linalg.norm(a.state.alpha)


def test_energy_monotone_within_steps_both_schemes():
    for scheme in ("aup", "upa"):
        sim = Simulation(_surfing(scheme, sigma0=0.5, t_end=1.0, n_steps=4))
        sim.run()
        assert sim.energy_traces
        assert sim.energy_violations() == 0


def test_irreversibility_and_plastic_monotonicity_along_run():
    sim = Simulation(_surfing(sigma0=0.5, t_end=1.0, n_steps=4))
    prev_a, prev_p = sim.state.alpha.copy(), sim.state.plastic.eps_eq.copy()

    def check(s):
        nonlocal prev_a, prev_p
        assert np.all(s.state.alpha >= prev_a - 1e-15)
        assert np.all(s.state.plastic.eps_eq >= prev_p - 1e-15)
        prev_a, prev_p = s.state.alpha.copy(), s.state.plastic.eps_eq.copy()

    sim.run(on_step=check)
    assert sim.state.plastic.eps_eq.max() > 0


@settings(max_examples=6, deadline=None)
@given(st.lists(st.floats(-0.02, 0.04), min_size=2, max_size=4))
def test_random_load_programs_preserve_monotonicity(increments):
    cfg = SimulationConfig(
        material=MaterialParams(E=1.0, nu=0.3, Gc=1.0, ell=0.25, sigma0=0.2),
        mesh=MeshConfig(L=1.0, H=0.5, delta=0.125, precrack=0.0),
        load=LoadConfig(kind="traction", t_start=0.0, t_end=1.0, n_steps=1),
        solver=SolverSection(tol_am=1e-6),
    )
    sim = Simulation(cfg)
    t = 0.0
    for dt in increments:
        a, p = sim.state.alpha.copy(), sim.state.plastic.eps_eq.copy()
        t += dt
        sim.advance(t)
        assert np.all(sim.state.alpha >= a)
        assert np.all(sim.state.plastic.eps_eq >= p)
        assert np.all(sim.state.alpha <= 1.0)


def test_halving_then_failure(monkeypatch):
    sim = Simulation(_surfing(n_steps=2))
    calls = []

    def never(t):
        calls.append(t)
        raise SolverError("boom")

    monkeypatch.setattr(sim, "step", never)
    with pytest.raises(StepFailure) as exc:
        sim.advance(0.5)
    assert exc.value.step == 0
    assert len(calls) == 5  # original plus four halvings
    assert calls[1] == pytest.approx(0.25) and calls[-1] == pytest.approx(0.5 / 16)


def test_halving_recovers(monkeypatch):
    sim = Simulation(_surfing(n_steps=2))
    real = sim.step
    seen = []

    def flaky(t):
        seen.append(t)
        if len(seen) == 1:
            raise SolverError("first try fails")
        return real(t)

    monkeypatch.setattr(sim, "step", flaky)
    sim.advance(0.5)
    assert sim.state.t == 0.5 and sim.state.step == 0
    assert seen == [0.5, 0.25, 0.5]


def test_failed_run_reports_step(tmp_path, monkeypatch):
    sim = Simulation(_surfing(n_steps=3))
    real = sim.step

    def fail_late(t):
        if t > 0.5:
            raise SolverError("diverged")
        return real(t)

    monkeypatch.setattr(sim, "step", fail_late)
    with pytest.raises(StepFailure) as exc:
        sim.run(tmp_path)
    assert exc.value.step == 2
    import json

    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["status"] == "failed" and meta["failed_step"] == 2
    assert len((tmp_path / "ledger.csv").read_text().splitlines()) == 1 + 2


def test_run_is_deterministic(tmp_path):
    cfg = _surfing(sigma0=0.5, t_end=1.0, n_steps=2)
    cfg.output.snapshot_every = 1
    a = Simulation(cfg)
    a.run(tmp_path / "a")
    b = Simulation(cfg)
    b.run(tmp_path / "b")
    assert (tmp_path / "a" / "ledger.csv").read_bytes() == (tmp_path / "b" / "ledger.csv").read_bytes()
    assert np.array_equal(a.state.u, b.state.u)
    assert sorted(p.name for p in (tmp_path / "a" / "snapshots").iterdir()) == [
        f"step_{i:05d}.{ext}" for i in range(3) for ext in ("npz", "vtk")
    ]


def test_halved_time_step_changes_crack_length_by_less_than_an_element():
    coarse = Simulation(_surfing(t_end=1.5, n_steps=6))
    fine = Simulation(_surfing(t_end=1.5, n_steps=12))
    coarse.run()
    fine.run()
    assert coarse.ledger[-1].crack_length > 0.5
    assert abs(coarse.ledger[-1].crack_length - fine.ledger[-1].crack_length) < 0.125


def test_traction_program_boundary():
    from ductile_pf.mesh import mesh_rectangle

    mesh = mesh_rectangle(2.0, 1.0, 0.25)
    prog = TractionProgram(mesh)
    bc = prog.boundary(0.01)
    u = np.zeros(2 * mesh.n_nodes)
    u[bc.dofs] = bc.values
    u = u.reshape(-1, 2)
    assert np.allclose(u[prog.right, 0], 0.02)
    assert np.allclose(u[prog.left, 0], 0.0)
    assert len(bc.dofs) == len(prog.left) + len(prog.right) + 1


def test_metadata_records_both_mode_conventions():
    sim = Simulation(_surfing(sigma0=0.5))
    md = sim.metadata()
    m = sim.m
    sc = math.sqrt(3 * m.Gc * m.E_prime / (8 * m.ell))
    assert md["derived"]["r_y"] == pytest.approx(sc / 0.5)
    other = math.sqrt(3 * m.Gc * m.E / (8 * m.ell)) / 0.5  # plane-stress E' = E
    assert md["derived"]["r_y_other_mode"] == pytest.approx(other)
    assert "dissipation_commit" in md
