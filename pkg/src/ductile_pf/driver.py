"""Time stepping with the two staggered minimization schemes.

``aup``: joint elastoplastic solve at frozen damage, then damage, repeated.
``upa``: plastic update and damage against the current displacement, then
a displacement solve, repeated. Both stop on the max nodal damage change.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import SimulationConfig, save_config
from .constitutive import PlasticState, plastic_update, undegraded_energy
from .damage import DamageProblem, seed_precrack
from .equilibrium import (
    DirichletBC,
    DisplacementProblem,
    LinearSolverOptions,
    SolverError,
    solve_displacement,
    solve_elastoplastic,
)
from .loads import NotchLoad, SurfingLoad, notch_displacement, surfing_displacement
from .materials import MaterialParams, derive_params, nucleation_stress
from .mesh import MeshP1, NotchGeometry, mesh_notch, mesh_rectangle
from .postproc import (
    Ledger,
    LedgerRow,
    crack_metrics,
    energies,
    export_fields,
    hoop_stress_ahead,
    j_integral,
    k_factor,
    plastic_zone_metrics,
)

log = logging.getLogger(__name__)


class StepFailure(SolverError):
    """A load step could not be completed even after halving the increment."""

    def __init__(self, step: int, t: float, reason: str):
        super().__init__(f"step {step} (t={t:.6g}) failed: {reason}")
        self.step = step
        self.t = t


# ---------------------------------------------------------------------------
# load programs
# ---------------------------------------------------------------------------


class SurfingProgram:
    """Translating crack-tip field prescribed on the whole outer boundary."""

    lam = 0.5

    def __init__(self, mesh: MeshP1, m: MaterialParams, load: SurfingLoad, tag: str = "dirichlet"):
        self.mesh, self.m, self.load = mesh, m, load
        self.nodes = mesh.boundary_nodes(tag)

    def boundary(self, t: float) -> DirichletBC:
        x, y = self.mesh.nodes[self.nodes].T
        return DirichletBC.from_nodes(self.nodes, surfing_displacement(x, y, t, self.load, self.m))

    def load_tip(self, t: float) -> float:
        return self.load.tip(t)


class NotchProgram:
    """Proportional notch field ``t * U_hat`` on the outer arc."""

    def __init__(self, mesh: MeshP1, m: MaterialParams, load: NotchLoad, tag: str = "dirichlet"):
        self.mesh, self.m, self.load = mesh, m, load
        self.nodes = mesh.boundary_nodes(tag)
        self.lam = load.lam

    def boundary(self, t: float) -> DirichletBC:
        x, y = self.mesh.nodes[self.nodes].T
        return DirichletBC.from_nodes(self.nodes, notch_displacement(x, y, t, self.load, self.m))

    def load_tip(self, t: float) -> float:
        return t


class TractionProgram:
    """Uniaxial extension of a strip: ``u_x = t x`` on the two ends, ``u_y = 0`` at one node."""

    lam = 1.0

    def __init__(self, mesh: MeshP1):
        x, y = mesh.nodes.T
        L = x.max()
        tol = 1e-9 * max(L, 1.0)
        self.mesh = mesh
        self.left = np.nonzero(x <= tol)[0]
        self.right = np.nonzero(x >= L - tol)[0]
        self.pin = self.left[np.argmin(np.abs(y[self.left]))]
        self.L = L

    def boundary(self, t: float) -> DirichletBC:
        ends = np.concatenate([self.left, self.right])
        vals = np.zeros((len(ends), 2))
        vals[len(self.left):, 0] = t * self.L
        bc = DirichletBC.from_nodes(ends, vals, components=(0,))
        return bc + DirichletBC.from_nodes([self.pin], [[0.0, 0.0]], components=(1,))

    def load_tip(self, t: float) -> float:
        return t


def build_mesh(cfg: SimulationConfig) -> MeshP1:
    mc, m = cfg.mesh, cfg.material
    if mc.kind == "rectangle":
        return mesh_rectangle(mc.L, mc.H, mc.delta, mc.precrack)
    geo = NotchGeometry(math.radians(mc.omega_deg), mc.radius if mc.radius is not None else 50 * m.ell)
    d_tip = mc.delta_tip if mc.delta_tip is not None else m.ell / 3
    d_far = mc.delta_far if mc.delta_far is not None else 4 * m.ell
    return mesh_notch(geo, d_tip, d_far, mc.fine_radius, mc.growth)


def build_program(cfg: SimulationConfig, mesh: MeshP1):
    lc, m = cfg.load, cfg.material
    if lc.kind == "surfing":
        x0 = lc.x_start if lc.x_start is not None else cfg.mesh.precrack
        return SurfingProgram(mesh, m, SurfingLoad(lc.psi, lc.V, x0))
    if lc.kind == "notch":
        return NotchProgram(mesh, m, NotchLoad.for_angle(math.radians(cfg.mesh.omega_deg)))
    return TractionProgram(mesh)


def mesh_size(cfg: SimulationConfig) -> float:
    """Mesh size entering the numerical toughness (tip size for notch meshes)."""
    if cfg.mesh.kind == "notch":
        return cfg.mesh.delta_tip if cfg.mesh.delta_tip is not None else cfg.material.ell / 3
    return cfg.mesh.delta


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


@dataclass
class SimulationState:
    step: int
    t: float
    u: np.ndarray
    alpha: np.ndarray
    plastic: PlasticState


@dataclass
class StepInfo:
    iterations: int
    converged: bool
    change: float
    energy_trace: list = field(default_factory=list)


class Simulation:
    """One deterministic run of a :class:`SimulationConfig`."""

    def __init__(self, cfg: SimulationConfig, mesh: MeshP1 | None = None):
        self.cfg = cfg
        self.m = cfg.material
        self.mesh = mesh if mesh is not None else build_mesh(cfg)
        self.program = build_program(cfg, self.mesh)
        sc = cfg.solver
        lin = LinearSolverOptions(method=sc.linear_method, rtol=sc.linear_rtol)
        self.disp = DisplacementProblem(self.mesh, self.m, lin)
        self.dmg = DamageProblem(self.mesh, self.m)
        self.delta = mesh_size(cfg)
        self.derived = derive_params(self.m, self.delta)
        if cfg.mesh.kind == "rectangle" and cfg.load.kind == "surfing" and cfg.mesh.precrack > 0:
            seed = seed_precrack(self.mesh.nodes, cfg.mesh.precrack, self.m.ell)
            # relax the seed to the discrete optimal profile so an unloaded step leaves it unchanged
            alpha0 = self.dmg.solve(np.zeros(self.mesh.n_cells), seed, x0=seed, tol=cfg.solver.damage_tol).x
        else:
            alpha0 = np.zeros(self.mesh.n_nodes)
        self.precrack_tip = cfg.mesh.precrack if cfg.mesh.kind == "rectangle" else 0.0
        n = self.mesh.n_nodes
        self.state = SimulationState(-1, cfg.load.t_start, np.zeros((n, 2)), alpha0, PlasticState.zeros(self.mesh.n_cells))
        self.ledger = Ledger()
        self.energy_traces: list[tuple[int, np.ndarray]] = []
        self.times = np.linspace(cfg.load.t_start, cfg.load.t_end, cfg.load.n_steps + 1)

    # -- helpers -----------------------------------------------------------

    def _mean(self, alpha):
        return alpha[self.mesh.cells].mean(axis=1)

    def total_energy(self, u, alpha, plastic) -> float:
        return float(sum(energies(self.mesh, u, alpha, plastic, self.m, self.dmg)))

    def _drive(self, u, plastic: PlasticState):
        return undegraded_energy(self.mesh.strain(u), plastic.eps_p, self.m) + plastic.dissipation(self.m)

    def _damage(self, u, plastic, lower, x0):
        sc = self.cfg.solver
        return self.dmg.solve(self._drive(u, plastic), lower, x0=x0, tol=sc.damage_tol).x

    # -- staggered steps ---------------------------------------------------

    def step_aup(self, t: float) -> tuple[SimulationState, StepInfo]:
        s, sc = self.state, self.cfg.solver
        bc = self.program.boundary(t)
        track = sc.track_energy
        alpha, u = s.alpha.copy(), s.u
        trace = []
        change = math.inf
        for k in range(1, sc.max_am + 1):
            ep = solve_elastoplastic(
                self.disp, self._mean(alpha), s.plastic, bc, u,
                tol=sc.inner_tol, maxit=sc.max_inner, method=sc.inner, plastic_tol=sc.plastic_tol,
            )
            u, trial = ep.u, ep.state
            if track:
                trace.append(self.total_energy(u, alpha, trial))
            new_alpha = self._damage(u, trial, s.alpha, alpha)
            change = float(np.abs(new_alpha - alpha).max(initial=0.0))
            alpha = new_alpha
            if track:
                trace.append(self.total_energy(u, alpha, trial))
            if change < sc.tol_am:
                return SimulationState(s.step, t, u, alpha, trial), StepInfo(k, True, change, trace)
        return SimulationState(s.step, t, u, alpha, trial), StepInfo(sc.max_am, False, change, trace)

    def step_upa(self, t: float) -> tuple[SimulationState, StepInfo]:
        s, sc, m = self.state, self.cfg.solver, self.m
        bc = self.program.boundary(t)
        track = sc.track_energy
        u = s.u.copy().reshape(-1)
        u[bc.dofs] = bc.values
        u = u.reshape(-1, 2)
        alpha = s.alpha.copy()
        prev = s.plastic
        trace = []
        change = math.inf
        for k in range(1, sc.max_am + 1):
            trial, _ = plastic_update(self.mesh.strain(u), s.plastic, self._mean(alpha), m)
            if track:
                trace.append(self.total_energy(u, alpha, trial))
            new_alpha = self._damage(u, trial, s.alpha, alpha)
            if track:
                trace.append(self.total_energy(u, new_alpha, trial))
            u = solve_displacement(self.mesh, new_alpha, trial.eps_p, m, bc, self.disp, u)
            if track:
                trace.append(self.total_energy(u, new_alpha, trial))
            change = float(np.abs(new_alpha - alpha).max(initial=0.0))
            dp = float(np.abs(trial.eps_p - prev.eps_p).max(initial=0.0))
            alpha, prev = new_alpha, trial
            if change < sc.tol_am and (not m.plastic or dp < sc.plastic_tol):
                return SimulationState(s.step, t, u, alpha, trial), StepInfo(k, True, change, trace)
        return SimulationState(s.step, t, u, alpha, prev), StepInfo(sc.max_am, False, change, trace)

    def step(self, t: float):
        return self.step_aup(t) if self.cfg.solver.scheme == "aup" else self.step_upa(t)

    def advance(self, t_target: float) -> StepInfo:
        """Move the committed state to ``t_target``, halving the increment on failure."""
        sc = self.cfg.solver
        index = self.state.step + 1
        eps = 1e-12 * max(1.0, abs(t_target))
        dt = t_target - self.state.t
        level = 0
        total = StepInfo(0, True, 0.0, [])
        while True:
            t_try = t_target if self.state.t + dt >= t_target - eps else self.state.t + dt
            reason = "alternating minimization did not converge"
            try:
                new, info = self.step(t_try)
            except SolverError as exc:
                new, info, reason = None, None, str(exc)
            if info is not None and info.converged:
                self.state = new
                total.iterations += info.iterations
                total.change = info.change
                total.energy_trace.extend(info.energy_trace)
                if t_try >= t_target - eps:
                    break
                continue
            level += 1
            if level > sc.max_halvings or dt <= 0:
                raise StepFailure(index, t_try, reason)
            log.info("step %d: %s; halving the load increment (level %d)", index, reason, level)
            dt /= 2
        self.state.step = index
        if total.energy_trace:
            self.energy_traces.append((index, np.array(total.energy_trace)))
        return total

    # -- observables -------------------------------------------------------

    def observe(self, info: StepInfo) -> LedgerRow:
        s, m, mesh = self.state, self.m, self.mesh
        el, su, pl = energies(mesh, s.u, s.alpha, s.plastic, m, self.dmg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            J = j_integral(mesh, s.u, s.alpha, s.plastic, m)
        cm = crack_metrics(s.alpha, mesh, self.precrack_tip, threshold=self.cfg.postproc.crack_threshold)
        area, hp = plastic_zone_metrics(s.plastic.eps_eq, mesh)
        k = math.nan
        if self.cfg.load.kind == "notch":
            k = self.k_fit().k
        return LedgerRow(
            step=s.step, t=s.t, load_tip=self.program.load_tip(s.t),
            elastic=el, surface=su, plastic=pl, total=el + su + pl, J=J,
            crack_length=cm.length, tip_x=cm.tip_x, zone_tip_x=cm.zone_tip_x,
            h_p=hp, plastic_area=area, max_alpha=cm.max_alpha, k=k,
            am_iterations=info.iterations, converged=int(info.converged),
        )

    def k_fit(self):
        s = self.state
        lo, hi = self.cfg.postproc.k_window
        r, sig = hoop_stress_ahead(self.mesh, s.u, s.alpha, s.plastic, self.m)
        try:
            return k_factor(r, sig, self.program.lam, (lo * self.delta, hi * self.delta))
        except ValueError:
            from .postproc import KFit

            return KFit(math.nan, math.nan, 0)

    def energy_violations(self, rtol: float = 1e-9) -> int:
        """Number of recorded sub-minimizations that increased the total functional."""
        bad = 0
        for _, tr in self.energy_traces:
            scale = np.maximum(np.abs(tr[:-1]), 1e-300)
            bad += int(np.sum(np.diff(tr) > rtol * scale + 1e-14))
        return bad

    # -- run ---------------------------------------------------------------

    def metadata(self) -> dict:
        d = self.derived
        m = self.m
        other = m.with_(mode="plane_stress" if m.mode == "plane_strain" else "plane_strain")
        sc_other = nucleation_stress(m.Gc, other.E_prime, m.ell)
        return {
            "name": self.cfg.name,
            "scheme": self.cfg.solver.scheme,
            "mesh": {"nodes": self.mesh.n_nodes, "cells": self.mesh.n_cells, "delta": self.delta},
            "derived": {
                "E_prime": d.E_prime, "sigma_c": d.sigma_c, "r_y": d.r_y, "Gc_num": d.Gc_num, "K_Ic": d.K_Ic,
                "r_y_other_mode": sc_other / m.sigma0 if m.plastic else 0.0,
            },
            "lambda": self.program.lam,
            "dissipation_commit": "accumulated plastic strain committed at outer convergence only",
            "deterministic": self.cfg.output.deterministic,
            "provenance": self.cfg.metadata.get("provenance", {}),
        }

    def run(self, out_dir=None, on_step: Callable | None = None) -> Ledger:
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            save_config(self.cfg, out / "config.yaml")
            (out / "snapshots").mkdir(exist_ok=True)
        meta = self.metadata()
        every = self.cfg.output.snapshot_every
        try:
            for i, t in enumerate(self.times):
                info = self.advance(float(t))
                row = self.observe(info)
                self.ledger.append(row)
                log.info("step %d t=%.4g J=%.4g tip=%.4g am=%d", row.step, row.t, row.J, row.tip_x, row.am_iterations)
                if out is not None:
                    self.ledger.write_csv(out / "ledger.csv")
                    if every and i % every == 0:
                        export_fields(out / "snapshots" / f"step_{i:05d}", self.mesh, self.state.u,
                                      self.state.alpha, self.state.plastic, self.m)
                if on_step is not None:
                    on_step(self)
                stop = self.cfg.load.stop_surface
                if stop is not None and row.surface >= stop:
                    meta["stopped_early"] = {"step": row.step, "t": row.t}
                    break
        except StepFailure as exc:
            meta.update(status="failed", failed_step=exc.step, error=str(exc))
            if out is not None:
                (out / "metadata.json").write_text(json.dumps(meta, indent=2))
            raise
        meta.update(status="ok", steps=len(self.ledger), energy_violations=self.energy_violations())
        if out is not None:
            if every:
                i = self.state.step
                export_fields(out / "snapshots" / f"step_{i:05d}", self.mesh, self.state.u,
                              self.state.alpha, self.state.plastic, self.m)
            (out / "metadata.json").write_text(json.dumps(meta, indent=2))
        return self.ledger


def run(cfg: SimulationConfig, out_dir=None, on_step=None) -> Ledger:
    """Execute a configuration; writes ledger, config and snapshots under ``out_dir``."""
    return Simulation(cfg).run(out_dir, on_step)
