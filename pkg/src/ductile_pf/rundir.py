"""Read-only inspection of run directories (ledger, snapshots, k-fits)."""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

from .config import SimulationConfig, load_config
from .constitutive import PlasticState
from .loads import NotchLoad
from .postproc import Ledger, critical_k, energies, hoop_stress_ahead, k_factor, load_snapshot

_SNAP = re.compile(r"step_(\d+)\.npz$")


def run_config(run_dir) -> SimulationConfig:
    p = Path(run_dir) / "config.yaml"
    if not p.exists():
        raise FileNotFoundError(f"{run_dir} is not a run directory (no config.yaml)")
    return load_config(p)


def read_ledger(run_dir) -> Ledger:
    p = Path(run_dir) / "ledger.csv"
    if not p.exists():
        raise FileNotFoundError(f"no ledger.csv in {run_dir}")
    return Ledger.read_csv(p)


def read_metadata(run_dir) -> dict:
    p = Path(run_dir) / "metadata.json"
    return json.loads(p.read_text()) if p.exists() else {}


def list_snapshots(run_dir) -> list[int]:
    d = Path(run_dir) / "snapshots"
    if not d.is_dir():
        return []
    return sorted(int(m.group(1)) for f in d.iterdir() if (m := _SNAP.search(f.name)))


def _resolve_step(run_dir, step: int | None) -> int:
    steps = list_snapshots(run_dir)
    if not steps:
        raise FileNotFoundError(f"no snapshots in {run_dir} (run with --snapshot-every N)")
    if step is None:
        return steps[-1]
    if step not in steps:
        raise FileNotFoundError(f"no snapshot for step {step} in {run_dir}; available: {steps}")
    return step


def load_state(run_dir, step: int | None = None):
    """(config, mesh, step, fields) for a stored snapshot; the mesh is rebuilt from the config."""
    from .driver import build_mesh

    cfg = run_config(run_dir)
    step = _resolve_step(run_dir, step)
    snap = load_snapshot(Path(run_dir) / "snapshots" / f"step_{step:05d}")
    return cfg, build_mesh(cfg), step, snap


def snapshot_summary(run_dir, step: int | None = None) -> dict:
    cfg, mesh, step, snap = load_state(run_dir, step)
    st = PlasticState(snap["eps_p"], snap["eps_eq"])
    el, su, pl = energies(mesh, snap["u"], snap["alpha"], st, cfg.material)
    base = Path(run_dir) / "snapshots" / f"step_{step:05d}"
    return {
        "available": list_snapshots(run_dir),
        "step": step,
        "files": [str(base.with_suffix(".vtk")), str(base.with_suffix(".npz"))],
        "elastic": el,
        "surface": su,
        "plastic": pl,
        "total": el + su + pl,
        "max_alpha": float(snap["alpha"].max()),
        "max_eps_eq": float(snap["eps_eq"].max(initial=0.0)),
    }


def kfit(run_dir, step: int | None = None, window: tuple[float, float] | None = None) -> dict:
    """Critical intensity from the ledger and, for a snapshot step, a fresh hoop-stress fit."""
    from .campaigns import notch_kc
    from .driver import mesh_size
    from .materials import numerical_toughness

    cfg = run_config(run_dir)
    if cfg.load.kind != "notch":
        raise ValueError("k fits apply to notch runs only")
    m, pp = cfg.material, cfg.postproc
    lam = NotchLoad.for_angle(math.radians(cfg.mesh.omega_deg)).lam
    delta = mesh_size(cfg)
    out = {"lam": lam, "k_formula": notch_kc(m, cfg.mesh.omega_deg, delta)}
    led_path = Path(run_dir) / "ledger.csv"
    if led_path.exists():
        gnum = numerical_toughness(m.Gc, m.ell, delta)
        ck = critical_k(Ledger.read_csv(led_path), pp.nucleation_jump * gnum * m.ell, pp.nucleation_level)
        out.update(k_c=ck.k_applied, k_c_fit=ck.k_fit, nucleation_step=ck.step)
    if step is not None or window is not None:
        cfg, mesh, step, snap = load_state(run_dir, step)
        lo, hi = window if window is not None else pp.k_window
        r, s = hoop_stress_ahead(mesh, snap["u"], snap["alpha"], PlasticState(snap["eps_p"], snap["eps_eq"]), m)
        fit = k_factor(r, s, lam, (lo * delta, hi * delta))
        out.update(step=step, k=fit.k, residual=fit.residual, n_samples=fit.n_samples)
    return out
