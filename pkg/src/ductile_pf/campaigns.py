"""Named experiment presets, parameter sweeps and run comparison.

A :class:`Campaign` is a base configuration plus sweep points. Each point is
a mapping of overrides applied to the base; keys are dotted config paths
(``material.sigma0``, ``mesh.omega_deg``) or one of the derived keys

``r_y``
    ductility ratio; sets ``sigma0 = sigma_c / r_y`` for the current material.
``ell``
    regularisation length; rescales every length of a surfing setup so that
    the domain and mesh stay fixed in units of ``ell``.
``delta_over_ell``
    mesh size relative to ``ell`` (``delta`` or ``delta_tip``).

Every field a preset sets is tagged ``PAPER`` (value stated in the source
study) or ``DEFAULT`` (artifact choice) in ``metadata["provenance"]``.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .config import LoadConfig, MeshConfig, PostprocConfig, SimulationConfig, SolverSection, load_config
from .loads import NotchLoad
from .materials import MaterialParams, ell_for_sigma_c, nucleation_stress, numerical_toughness
from .postproc import Ledger, critical_k

log = logging.getLogger(__name__)

JOBS_ENV = "DUCTILE_PF_JOBS"

PRESETS = (
    "notch-sharp-pstress",
    "notch-sharp-pstrain",
    "notch-vangle-pstress",
    "notch-vangle-pstrain",
    "surfing-pstrain",
    "surfing-pstress",
    "ell-sweep",
    "mesh-sweep",
    "psi-sweep",
    "profile-validation",
)

# exit codes of a campaign run
EXIT_OK = 0
EXIT_PARTIAL = 3
EXIT_ALL_FAILED = 4


# ---------------------------------------------------------------------------
# overrides
# ---------------------------------------------------------------------------

_SURFING_LENGTHS = ("L", "H", "delta", "precrack")


def _set(cfg: SimulationConfig, key: str, value) -> SimulationConfig:
    section, _, name = key.partition(".")
    if not name:
        raise KeyError(f"override key {key!r} must look like 'section.field'")
    if section == "material":
        return cfg.replace(material=cfg.material.with_(**{name: value}))
    sub = getattr(cfg, section, None)
    if sub is None or not dataclasses.is_dataclass(sub) or name not in {f.name for f in dataclasses.fields(sub)}:
        raise KeyError(f"unknown config field {key!r}")
    return cfg.replace(**{section: dataclasses.replace(sub, **{name: value})})


def _set_ell(cfg: SimulationConfig, ell: float) -> SimulationConfig:
    f = ell / cfg.material.ell
    cfg = cfg.replace(material=cfg.material.with_(ell=ell))
    if cfg.mesh.kind == "notch":
        # notch lengths default to multiples of ell; explicit ones are rescaled
        vals = {k: (v * f if v is not None else None) for k, v in
                (("radius", cfg.mesh.radius), ("delta_tip", cfg.mesh.delta_tip),
                 ("delta_far", cfg.mesh.delta_far), ("fine_radius", cfg.mesh.fine_radius))}
        return cfg.replace(mesh=dataclasses.replace(cfg.mesh, **vals))
    mesh = dataclasses.replace(cfg.mesh, **{k: getattr(cfg.mesh, k) * f for k in _SURFING_LENGTHS})
    ld = cfg.load
    load = dataclasses.replace(
        ld, t_start=ld.t_start * f, t_end=ld.t_end * f,
        x_start=None if ld.x_start is None else ld.x_start * f,
    )
    return cfg.replace(mesh=mesh, load=load)


def apply_overrides(cfg: SimulationConfig, overrides: dict) -> SimulationConfig:
    """Apply sweep overrides; ``ell`` first, then plain fields, then ``r_y`` and ``delta_over_ell``."""
    ov = dict(overrides)
    if "ell" in ov:
        cfg = _set_ell(cfg, float(ov.pop("ell")))
    r_y = ov.pop("r_y", None)
    d_rel = ov.pop("delta_over_ell", None)
    for k, v in ov.items():
        cfg = _set(cfg, k, v)
    if r_y is not None:
        m = cfg.material
        sc = nucleation_stress(m.Gc, m.E_prime, m.ell)
        cfg = cfg.replace(material=m.with_(sigma0=math.inf if r_y == 0 else sc / float(r_y)))
    if d_rel is not None:
        d = float(d_rel) * cfg.material.ell
        cfg = _set(cfg, "mesh.delta_tip" if cfg.mesh.kind == "notch" else "mesh.delta", d)
    return cfg


def scale_config(cfg: SimulationConfig, scale: float) -> SimulationConfig:
    """Enlarge the domain by ``scale`` at fixed ``ell`` and mesh size (towards full-size runs)."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    if scale == 1:
        return cfg
    if cfg.mesh.kind == "notch":
        R = cfg.mesh.radius if cfg.mesh.radius is not None else 50 * cfg.material.ell
        return _set(cfg, "mesh.radius", R * scale)
    mc, ld = cfg.mesh, cfg.load
    x0 = ld.x_start if ld.x_start is not None else mc.precrack
    travel = ld.t_end * ld.V + x0
    # keep the margin between the field tip's final position and the right edge
    margin = mc.L - travel
    L = mc.L * scale
    t_end = (L - margin - x0) / ld.V
    n = max(1, int(round(ld.n_steps * (t_end - ld.t_start) / (ld.t_end - ld.t_start))))
    mesh = dataclasses.replace(mc, L=L, H=mc.H * scale)
    return cfg.replace(mesh=mesh, load=dataclasses.replace(ld, t_end=t_end, n_steps=n))


# ---------------------------------------------------------------------------
# campaigns
# ---------------------------------------------------------------------------


@dataclass
class Campaign:
    """A base configuration and its sweep points."""

    name: str
    base: SimulationConfig
    axes: dict = field(default_factory=dict)
    points: list | None = None  # explicit override sets; replaces the product of ``axes``
    provenance: dict = field(default_factory=dict)
    description: str = ""

    def overrides(self) -> list[dict]:
        if self.points is not None:
            return [dict(p) for p in self.points]
        if not self.axes:
            return [{}]
        keys = list(self.axes)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.axes[k] for k in keys))]

    def configs(self, scale: float = 1.0) -> list[tuple[str, SimulationConfig]]:
        out = []
        for ov in self.overrides():
            label = point_label(ov)
            cfg = apply_overrides(self.base, ov)
            cfg = scale_config(cfg, scale)
            name = f"{self.name}/{label}" if label else self.name
            md = dict(cfg.metadata)
            md["campaign"] = self.name
            md["point"] = {k: _plain(v) for k, v in ov.items()}
            md["provenance"] = dict(self.provenance)
            if scale != 1:
                md["scale"] = scale
            out.append((label or "base", cfg.replace(name=name, metadata=md)))
        return out

    def select(self, **criteria) -> "Campaign":
        """Restrict to points whose overrides match ``criteria`` (values or collections)."""
        def ok(p):
            for k, want in criteria.items():
                v = p.get(k)
                if isinstance(want, (list, tuple, set)):
                    if v not in want:
                        return False
                elif v != want:
                    return False
            return True

        return dataclasses.replace(self, points=[p for p in self.overrides() if ok(p)], axes={})


def _plain(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


_UNLABELLED = ("load.t_end", "load.n_steps")  # derived from the other keys of a point


def point_label(ov: dict) -> str:
    parts = []
    for k, v in ov.items():
        if k in _UNLABELLED:
            continue
        short = k.split(".")[-1]
        if isinstance(v, float):
            v = f"{v:g}"
        parts.append(f"{short}={v}")
    return ",".join(parts)


def _surfing_base(mode: str, sigma0: float, name: str) -> SimulationConfig:
    ell = 0.25
    L, H, xi0 = 30 * ell, 10 * ell, 4 * ell
    delta = 0.4 * ell
    t_end = L - xi0 - 4 * ell  # field tip stops 4 ell before the right edge
    return SimulationConfig(
        name=name,
        material=MaterialParams(E=1.0, nu=0.2, Gc=1.0, ell=ell, sigma0=sigma0, mode=mode),
        mesh=MeshConfig(kind="rectangle", L=L, H=H, delta=delta, precrack=xi0),
        load=LoadConfig(kind="surfing", psi=1.0, V=1.0, t_start=0.0, t_end=t_end, n_steps=int(round(t_end / delta))),
        solver=SolverSection(scheme="aup"),
    )


_SURFING_PROV = {
    "material.E": "PAPER", "material.nu": "PAPER", "material.Gc": "PAPER", "material.ell": "PAPER",
    "material.sigma0": "PAPER", "mesh.delta": "PAPER", "load.psi": "PAPER",
    "mesh.L": "DEFAULT", "mesh.H": "DEFAULT", "mesh.precrack": "DEFAULT", "load.V": "DEFAULT",
    "load.t_end": "DEFAULT", "load.n_steps": "DEFAULT", "solver.scheme": "DEFAULT", "solver.tol_am": "DEFAULT",
}


def notch_kc(m: MaterialParams, omega_deg: float, delta: float) -> float:
    """Nucleation intensity ``K_Ic**(2-2 lam) sigma_c**(2 lam-1)`` with the numerical toughness."""
    lam = NotchLoad.for_angle(math.radians(omega_deg)).lam
    K = math.sqrt(m.E_prime * numerical_toughness(m.Gc, m.ell, delta))
    sc = nucleation_stress(m.Gc, m.E_prime, m.ell)
    return K ** (2 - 2 * lam) * sc ** (2 * lam - 1)


def _notch_base(mode: str, name: str, omega_deg: float = 1.0) -> SimulationConfig:
    m = MaterialParams(E=1.3, nu=0.3, Gc=0.7, ell=1.0, mode=mode)
    m = m.with_(ell=ell_for_sigma_c(m, 5.0))
    kc = notch_kc(m, omega_deg, m.ell / 3)
    return SimulationConfig(
        name=name,
        material=m,
        mesh=MeshConfig(kind="notch", omega_deg=omega_deg, radius=50 * m.ell, delta_tip=m.ell / 3, delta_far=4 * m.ell),
        load=LoadConfig(kind="notch", t_start=0.0, t_end=2.5 * kc, n_steps=125, stop_surface=0.15),
        solver=SolverSection(scheme="aup"),
        postproc=PostprocConfig(),
    )


_NOTCH_PROV = {
    "material.E": "PAPER", "material.nu": "PAPER", "material.Gc": "PAPER", "material.ell": "PAPER",
    "mesh.delta_tip": "PAPER", "mesh.omega_deg": "PAPER", "solver.scheme": "PAPER", "material.sigma0": "PAPER",
    "mesh.radius": "DEFAULT", "mesh.delta_far": "DEFAULT", "load.t_end": "DEFAULT", "load.n_steps": "DEFAULT",
    "load.stop_surface": "DEFAULT", "postproc.nucleation_level": "PAPER", "postproc.nucleation_jump": "DEFAULT",
}


def _vangle_base(mode: str, name: str) -> Campaign:
    base = _notch_base(mode, name)
    # load windows differ per angle; the sweep sets t_end from the angle's nucleation estimate
    pts = []
    for om in (1.0, 30.0, 50.0, 60.0, 70.0, 85.0):
        kc = notch_kc(base.material, om, base.material.ell / 3)
        for ry in (0.1, 0.5, 2.0, 5.0):
            pts.append({"mesh.omega_deg": om, "r_y": ry, "load.t_end": 2.5 * kc})
    return Campaign(name, base, points=pts, provenance=dict(_NOTCH_PROV),
                    description="V-notch nucleation: notch angle and ductility sweep")


def preset(name: str) -> Campaign:
    """Named campaign; see :data:`PRESETS`."""
    if name == "notch-sharp-pstress":
        return Campaign(name, _notch_base("plane_stress", name), axes={"r_y": [0.1, 0.5, 2.0, 5.0]},
                        provenance=dict(_NOTCH_PROV), description="sharp notch nucleation, plane stress")
    if name == "notch-sharp-pstrain":
        return Campaign(name, _notch_base("plane_strain", name), axes={"r_y": [0.1, 0.5, 2.0, 5.0]},
                        provenance=dict(_NOTCH_PROV), description="sharp notch nucleation, plane strain")
    if name == "notch-vangle-pstress":
        return _vangle_base("plane_stress", name)
    if name == "notch-vangle-pstrain":
        return _vangle_base("plane_strain", name)
    if name == "surfing-pstrain":
        return Campaign(name, _surfing_base("plane_strain", 0.5, name), axes={"material.sigma0": [math.inf, 0.5]},
                        provenance=dict(_SURFING_PROV), description="surfing propagation, elastic vs elastic-plastic")
    if name == "surfing-pstress":
        prov = dict(_SURFING_PROV, **{"material.ell": "PAPER"})
        return Campaign(name, _surfing_base("plane_stress", 0.5, name), axes={"ell": [0.4, 0.1]},
                        provenance=prov, description="surfing propagation in plane stress, two ductility ratios")
    if name == "ell-sweep":
        prov = dict(_SURFING_PROV, **{"material.ell": "DEFAULT"})
        return Campaign(name, _surfing_base("plane_strain", 0.5, name), axes={"ell": [0.1, 0.175, 0.25]},
                        provenance=prov, description="surfing propagation, ell varied at fixed delta/ell")
    if name == "mesh-sweep":
        prov = dict(_SURFING_PROV, **{"mesh.delta": "DEFAULT"})
        return Campaign(name, _surfing_base("plane_strain", 0.5, name),
                        axes={"delta_over_ell": [0.2, 1 / 3, 0.4]},
                        provenance=prov, description="surfing propagation, mesh size varied at fixed ell")
    if name == "psi-sweep":
        prov = dict(_SURFING_PROV, **{"load.psi": "PAPER", "mesh.precrack": "DEFAULT"})
        pts = [{"load.psi": p, "mesh.precrack": 1.0} for p in (0.5, 1.0, 2.0)] + [{"load.psi": 1.0, "mesh.precrack": 0.5}]
        return Campaign(name, _surfing_base("plane_strain", 0.5, name), points=pts, provenance=prov,
                        description="sensitivity to the load magnitude psi and the pre-crack length")
    if name == "profile-validation":
        prov = dict(_SURFING_PROV, **{"material.sigma0": "DEFAULT", "mesh.delta": "DEFAULT"})
        return Campaign(name, _surfing_base("plane_strain", math.inf, name),
                        axes={"delta_over_ell": [0.2, 1 / 3, 0.4]}, provenance=prov,
                        description="brittle crack band: damage profile and numerical toughness")
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


@dataclass
class PointResult:
    label: str
    status: str  # "ok" | "failed"
    out_dir: str
    error: str = ""
    summary: dict = field(default_factory=dict)


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "")
    try:
        n = int(raw) if raw else 1
    except ValueError as exc:
        raise ValueError(f"{JOBS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def _run_point(label: str, cfg: SimulationConfig, out_dir: str) -> PointResult:
    from .driver import Simulation

    try:
        sim = Simulation(cfg)
        sim.run(out_dir)
        return PointResult(label, "ok", out_dir, summary=summarize(sim.ledger, cfg))
    except Exception as exc:  # a failed point must not take down the sweep
        log.error("point %s failed: %s", label, exc)
        return PointResult(label, "failed", out_dir, error=f"{type(exc).__name__}: {exc}",
                           summary={"traceback": traceback.format_exc(limit=3)})


def run_campaign(camp: Campaign, out_dir, jobs: int | None = None, scale: float = 1.0) -> list[PointResult]:
    """Run every point of a campaign; each point writes into ``out_dir/<label>``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    tasks = [(label, cfg, str(out / label)) for label, cfg in camp.configs(scale)]
    if jobs == 1 or len(tasks) == 1:
        results = [_run_point(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, *zip(*tasks)))
    _write_summary(out, camp, results)
    return results


def campaign_exit_code(results: list[PointResult]) -> int:
    bad = sum(r.status != "ok" for r in results)
    if bad == 0:
        return EXIT_OK
    return EXIT_ALL_FAILED if bad == len(results) else EXIT_PARTIAL


def _write_summary(out: Path, camp: Campaign, results: list[PointResult]) -> None:
    doc = {
        "campaign": camp.name,
        "description": camp.description,
        "points": [dataclasses.asdict(r) for r in results],
    }
    (out / "campaign.json").write_text(json.dumps(doc, indent=2, default=_plain))
    keys = ["peak_J", "final_crack_length", "n_jumps", "k_c", "k_c_fit", "max_alpha", "steps"]
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point", "status"] + keys)
        for r in results:
            w.writerow([r.label, r.status] + [r.summary.get(k, "") for k in keys])


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------


def jump_statistics(crack_length: np.ndarray, min_jump: float) -> dict:
    """Crack advances of at least ``min_jump`` between consecutive steps and the pinned steps between them."""
    inc = np.diff(np.asarray(crack_length, dtype=float))
    jumps = inc[inc >= min_jump]
    idx = np.nonzero(inc >= min_jump)[0] + 1
    pinned = [int(np.sum(np.abs(inc[a:b - 1]) < 1e-12)) for a, b in zip(idx[:-1], idx[1:])]
    return {
        "n_jumps": int(len(jumps)),
        "jump_steps": idx.tolist(),
        "jump_sizes": jumps.tolist(),
        "mean_jump": float(jumps.mean()) if len(jumps) else 0.0,
        "max_increment": float(inc.max()) if len(inc) else 0.0,
        "pinned_between": pinned,
    }


def peak_j_sequence(J: np.ndarray, prominence: float = 0.05) -> np.ndarray:
    """Prominent local maxima of ``J`` (relative prominence), always including the global maximum."""
    J = np.asarray(J, dtype=float)
    if len(J) == 0:
        return J
    top = float(np.nanmax(J))
    idx, _ = find_peaks(J, prominence=prominence * abs(top) if top else None)
    idx = sorted(set(idx.tolist()) | {int(np.nanargmax(J))})
    return J[idx]


def summarize(ledger: Ledger, cfg: SimulationConfig) -> dict:
    m, pp = cfg.material, cfg.postproc
    from .driver import mesh_size

    gnum = numerical_toughness(m.Gc, m.ell, mesh_size(cfg))
    J = ledger.column("J")
    out = {
        "steps": len(ledger),
        "peak_J": float(np.nanmax(J)) if len(J) else math.nan,
        "final_crack_length": float(ledger[-1].crack_length) if len(ledger) else 0.0,
        "max_alpha": float(ledger.column("max_alpha").max()) if len(ledger) else 0.0,
        "Gc_num": gnum,
    }
    js = jump_statistics(ledger.column("crack_length"), 2 * m.ell)
    out["n_jumps"] = js["n_jumps"]
    if cfg.load.kind == "notch":
        ck = critical_k(ledger, pp.nucleation_jump * gnum * m.ell, pp.nucleation_level)
        out.update(k_c=ck.k_applied, k_c_fit=ck.k_fit, nucleation_step=ck.step)
    return out


def _read_run(path) -> tuple[Ledger, SimulationConfig | None]:
    p = Path(path)
    ledger_path = p / "ledger.csv" if p.is_dir() else p
    if not ledger_path.exists():
        raise FileNotFoundError(f"no ledger found at {ledger_path}")
    cfg_path = ledger_path.parent / "config.yaml"
    cfg = load_config(cfg_path) if cfg_path.exists() else None
    return Ledger.read_csv(ledger_path), cfg


def compare(run_a, run_b, csv_out=None, min_jump: float | None = None) -> dict:
    """Side-by-side report of two runs; optionally writes a plot-ready CSV.

    Raises ``ValueError`` when the ledgers are not comparable (different
    schema or load kind).
    """
    la, ca = _read_run(run_a)
    lb, cb = _read_run(run_b)
    if ca is not None and cb is not None and ca.load.kind != cb.load.kind:
        raise ValueError(f"cannot compare a {ca.load.kind} run with a {cb.load.kind} run")
    if min_jump is None:
        ell = ca.material.ell if ca is not None else (cb.material.ell if cb is not None else 0.0)
        min_jump = 2 * ell

    def one(led: Ledger, cfg):
        J = led.column("J")
        peaks = peak_j_sequence(J)
        d = {
            "steps": len(led),
            "peak_J": float(np.nanmax(J)) if len(J) else math.nan,
            "peak_J_sequence": peaks.tolist(),
            "final_crack_length": float(led[-1].crack_length) if len(led) else 0.0,
            "final_total_energy": float(led[-1].total) if len(led) else 0.0,
        }
        d.update(jump_statistics(led.column("crack_length"), min_jump))
        if cfg is not None and cfg.load.kind == "notch":
            d.update({k: v for k, v in summarize(led, cfg).items() if k.startswith("k_c")})
        return d

    ra, rb = one(la, ca), one(lb, cb)
    n = min(len(ra["peak_J_sequence"]), len(rb["peak_J_sequence"]))
    pa, pb = np.array(ra["peak_J_sequence"][:n]), np.array(rb["peak_J_sequence"][:n])
    rel = (np.abs(pa - pb) / np.maximum(np.abs(pa), 1e-300)).tolist() if n else []
    report = {
        "a": str(run_a),
        "b": str(run_b),
        "A": ra,
        "B": rb,
        "peak_J_rel_diff": abs(ra["peak_J"] - rb["peak_J"]) / max(abs(ra["peak_J"]), 1e-300),
        "peak_sequence_rel_diff": rel,
        "crack_length_diff": rb["final_crack_length"] - ra["final_crack_length"],
    }
    if csv_out is not None:
        write_comparison_csv(la, lb, csv_out)
        report["csv"] = str(csv_out)
    return report


def write_comparison_csv(la: Ledger, lb: Ledger, path) -> Path:
    cols = ["t", "J", "crack_length", "elastic", "surface", "plastic", "total"]
    path = Path(path)
    n = max(len(la), len(lb))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row"] + [f"{c}_A" for c in cols] + [f"{c}_B" for c in cols])
        for i in range(n):
            ra = [repr(float(getattr(la[i], c))) if i < len(la) else "" for c in cols]
            rb = [repr(float(getattr(lb[i], c))) if i < len(lb) else "" for c in cols]
            w.writerow([i] + ra + rb)
    return path
