"""Run configuration: typed sections and YAML (de)serialization.

A config has the sections ``material``, ``mesh``, ``load``, ``solver``,
``output`` and ``postproc``. An optional ``units`` section (``E0``, ``L0``)
marks the material and lengths as dimensional; they are scaled once at load
time and the stored config is nondimensional.

Example::

    name: surfing-pstrain
    material: {E: 1.0, nu: 0.2, Gc: 1.0, ell: 0.25, sigma0: 0.5, mode: plane_strain}
    mesh: {kind: rectangle, L: 7.5, H: 2.5, delta: 0.1, precrack: 1.0}
    load: {kind: surfing, psi: 1.0, t_end: 5.0, n_steps: 100}
    solver: {scheme: aup}
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .materials import MaterialParams


@dataclass
class MeshConfig:
    kind: str = "rectangle"  # "rectangle" | "notch"
    L: float = 7.5
    H: float = 2.5
    delta: float = 0.1
    precrack: float = 1.0
    omega_deg: float = 1.0
    radius: float | None = None  # notch: default 50 ell
    delta_tip: float | None = None  # notch: default ell / 3
    delta_far: float | None = None  # notch: default 4 ell
    fine_radius: float | None = None
    growth: float = 0.25


@dataclass
class LoadConfig:
    kind: str = "surfing"  # "surfing" | "notch" | "traction"
    psi: float = 1.0
    V: float = 1.0
    x_start: float | None = None  # surfing: default the pre-crack tip
    t_start: float = 0.0
    t_end: float = 1.0
    n_steps: int = 50
    stop_surface: float | None = None  # end the program once the surface energy reaches this value


@dataclass
class SolverSection:
    scheme: str = "aup"  # "aup" | "upa"
    tol_am: float = 1e-4
    max_am: int = 1000
    inner: str = "newton"  # "newton" | "fixed_point"
    inner_tol: float = 1e-8
    plastic_tol: float = 1e-7
    max_inner: int = 60
    damage_tol: float = 1e-8
    linear_method: str = "cg"
    linear_rtol: float = 1e-10
    max_halvings: int = 4
    track_energy: bool = True


@dataclass
class OutputConfig:
    snapshot_every: int = 0
    deterministic: bool = True


@dataclass
class PostprocConfig:
    k_window: tuple[float, float] = (4.0, 20.0)  # in units of the tip mesh size
    crack_threshold: float = 0.9
    nucleation_level: float = 0.1
    nucleation_jump: float = 2.0  # in units of Gc_num * ell


@dataclass
class SimulationConfig:
    name: str = "run"
    material: MaterialParams = field(default_factory=MaterialParams)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    load: LoadConfig = field(default_factory=LoadConfig)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputConfig = field(default_factory=OutputConfig)
    postproc: PostprocConfig = field(default_factory=PostprocConfig)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "material": self.material.to_dict(),
            "mesh": asdict(self.mesh),
            "load": asdict(self.load),
            "solver": asdict(self.solver),
            "output": asdict(self.output),
            "postproc": asdict(self.postproc),
        }
        d["postproc"]["k_window"] = list(self.postproc.k_window)
        if self.metadata:
            d["metadata"] = self.metadata
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        d = dict(d)
        unknown = set(d) - {"name", "material", "mesh", "load", "solver", "output", "postproc", "metadata", "units"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        units = d.pop("units", None)
        mat = dict(d.get("material", {}))
        mesh = dict(d.get("mesh", {}))
        load = dict(d.get("load", {}))
        if units:
            mat, mesh, load = _scale(mat, mesh, load, float(units["E0"]), float(units["L0"]))
        pp = dict(d.get("postproc", {}))
        if "k_window" in pp:
            pp["k_window"] = tuple(float(v) for v in pp["k_window"])
        return cls(
            name=str(d.get("name", "run")),
            material=MaterialParams.from_dict(mat),
            mesh=_build(MeshConfig, mesh, "mesh"),
            load=_build(LoadConfig, load, "load"),
            solver=_build(SolverSection, d.get("solver", {}), "solver"),
            output=_build(OutputConfig, d.get("output", {}), "output"),
            postproc=_build(PostprocConfig, pp, "postproc"),
            metadata=dict(d.get("metadata", {}) or {}),
        )

    def replace(self, **sections) -> "SimulationConfig":
        return dataclasses.replace(self, **sections)


def _build(cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    bad = set(values) - names
    if bad:
        raise ValueError(f"unknown keys in [{section}]: {sorted(bad)}")
    return cls(**values)


_LENGTHS_MESH = ("L", "H", "delta", "precrack", "radius", "delta_tip", "delta_far", "fine_radius")


def _scale(mat, mesh, load, E0, L0):
    """Convert dimensional inputs with reference modulus ``E0`` and length ``L0``."""
    if E0 <= 0 or L0 <= 0:
        raise ValueError("reference scales must be positive")
    mat = dict(mat)
    for k in ("E", "sigma0"):
        if k in mat and mat[k] not in ("inf", None):
            mat[k] = float(mat[k]) / E0
    if "Gc" in mat:
        mat["Gc"] = float(mat["Gc"]) / (E0 * L0)
    if "ell" in mat:
        mat["ell"] = float(mat["ell"]) / L0
    mesh = {k: (v / L0 if k in _LENGTHS_MESH and v is not None else v) for k, v in mesh.items()}
    load = {k: (v / L0 if k == "x_start" and v is not None else v) for k, v in load.items()}
    return mat, mesh, load


def validate(c: SimulationConfig) -> None:
    if c.mesh.kind not in ("rectangle", "notch"):
        raise ValueError(f"unknown mesh kind {c.mesh.kind!r}")
    if c.load.kind not in ("surfing", "notch", "traction"):
        raise ValueError(f"unknown load kind {c.load.kind!r}")
    if (c.load.kind == "notch") != (c.mesh.kind == "notch"):
        raise ValueError("notch loading requires a notch mesh and vice versa")
    if c.solver.scheme not in ("aup", "upa"):
        raise ValueError(f"unknown scheme {c.solver.scheme!r}")
    if c.solver.inner not in ("newton", "fixed_point"):
        raise ValueError(f"unknown inner solver {c.solver.inner!r}")
    if c.solver.tol_am <= 0:
        raise ValueError("tol_am must be positive")
    if c.load.n_steps < 1 or not c.load.t_end > c.load.t_start:
        raise ValueError("load program needs n_steps >= 1 and t_end > t_start")
    if c.load.stop_surface is not None and not c.load.stop_surface > 0:
        raise ValueError("stop_surface must be positive")
    if c.output.snapshot_every < 0:
        raise ValueError("snapshot_every must be >= 0")
    if not 0 < c.mesh.omega_deg <= 90:
        raise ValueError("notch half-angle must lie in (0, 90] degrees")
    for v in (c.mesh.L, c.mesh.H, c.mesh.delta, c.load.psi, c.load.V):
        if not math.isfinite(v):
            raise ValueError("non-finite value in config")


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return SimulationConfig.from_dict(data)


def dump_config(c: SimulationConfig) -> str:
    return yaml.safe_dump(c.to_dict(), sort_keys=False)


def parse_config(text: str) -> SimulationConfig:
    data: Any = yaml.safe_load(text) or {}
    return SimulationConfig.from_dict(data)


def save_config(c: SimulationConfig, path) -> Path:
    path = Path(path)
    path.write_text(dump_config(c))
    return path
