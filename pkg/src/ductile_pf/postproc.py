"""Observables: energies, boundary J-integral, crack and plastic-zone metrics, k-fits, exports."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .constitutive import PlasticState, degraded_stress, undegraded_energy
from .damage import surface_energy
from .materials import MaterialParams, dissipation_degradation, stiffness_degradation
from .mesh import MeshP1, _boundary_edges, write_vtk

log = logging.getLogger(__name__)

PLASTIC_THRESHOLD = 1e-3  # display threshold for the plastic process zone
DAMAGE_DISPLAY = 1e-3
CRACK_THRESHOLD = 0.9


@dataclass
class LedgerRow:
    step: int
    t: float
    load_tip: float
    elastic: float
    surface: float
    plastic: float
    total: float
    J: float
    crack_length: float
    tip_x: float
    zone_tip_x: float
    h_p: float
    plastic_area: float
    max_alpha: float
    k: float
    am_iterations: int
    converged: int


LEDGER_COLUMNS = [f.name for f in fields(LedgerRow)]


class Ledger(list):
    """Per-step observables; written as CSV with :data:`LEDGER_COLUMNS`."""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self], dtype=float)

    def write_csv(self, path) -> Path:
        path = Path(path)
        try:
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(LEDGER_COLUMNS)
                for r in self:
                    w.writerow([_fmt(getattr(r, c)) for c in LEDGER_COLUMNS])
        except OSError as exc:
            raise OSError(f"could not write ledger {path}: {exc}") from exc
        return path

    @classmethod
    def read_csv(cls, path) -> "Ledger":
        path = Path(path)
        with path.open() as fh:
            rd = csv.DictReader(fh)
            if rd.fieldnames != LEDGER_COLUMNS:
                raise ValueError(f"{path}: ledger columns do not match the expected schema")
            out = cls()
            for row in rd:
                vals = {}
                for f in fields(LedgerRow):
                    raw = row[f.name]
                    vals[f.name] = int(raw) if f.type in (int, "int") else float(raw)
                out.append(LedgerRow(**vals))
        return out


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


def energies(mesh, u, alpha, plastic: PlasticState, m: MaterialParams, damage_problem=None):
    """(elastic, surface, plastic dissipation) of a state, element-mean quadrature for the bulk."""
    am = alpha[mesh.cells].mean(axis=1)
    eps = mesh.strain(u)
    el = float(np.sum(mesh.area * stiffness_degradation(am, m.eta) * undegraded_energy(eps, plastic.eps_p, m)))
    pl = float(np.sum(mesh.area * dissipation_degradation(am) * plastic.dissipation(m)))
    su = surface_energy(alpha, mesh, m, damage_problem)
    return el, su, pl


# ---------------------------------------------------------------------------
# J-integral
# ---------------------------------------------------------------------------


def j_integral(
    mesh: MeshP1,
    u: np.ndarray,
    alpha: np.ndarray,
    plastic: PlasticState,
    m: MaterialParams,
    tag: str = "contour",
    plastic_threshold: float = PLASTIC_THRESHOLD,
    cells: np.ndarray | None = None,
) -> float:
    """``J = int (W n_x - sigma_ij u_i,x n_j) ds`` over a closed contour.

    The contour is the set of boundary edges tagged ``tag`` or, when the
    boolean cell mask ``cells`` is given, the boundary of that sub-domain.
    Element quantities are constant, so edge-midpoint quadrature is exact.
    ``W`` is the degraded elastic energy density.
    """
    if cells is None:
        ids = mesh.edge_tags[tag]
        edges = mesh.boundary_edges[ids]
        owner = mesh.boundary_cells[ids]
    else:
        edges, owner = contour_of(mesh, cells)
    if plastic.eps_eq[owner].max(initial=0.0) > plastic_threshold:
        warnings.warn("J contour crosses the plastic zone; path independence is not guaranteed", stacklevel=2)
    p, q = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
    t = q - p
    n = np.column_stack([t[:, 1], -t[:, 0]])  # outward for counter-clockwise boundary, length-weighted
    am = alpha[mesh.cells[owner]].mean(axis=1)
    eps = mesh.strain(u)[owner]
    W = stiffness_degradation(am, m.eta) * undegraded_energy(eps, plastic.eps_p[owner], m)
    s = degraded_stress(eps, plastic.eps_p[owner], am, m)
    sig = np.empty((len(owner), 2, 2))
    sig[:, 0, 0], sig[:, 1, 1] = s[:, 0], s[:, 1]
    sig[:, 0, 1] = sig[:, 1, 0] = s[:, 3] / math.sqrt(2.0)
    grad = np.einsum("eik,eij->ejk", mesh.grads[owner], u[mesh.cells[owner]])  # grad[e, i, k] = du_i/dx_k
    du_dx = grad[:, :, 0]
    traction_term = np.einsum("eij,ei,ej->e", sig, du_dx, n)
    return float(np.sum(W * n[:, 0] - traction_term))


def contour_of(mesh: MeshP1, cells: np.ndarray):
    """Counter-clockwise boundary edges of a sub-domain and the cells owning them."""
    idx = np.nonzero(np.asarray(cells, dtype=bool))[0]
    if len(idx) == 0:
        raise ValueError("empty sub-domain for the J contour")
    edges, local = _boundary_edges(mesh.cells[idx])
    return edges, idx[local]


# ---------------------------------------------------------------------------
# crack and plastic-zone metrics
# ---------------------------------------------------------------------------


@dataclass
class CrackMetrics:
    tip_x: float
    length: float
    zone_tip_x: float
    max_alpha: float
    opening_x: np.ndarray
    opening: np.ndarray


def crack_metrics(
    alpha: np.ndarray,
    mesh: MeshP1,
    precrack_tip: float,
    u: np.ndarray | None = None,
    threshold: float = CRACK_THRESHOLD,
    display: float = DAMAGE_DISPLAY,
    band: float | None = None,
) -> CrackMetrics:
    """Crack tip (furthest node with ``alpha >= threshold``), advance and opening profile.

    The crack advance is measured from ``precrack_tip``. When no node
    reaches the threshold the tip is reported at the pre-crack tip.
    """
    x = mesh.nodes[:, 0]
    broken = alpha >= threshold
    tip = float(x[broken].max()) if broken.any() else precrack_tip
    tip = max(tip, precrack_tip) if broken.any() else precrack_tip
    zone = alpha >= display
    zone_tip = float(x[zone].max()) if zone.any() else precrack_tip
    ox = np.array([])
    op = np.array([])
    if u is not None and band is not None:
        y = mesh.nodes[:, 1]
        cols = np.unique(np.round(x, 12))
        top = np.isclose(y, y[y >= band - 1e-12].min()) if np.any(y >= band - 1e-12) else None
        bot = np.isclose(y, y[y <= -band + 1e-12].max()) if np.any(y <= -band + 1e-12) else None
        if top is not None and bot is not None:
            ut = dict(zip(np.round(x[top], 12), u[top, 1]))
            ubm = dict(zip(np.round(x[bot], 12), u[bot, 1]))
            ox = np.array([c for c in cols if c in ut and c in ubm])
            op = np.array([ut[c] - ubm[c] for c in ox])
    return CrackMetrics(tip, max(0.0, tip - precrack_tip), zone_tip, float(alpha.max(initial=0.0)), ox, op)


def plastic_zone_metrics(eps_eq: np.ndarray, mesh: MeshP1, threshold: float = PLASTIC_THRESHOLD):
    """Area where ``eps_eq >= threshold`` and its transverse thickness ``h_p``."""
    hot = eps_eq >= threshold
    if not hot.any():
        return 0.0, 0.0
    yc = mesh.centroids[hot, 1]
    area = float(mesh.area[hot].sum())
    return area, float(yc.max() - yc.min())


# ---------------------------------------------------------------------------
# generalized stress intensity
# ---------------------------------------------------------------------------


@dataclass
class KFit:
    k: float
    residual: float
    n_samples: int


def hoop_stress_ahead(mesh: MeshP1, u, alpha, plastic: PlasticState, m: MaterialParams, band: float | None = None):
    """(r, sigma_yy) at element centroids straddling the ``phi = 0`` ray ahead of the tip."""
    c = mesh.centroids
    r = np.hypot(c[:, 0], c[:, 1])
    if band is None:
        band = np.sqrt(2 * mesh.area)
    else:
        band = np.full(mesh.n_cells, band)
    sel = (c[:, 0] > 0) & (np.abs(c[:, 1]) <= band)
    am = alpha[mesh.cells[sel]].mean(axis=1)
    s = degraded_stress(mesh.strain(u)[sel], plastic.eps_p[sel], am, m)
    order = np.argsort(r[sel])
    return r[sel][order], s[order, 1]


def k_factor(r: np.ndarray, sigma: np.ndarray, lam: float, window: tuple[float, float]) -> KFit:
    """Least-squares fit of ``sigma_phiphi (2 pi r)**(1 - lam)`` over ``window``."""
    r = np.asarray(r, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sel = (r >= window[0]) & (r <= window[1])
    if sel.sum() == 0:
        raise ValueError(f"no stress samples in the fit window {window}")
    vals = sigma[sel] * (2 * math.pi * r[sel]) ** (1.0 - lam)
    k = float(vals.mean())
    res = float(np.sqrt(np.mean((vals - k) ** 2)))
    return KFit(k, res, int(sel.sum()))


def critical_step(surface: np.ndarray, jump: float, level: float) -> int | None:
    """Index of the first step whose surface energy jumps by ``jump`` or exceeds ``level``."""
    surface = np.asarray(surface)
    for i in range(1, len(surface)):
        if surface[i] - surface[i - 1] >= jump or surface[i] >= level:
            return i
    return None


@dataclass
class CriticalK:
    step: int | None
    k_applied: float
    k_fit: float


def critical_k(ledger: "Ledger", jump: float, level: float) -> CriticalK:
    """Stress intensity at the step preceding nucleation.

    Nucleation is the first step whose surface energy jumps by ``jump`` or
    reaches ``level``. ``k_applied`` is the intensity of the imposed field
    (the load factor); ``k_fit`` the value fitted to the computed hoop stress.
    """
    i = critical_step(ledger.column("surface"), jump, level)
    if i is None:
        return CriticalK(None, math.nan, math.nan)
    prev = ledger[i - 1]
    return CriticalK(i, prev.load_tip, prev.k)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------


def export_fields(path, mesh: MeshP1, u, alpha, plastic: PlasticState, m: MaterialParams, stress=None):
    """Write a VTK snapshot and a companion ``.npz`` with the raw state."""
    path = Path(path)
    am = alpha[mesh.cells].mean(axis=1)
    sig = degraded_stress(mesh.strain(u), plastic.eps_p, am, m) if stress is None else stress
    sh = sig[:, :3].sum(axis=1) / 3.0
    dev = sig.copy()
    dev[:, :3] -= sh[:, None]
    seq = np.sqrt(1.5 * np.einsum("ij,ij->i", dev, dev))
    write_vtk(
        path.with_suffix(".vtk"),
        mesh,
        point_data={"alpha": alpha, "u": u},
        cell_data={"eps_p_eq": plastic.eps_eq, "sigma_h": sh, "sigma_eq": seq},
    )
    try:
        np.savez(path.with_suffix(".npz"), u=u, alpha=alpha, eps_p=plastic.eps_p, eps_eq=plastic.eps_eq)
    except OSError as exc:
        raise OSError(f"could not write snapshot {path}: {exc}") from exc
    return path.with_suffix(".vtk")


def load_snapshot(path) -> dict:
    with np.load(Path(path).with_suffix(".npz")) as data:
        return {k: data[k] for k in data.files}
