"""Damage sub-problem: a bound-constrained quadratic program in the nodal damage.

With the element-mean quadrature used for the bulk terms, the damage part of
the incremental functional reads

    sum_T |T| d_T (1 - mean_T(alpha))**2  +  Gc/(4 c_w) int (alpha/ell + ell |grad alpha|^2)

where ``d_T`` is the undegraded elastic energy plus the accumulated
dissipation of element ``T``. It is minimised over ``lb <= alpha <= 1``.
Works on triangle meshes and on :class:`~ductile_pf.mesh.IntervalMesh`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .equilibrium import Assembler, SolverError
from .materials import C_W, MaterialParams

log = logging.getLogger(__name__)


@dataclass
class QPResult:
    x: np.ndarray
    iterations: int
    kkt: float


def kkt_residual(g: np.ndarray, x: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Componentwise violation of the bound-constrained optimality conditions."""
    at_lb = x <= lb
    at_ub = x >= ub
    r = np.abs(g)
    r = np.where(at_lb & ~at_ub, np.maximum(-g, 0.0), r)
    r = np.where(at_ub & ~at_lb, np.maximum(g, 0.0), r)
    return np.where(at_lb & at_ub, 0.0, r)


def solve_box_qp(
    H: sp.spmatrix,
    c: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-8,
    maxit: int = 200,
    inner: str = "cg",
) -> QPResult:
    """Minimise ``1/2 x^T H x + c^T x`` subject to ``lb <= x <= ub``.

    Reduced-space active-set method: bounds whose gradient points outward are
    frozen, a Newton step is taken on the remaining variables and a projected
    backtracking search keeps the iterate feasible. ``tol`` is relative to
    ``max(|c|)``.
    """
    H = sp.csr_matrix(H)
    n = len(c)
    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, dtype=float), lb, ub)
    scale = max(float(np.abs(c).max()), 1e-300)
    diag = H.diagonal()
    for it in range(maxit + 1):
        g = H @ x + c
        kkt = float(kkt_residual(g, x, lb, ub).max(initial=0.0))
        if kkt <= tol * scale:
            return QPResult(x, it, kkt / scale)
        if it == maxit:
            break
        binding = ((x <= lb) & (g > 0)) | ((x >= ub) & (g < 0))
        free = ~binding
        d = np.zeros(n)
        if free.any():
            d[free] = _newton_direction(H[free][:, free], -g[free], diag[free], inner)
        if not (g @ d < 0):
            d = -g * np.where(free, 1.0, 0.0)
        s = 1.0
        accepted = False
        for _ in range(40):
            xt = np.clip(x + s * d, lb, ub)
            if _decrease(H, g, xt - x) <= 1e-4 * (g @ (xt - x)):
                accepted = True
                break
            s *= 0.5
        if not accepted:
            # projected gradient step with a safe step length
            L = float(spla.norm(H, 1)) or 1.0
            xt = np.clip(x - g / L, lb, ub)
        x = xt
    raise SolverError(f"damage active-set solver did not converge (KKT residual {kkt / scale:.3e})")


def _decrease(H, g, step):
    # exact change of the quadratic, free of the cancellation in f(x + s) - f(x)
    return g @ step + 0.5 * step @ (H @ step)


def _newton_direction(Hff, rhs, dff, inner: str):
    if inner == "direct":
        try:
            return spla.spsolve(Hff.tocsc(), rhs)
        except RuntimeError:  # singular reduced Hessian
            inner = "cg"
    M = spla.LinearOperator(Hff.shape, matvec=lambda v: v / np.maximum(dff, 1e-300), dtype=float)
    d, _ = spla.cg(Hff, rhs, rtol=1e-12, atol=0.0, maxiter=max(200, 4 * len(rhs)), M=M)
    return d


class DamageProblem:
    """Assembled pieces of the damage functional on a fixed mesh."""

    def __init__(self, mesh, m: MaterialParams):
        self.mesh = mesh
        self.m = m
        k = mesh.cells.shape[1]
        self.k = k
        self.asm = Assembler(mesh.cells, mesh.n_nodes)
        G = mesh.grads
        Ke = mesh.measure[:, None, None] * np.einsum("eik,ejk->eij", G, G)
        self.laplacian = self.asm.matrix(Ke)
        self.lumped = self.asm.vector(np.repeat(mesh.measure[:, None] / k, k, axis=1))
        self._ones = np.ones((k, k)) / k**2

    def system(self, drive: np.ndarray):
        """Hessian and linear term for element driving energies ``drive`` (>= 0)."""
        m, mesh, k = self.m, self.mesh, self.k
        w = 2.0 * mesh.measure * drive
        H = (m.Gc * m.ell / (2.0 * C_W)) * self.laplacian + self.asm.matrix(w[:, None, None] * self._ones[None])
        c = (m.Gc / (4.0 * C_W * m.ell)) * self.lumped - self.asm.vector(np.repeat((w / k)[:, None], k, axis=1))
        return H, c

    def energy(self, alpha: np.ndarray, drive: np.ndarray) -> float:
        """Damage-dependent part of the functional (including the bulk terms)."""
        am = alpha[self.mesh.cells].mean(axis=1)
        bulk = float(np.sum(self.mesh.measure * drive * (1.0 - am) ** 2))
        return bulk + surface_energy(alpha, self.mesh, self.m, self)

    def solve(self, drive, lower, upper=None, x0=None, tol=1e-8, maxit=200, inner="cg") -> QPResult:
        H, c = self.system(drive)
        upper = np.ones(self.mesh.n_nodes) if upper is None else upper
        lower = np.minimum(lower, upper)
        return solve_box_qp(H, c, lower, upper, x0=lower if x0 is None else x0, tol=tol, maxit=maxit, inner=inner)


def surface_energy(alpha: np.ndarray, mesh, m: MaterialParams, problem: DamageProblem | None = None) -> float:
    """``Gc/(4 c_w) int (alpha/ell + ell |grad alpha|^2)``, integrated exactly on P1."""
    if problem is not None:
        lin = problem.lumped @ alpha
        grad = alpha @ (problem.laplacian @ alpha)
    else:
        lin = float(np.sum(mesh.measure * alpha[mesh.cells].mean(axis=1)))
        g = np.einsum("eik,ei->ek", mesh.grads, alpha[mesh.cells])
        grad = float(np.sum(mesh.measure * np.einsum("ek,ek->e", g, g)))
    return float(m.Gc / (4.0 * C_W) * (lin / m.ell + m.ell * grad))


def solve_damage(
    mesh,
    drive: np.ndarray,
    alpha_prev: np.ndarray,
    m: MaterialParams,
    problem: DamageProblem | None = None,
    x0: np.ndarray | None = None,
    tol: float = 1e-8,
    upper: np.ndarray | None = None,
) -> np.ndarray:
    """Damage minimiser under irreversibility ``alpha >= alpha_prev`` and ``alpha <= 1``.

    ``drive`` is the per-element undegraded elastic energy density plus
    accumulated dissipation density; see :func:`damage_drive`.
    """
    if np.any((alpha_prev < 0) | (alpha_prev > 1)):
        raise ValueError("previous damage must lie in [0, 1]")
    problem = problem or DamageProblem(mesh, m)
    res = problem.solve(drive, alpha_prev, upper=upper, x0=x0, tol=tol)
    return res.x


def damage_drive(psi0: np.ndarray, dissipation: np.ndarray) -> np.ndarray:
    return psi0 + dissipation


def optimal_profile(dist, ell: float):
    """AT1 optimal profile ``(1 - |d|/(2 ell))**2`` on ``|d| <= 2 ell``."""
    d = np.abs(np.asarray(dist, dtype=float))
    return np.where(d <= 2 * ell, (1.0 - d / (2 * ell)) ** 2, 0.0)


def seed_precrack(nodes: np.ndarray, tip_x: float, ell: float, y0: float = 0.0, half_width: float | None = None):
    """Initial damage for a pre-crack along ``y = y0, x <= tip_x``.

    Full damage within ``half_width`` (default ``ell/2``) of the segment,
    decaying by the optimal profile beyond.
    """
    if tip_x <= nodes[:, 0].min():
        return np.zeros(len(nodes))
    half_width = ell / 2 if half_width is None else half_width
    dx = np.maximum(nodes[:, 0] - tip_x, 0.0)
    dist = np.hypot(dx, nodes[:, 1] - y0)
    return optimal_profile(np.maximum(dist - half_width, 0.0), ell)
