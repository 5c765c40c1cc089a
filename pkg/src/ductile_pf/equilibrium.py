"""Displacement sub-problem: assembly, Dirichlet elimination and linear solves."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import PlasticState, degraded_stress, plastic_update, undegraded_energy
from .materials import IN_PLANE, MaterialParams, dissipation_degradation, elastic_tensor, stiffness_degradation
from .mesh import MeshP1

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A sub-solver failed to converge."""


class Assembler:
    """Sparse assembly with a precomputed CSR pattern.

    ``dofs`` holds the global indices of every element's local unknowns;
    element matrices are scattered with one ``bincount``.
    """

    def __init__(self, dofs: np.ndarray, n: int):
        self.dofs = np.asarray(dofs)
        self.n = n
        k = self.dofs.shape[1]
        rows = np.repeat(self.dofs, k, axis=1).ravel()
        cols = np.tile(self.dofs, (1, k)).ravel()
        keys = rows * n + cols
        uniq, self._map = np.unique(keys, return_inverse=True)
        self._map = self._map.ravel()
        self._nnz = len(uniq)
        self._indices = (uniq % n).astype(np.int32)
        counts = np.bincount(uniq // n, minlength=n)
        self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    def matrix(self, element_matrices: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self._map, element_matrices.ravel(), self._nnz)
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(self.n, self.n))

    def vector(self, element_vectors: np.ndarray) -> np.ndarray:
        return np.bincount(self.dofs.ravel(), element_vectors.ravel(), self.n)


@dataclass
class DirichletBC:
    """Prescribed values on a set of global displacement dofs (``2 * node + comp``)."""

    dofs: np.ndarray
    values: np.ndarray

    @classmethod
    def from_nodes(cls, nodes, values, components=(0, 1)) -> "DirichletBC":
        nodes = np.asarray(nodes, dtype=np.int64)
        values = np.asarray(values, dtype=float).reshape(len(nodes), -1)
        dofs, vals = [], []
        for c in components:
            dofs.append(2 * nodes + c)
            vals.append(values[:, c] if values.shape[1] > 1 else values[:, 0])
        return cls(np.concatenate(dofs), np.concatenate(vals))

    def __add__(self, other: "DirichletBC") -> "DirichletBC":
        return DirichletBC(np.concatenate([self.dofs, other.dofs]), np.concatenate([self.values, other.values]))


@dataclass
class LinearSolverOptions:
    method: str = "cg"  # "cg" (Jacobi-preconditioned) or "direct"
    rtol: float = 1e-8
    maxiter: int = 20000


def solve_spd(A: sp.spmatrix, b: np.ndarray, opts: LinearSolverOptions, x0=None) -> np.ndarray:
    """Solve an SPD system, raising :class:`SolverError` with the residual on failure."""
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    if opts.method == "direct":
        x = spla.spsolve(A.tocsc(), b)
    elif opts.method == "cg":
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("stiffness has a nonpositive diagonal entry (insufficient constraints?)")
        M = spla.LinearOperator(A.shape, matvec=lambda v: v / d, dtype=float)
        x, info = spla.cg(A, b, x0=x0, rtol=opts.rtol, atol=0.0, maxiter=opts.maxiter, M=M)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / bnorm
            raise SolverError(f"CG did not converge in {opts.maxiter} iterations (relative residual {res:.3e})")
    else:
        raise ValueError(f"unknown linear solver {opts.method!r}")
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values (singular system?)")
    return x


class DisplacementProblem:
    """Degraded elasticity on a fixed mesh with element-mean damage."""

    def __init__(self, mesh: MeshP1, m: MaterialParams, linear: LinearSolverOptions | None = None):
        self.mesh = mesh
        self.m = m
        self.linear = linear or LinearSolverOptions()
        self.asm = Assembler(mesh.dofs, 2 * mesh.n_nodes)
        D = elastic_tensor(m)
        B = mesh.B
        # geometric stiffness per element, scaled by a(alpha_e) at assembly time
        self.Ke0 = mesh.area[:, None, None] * np.einsum("eki,kl,elj->eij", B, D, B)
        self.ndof = 2 * mesh.n_nodes

    def stiffness(self, alpha_e: np.ndarray) -> sp.csr_matrix:
        a = stiffness_degradation(alpha_e, self.m.eta)
        return self.asm.matrix(a[:, None, None] * self.Ke0)

    def tangent(self, T: np.ndarray) -> sp.csr_matrix:
        B = self.mesh.B
        Ke = self.mesh.area[:, None, None] * np.einsum("eki,ekl,elj->eij", B, T, B)
        return self.asm.matrix(Ke)

    def internal_force(self, sigma_in: np.ndarray) -> np.ndarray:
        fe = self.mesh.area[:, None] * np.einsum("eki,ek->ei", self.mesh.B, sigma_in)
        return self.asm.vector(fe)

    def _partition(self, bc: DirichletBC):
        fixed = np.zeros(self.ndof, dtype=bool)
        fixed[bc.dofs] = True
        ub = np.zeros(self.ndof)
        ub[bc.dofs] = bc.values
        return fixed, ub

    def solve_linear(self, K: sp.csr_matrix, rhs: np.ndarray, bc: DirichletBC, x0=None) -> np.ndarray:
        """Solve ``K u = rhs`` with ``u`` prescribed on ``bc`` by symmetric elimination."""
        fixed, u = self._partition(bc)
        if (~fixed).sum() == self.ndof or fixed.sum() < 3:
            raise SolverError("displacement problem needs at least 3 constrained dofs")
        free = ~fixed
        Kff = K[free][:, free]
        b = rhs[free] - K[free][:, fixed] @ u[fixed]
        u[free] = solve_spd(Kff, b, self.linear, None if x0 is None else x0[free])
        return u


def solve_displacement(
    mesh: MeshP1,
    alpha: np.ndarray,
    eps_p: np.ndarray,
    m: MaterialParams,
    bc: DirichletBC,
    problem: DisplacementProblem | None = None,
    u0: np.ndarray | None = None,
) -> np.ndarray:
    """Minimise the degraded elastic energy over admissible displacements at fixed plastic strain.

    ``alpha`` is nodal; the element stiffness uses the element mean.
    Returns nodal displacement of shape (n_nodes, 2).
    """
    problem = problem or DisplacementProblem(mesh, m)
    alpha_e = alpha[mesh.cells].mean(axis=1)
    K = problem.stiffness(alpha_e)
    # stress produced by the plastic strain alone (zero total strain)
    sig_p = degraded_stress(np.zeros((mesh.n_cells, 3)), eps_p, alpha_e, m)[:, IN_PLANE]
    rhs = -problem.internal_force(sig_p)
    x0 = None if u0 is None else np.asarray(u0).reshape(-1)
    return problem.solve_linear(K, rhs, bc, x0).reshape(-1, 2)


def incremental_energy(mesh, u, alpha_e, state_old: PlasticState, m: MaterialParams):
    """Bulk part of the incremental functional after minimising the plastic increment.

    Returns (elastic, dissipation, new plastic state, stress state).
    """
    eps = mesh.strain(u)
    new, st = plastic_update(eps, state_old, alpha_e, m)
    a = stiffness_degradation(alpha_e, m.eta)
    el = float(np.sum(mesh.area * a * undegraded_energy(eps, new.eps_p, m)))
    dis = float(np.sum(mesh.area * dissipation_degradation(alpha_e) * new.dissipation(m)))
    return el, dis, new, st


@dataclass
class ElastoplasticResult:
    u: np.ndarray
    state: PlasticState
    iterations: int
    residual: float


def solve_elastoplastic(
    problem: DisplacementProblem,
    alpha_e: np.ndarray,
    state_old: PlasticState,
    bc: DirichletBC,
    u0: np.ndarray,
    tol: float = 1e-8,
    maxit: int = 60,
    method: str = "newton",
    plastic_tol: float = 1e-7,
) -> ElastoplasticResult:
    """Joint minimisation over displacement and plastic increment at fixed damage.

    ``method="newton"`` uses the consistent tangent with a backtracking line
    search on the (convex) reduced energy. ``method="fixed_point"`` alternates
    linear displacement solves at frozen plastic strain with the pointwise
    plastic update until the plastic strain stops changing.
    """
    mesh, m = problem.mesh, problem.m
    fixed, ub = problem._partition(bc)
    free = ~fixed
    u = np.asarray(u0, dtype=float).reshape(-1).copy()
    u[fixed] = ub[fixed]

    if not m.plastic:
        K = problem.stiffness(alpha_e)
        u = problem.solve_linear(K, np.zeros(problem.ndof), bc, u)
        return ElastoplasticResult(u.reshape(-1, 2), state_old.copy(), 1, 0.0)

    if method == "fixed_point":
        return _fixed_point(problem, alpha_e, state_old, bc, u, plastic_tol, maxit)

    def energy(v):
        el, dis, new, st = incremental_energy(mesh, v.reshape(-1, 2), alpha_e, state_old, m)
        return el + dis, new, st

    a = stiffness_degradation(alpha_e, m.eta)
    D_el = a[:, None, None] * elastic_tensor(m)[None]
    eps = mesh.strain(u.reshape(-1, 2))
    new, st = plastic_update(eps, state_old, alpha_e, m, want_tangent=True)
    f_val = None
    res = np.inf
    for it in range(1, maxit + 1):
        r = problem.internal_force(st.in_plane)
        ref = max(np.linalg.norm(r), 1e-300)
        res = np.linalg.norm(r[free]) / ref
        if res <= tol:
            return ElastoplasticResult(u.reshape(-1, 2), new, it - 1, res)
        # blend in 0.1% of the elastic tangent: keeps fully damaged, fully
        # plastic elements from making the tangent singular
        T = st.tangent + 1e-3 * (D_el - st.tangent)
        Kt = problem.tangent(T)
        du = np.zeros_like(u)
        du[free] = solve_spd(Kt[free][:, free], -r[free], problem.linear)
        if f_val is None:
            f_val, _, _ = energy(u)
        slope = float(r[free] @ du[free])
        s = 1.0
        for _ in range(30):
            trial = u + s * du
            f_new, new_t, st_t = energy(trial)
            if f_new <= f_val + 1e-4 * s * slope or abs(f_new - f_val) <= 1e-14 * abs(f_val):
                break
            s *= 0.5
        u = trial
        f_val = f_new
        new, st = plastic_update(mesh.strain(u.reshape(-1, 2)), state_old, alpha_e, m, want_tangent=True)
    raise SolverError(f"elastoplastic Newton did not converge (relative residual {res:.3e})")


def _fixed_point(problem, alpha_e, state_old, bc, u, plastic_tol, maxit):
    mesh, m = problem.mesh, problem.m
    K = problem.stiffness(alpha_e)
    state = state_old.copy()
    for it in range(1, maxit + 1):
        sig_p = degraded_stress(np.zeros((mesh.n_cells, 3)), state.eps_p, alpha_e, m)[:, IN_PLANE]
        u = problem.solve_linear(K, -problem.internal_force(sig_p), bc, u)
        new, _ = plastic_update(mesh.strain(u.reshape(-1, 2)), state_old, alpha_e, m)
        change = float(np.abs(new.eps_p - state.eps_p).max())
        state = new
        if change < plastic_tol:
            return ElastoplasticResult(u.reshape(-1, 2), state, it, change)
    raise SolverError(f"elastoplastic fixed point did not converge (max plastic change {change:.3e})")
