"""Pointwise elastoplastic update with damage-degraded stiffness and yield strength.

All routines are vectorised over elements. Strains are Mandel vectors:
in-plane ``(n, 3)`` for total strain, 3D ``(n, 4)`` for plastic strain and
stress (see :mod:`ductile_pf.materials`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .materials import (
    IN_PLANE,
    ONE_3D,
    MaterialParams,
    dissipation_degradation,
    elastic_tensor_3d,
    stiffness_degradation,
)

_PS_TOL = 1e-10
_PS_MAXIT = 80


@dataclass
class PlasticState:
    """Per-element plastic history.

    ``eps_p`` is trace free, so its ``zz`` slot always equals
    ``-(xx + yy)``. ``eps_eq`` is the accumulated equivalent plastic strain.
    """

    eps_p: np.ndarray
    eps_eq: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "PlasticState":
        return cls(np.zeros((n, 4)), np.zeros(n))

    def dissipation(self, m: MaterialParams) -> np.ndarray:
        """Undegraded accumulated dissipation density ``sigma0 * eps_eq``."""
        if not m.plastic:
            return np.zeros_like(self.eps_eq)
        return m.sigma0 * self.eps_eq

    def copy(self) -> "PlasticState":
        return PlasticState(self.eps_p.copy(), self.eps_eq.copy())


@dataclass
class StressState:
    sigma: np.ndarray  # degraded 3D Mandel stress (n, 4)
    eps_zz: np.ndarray  # total out-of-plane strain
    tangent: np.ndarray | None = None  # in-plane consistent tangent (n, 3, 3)

    @property
    def hydrostatic(self) -> np.ndarray:
        return self.sigma[:, :3].sum(axis=1) / 3.0

    @property
    def deviator(self) -> np.ndarray:
        return self.sigma - self.hydrostatic[:, None] * ONE_3D

    @property
    def equivalent(self) -> np.ndarray:
        d = self.deviator
        return np.sqrt(1.5 * np.einsum("ij,ij->i", d, d))

    @property
    def in_plane(self) -> np.ndarray:
        return self.sigma[:, IN_PLANE]


def _deviator(v):
    return v - (v[:, :3].sum(axis=1, keepdims=True) / 3.0) * ONE_3D


def _check(eps, alpha):
    if np.any(~np.isfinite(eps)):
        raise ValueError("non-finite strain passed to plastic update")
    if np.any((alpha < 0.0) | (alpha > 1.0)):
        raise ValueError("damage values must lie in [0, 1]")


def _embed(eps_in, eps_zz):
    e = np.empty((len(eps_in), 4))
    e[:, 0] = eps_in[:, 0]
    e[:, 1] = eps_in[:, 1]
    e[:, 2] = eps_zz
    e[:, 3] = eps_in[:, 2]
    return e


def _return_3d(eps3, eps_p_old, a, b, m: MaterialParams, want_tangent: bool):
    """Radial return for a fully prescribed 3D strain.

    Returns stress, plastic increment, equivalent increment and (optionally)
    the consistent tangent.
    """
    mu = m.mu
    e_tr = eps3 - eps_p_old
    tr = e_tr[:, :3].sum(axis=1)
    s_tr = 2.0 * mu * a[:, None] * _deviator(e_tr)
    sig_tr = s_tr + (a * m.bulk * tr)[:, None] * ONE_3D
    q_tr = np.sqrt(1.5 * np.einsum("ij,ij->i", s_tr, s_tr))
    n = len(eps3)
    d_eq = np.zeros(n)
    d_eps_p = np.zeros((n, 4))
    if m.plastic:
        ys = b * m.sigma0
        plastic = q_tr > ys * (1.0 + 1e-12) + 1e-300
        if plastic.any():
            ap, qp = a[plastic], q_tr[plastic]
            d_eq[plastic] = (qp - ys[plastic]) / (3.0 * mu * ap)
            d_eps_p[plastic] = (1.5 * d_eq[plastic] / qp)[:, None] * s_tr[plastic]
    else:
        plastic = np.zeros(n, dtype=bool)
    sigma = sig_tr - 2.0 * mu * a[:, None] * d_eps_p
    tangent = None
    if want_tangent:
        C = elastic_tensor_3d(m)
        tangent = a[:, None, None] * C[None]
        if plastic.any():
            ap, qp = a[plastic], q_tr[plastic]
            beta = b[plastic] * m.sigma0 / qp
            N = s_tr[plastic] / np.linalg.norm(s_tr[plastic], axis=1)[:, None]
            Idev = np.eye(4) - np.outer(ONE_3D, ONE_3D) / 3.0
            tangent[plastic] = (
                (ap * m.bulk)[:, None, None] * np.outer(ONE_3D, ONE_3D)[None]
                + (2.0 * mu * ap * beta)[:, None, None]
                * (Idev[None] - np.einsum("ni,nj->nij", N, N))
            )
    return sigma, d_eps_p, d_eq, tangent


def plastic_update(
    eps: np.ndarray,
    state_old: PlasticState,
    alpha: np.ndarray,
    m: MaterialParams,
    want_tangent: bool = False,
) -> tuple[PlasticState, StressState]:
    """Minimise the incremental elastoplastic energy over trace-free plastic increments.

    Minimises ``1/2 a(alpha) (eps - eps_p):C:(eps - eps_p) + b(alpha) sigma0 |d eps_p|_eq``
    element by element. In plane stress the out-of-plane strain is an extra
    unknown, found by a safeguarded Newton iteration on ``sigma_zz = 0``.
    """
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (len(eps),))
    _check(eps, alpha)
    a = stiffness_degradation(alpha, m.eta)
    b = dissipation_degradation(alpha)
    ep_old = state_old.eps_p

    if m.mode == "plane_strain":
        ezz = np.zeros(len(eps))
        sigma, dep, deq, T = _return_3d(_embed(eps, ezz), ep_old, a, b, m, want_tangent)
    else:
        ezz, sigma, dep, deq, T = _plane_stress_return(eps, ep_old, a, b, m, want_tangent)

    new = PlasticState(ep_old + dep, state_old.eps_eq + deq)
    tangent = None
    if want_tangent:
        tangent = _condense(T, m)
    return new, StressState(sigma, ezz, tangent)


def _condense(T, m: MaterialParams):
    Tin = T[:, IN_PLANE][:, :, IN_PLANE]
    if m.mode == "plane_strain":
        return Tin
    c = T[:, IN_PLANE, 2]
    return Tin - np.einsum("ni,nj->nij", c, c) / T[:, 2, 2][:, None, None]


def _plane_stress_return(eps, ep_old, a, b, m: MaterialParams, want_tangent):
    lam, mu = m.lam, m.mu
    e_in = eps[:, [0, 1]] - ep_old[:, [0, 1]]
    z = ep_old[:, 2] - lam / (lam + 2 * mu) * e_in.sum(axis=1)
    sigma, dep, deq, T = _return_3d(_embed(eps, z), ep_old, a, b, m, True)
    slope_min = a * m.bulk
    scale = np.maximum(np.abs(sigma).max(axis=1), 1e-300)
    # slope of sigma_zz in eps_zz lies in [a K, a (lam + 2 mu)]: bracket the root
    f = sigma[:, 2]
    lo = np.where(f > 0, z - f / slope_min, z)
    hi = np.where(f > 0, z, z - f / slope_min)
    active = np.abs(f) > _PS_TOL * scale
    it = 0
    while active.any():
        it += 1
        if it > _PS_MAXIT:
            raise RuntimeError("plane-stress return mapping did not converge")
        idx = np.nonzero(active)[0]
        slope = T[idx, 2, 2]
        znew = z[idx] - f[idx] / slope
        outside = (znew <= lo[idx]) | (znew >= hi[idx])
        znew[outside] = 0.5 * (lo[idx][outside] + hi[idx][outside])
        s_i, d_i, q_i, T_i = _return_3d(_embed(eps[idx], znew), ep_old[idx], a[idx], b[idx], m, True)
        z[idx] = znew
        sigma[idx], dep[idx], deq[idx], T[idx] = s_i, d_i, q_i, T_i
        f[idx] = s_i[:, 2]
        pos = f[idx] > 0
        hi[idx[pos]] = znew[pos]
        lo[idx[~pos]] = znew[~pos]
        scale[idx] = np.maximum(np.abs(s_i).max(axis=1), 1e-300)
        narrow = (hi[idx] - lo[idx]) <= 1e-15 * np.maximum(1.0, np.abs(znew))
        active[idx] = (np.abs(f[idx]) > _PS_TOL * scale[idx]) & ~narrow
    return z, sigma, dep, deq, (T if want_tangent else None)


# ---------------------------------------------------------------------------
# energies at fixed plastic strain
# ---------------------------------------------------------------------------


def elastic_strain(eps: np.ndarray, eps_p: np.ndarray, m: MaterialParams) -> np.ndarray:
    """3D elastic strain at fixed plastic strain (plane stress: ``sigma_zz = 0``)."""
    e = _embed(eps, np.zeros(len(eps))) - eps_p
    if m.mode == "plane_stress":
        lam, mu = m.lam, m.mu
        e[:, 2] = -lam / (lam + 2 * mu) * (e[:, 0] + e[:, 1])
    return e


def undegraded_energy(eps: np.ndarray, eps_p: np.ndarray, m: MaterialParams) -> np.ndarray:
    """``1/2 (eps - eps_p):C:(eps - eps_p)`` before degradation."""
    e = elastic_strain(np.atleast_2d(eps), np.atleast_2d(eps_p), m)
    tr = e[:, :3].sum(axis=1)
    return 0.5 * m.lam * tr**2 + m.mu * np.einsum("ij,ij->i", e, e)


def degraded_stress(eps: np.ndarray, eps_p: np.ndarray, alpha, m: MaterialParams) -> np.ndarray:
    e = elastic_strain(np.atleast_2d(eps), np.atleast_2d(eps_p), m)
    a = stiffness_degradation(np.asarray(alpha, dtype=float), m.eta)
    return a.reshape(-1, 1) * (e @ elastic_tensor_3d(m))


def energy_density(eps, state: PlasticState, alpha, m: MaterialParams):
    """Degraded elastic density and degraded plastic dissipation density."""
    alpha = np.asarray(alpha, dtype=float)
    psi = stiffness_degradation(alpha, m.eta) * undegraded_energy(eps, state.eps_p, m)
    return psi, dissipation_degradation(alpha) * state.dissipation(m)
