"""Closed-form boundary displacement programs.

Two families are provided: the leading-order mode-I field at a V-notch tip,
scaled proportionally in time, and the translating mode-I crack-tip field
used for "surfing" propagation tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .materials import MaterialParams

_LAMBDA_TOL = 1e-12


def _lambda_residual(lam, omega):
    beta = math.pi - omega
    return np.sin(2.0 * lam * beta) + lam * np.sin(2.0 * beta)


def solve_lambda(omega: float) -> float:
    """Singularity exponent of a V-notch with half opening angle ``omega``.

    Smallest root in [0.5, 1] of ``sin(2 lam (pi - omega)) + lam sin(2 (pi - omega)) = 0``,
    bracketed and bisected to 1e-12.
    """
    if not 0.0 < omega <= math.pi / 2 + 1e-15:
        raise ValueError(f"notch half-angle must lie in (0, pi/2], got {omega}")
    if omega >= math.pi / 2 - 1e-14:
        return 1.0
    f = lambda lam: _lambda_residual(lam, omega)  # noqa: E731
    # f(0.5) >= 0 and f(1) < 0 on (0, pi/2); scan for the first sign change
    grid = np.linspace(0.5, 1.0, 2001)
    vals = f(grid)
    if abs(vals[0]) < 1e-15:
        return 0.5
    sign_changes = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if sign_changes.size == 0:
        raise RuntimeError(f"no sign change of the exponent equation for omega={omega}")
    lo, hi = grid[sign_changes[0]], grid[sign_changes[0] + 1]
    flo = f(lo)
    while hi - lo > _LAMBDA_TOL:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return float(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return float(0.5 * (lo + hi))


@dataclass(frozen=True)
class NotchLoad:
    """Proportional loading ``u = t * U_hat(r, phi)`` of a V-notch.

    With this normalisation the hoop stress ahead of the tip is
    ``t (2 pi r)**(lam - 1)``, so the load factor equals the generalized
    stress intensity.
    """

    omega: float
    lam: float

    @classmethod
    def for_angle(cls, omega: float) -> "NotchLoad":
        return cls(omega=omega, lam=solve_lambda(omega))


def _angular_functions(lam: float, omega: float, phi):
    beta = math.pi - omega
    g = ((1 + lam) * math.sin((1 + lam) * beta)) / ((1 - lam) * math.sin((1 - lam) * beta))
    pre = (2 * math.pi) ** (lam - 1) / (1 - g)
    a, b = 1 + lam, 1 - lam
    F = pre * (np.cos(a * phi) - g * np.cos(b * phi))
    F1 = pre * (-a * np.sin(a * phi) + g * b * np.sin(b * phi))
    F2 = pre * (-(a**2) * np.cos(a * phi) + g * b**2 * np.cos(b * phi))
    F3 = pre * (a**3 * np.sin(a * phi) - g * b**3 * np.sin(b * phi))
    return F, F1, F2, F3


def _notch_polar(r, phi, lam, omega, m: MaterialParams):
    E, nu = m.E, m.nu
    F, F1, F2, F3 = _angular_functions(lam, omega, phi)
    rl = np.power(r, lam)
    if m.mode == "plane_stress":
        Ur = rl / E * (F2 + (lam + 1) * (1 - nu * lam) * F) / (lam**2 * (lam + 1))
        Up = (
            rl / E
            * (F3 + (2 * (1 + nu) * lam**2 + (lam + 1) * (1 - nu * lam)) * F1)
            / (lam**2 * (1 - lam**2))
        )
    else:
        c = 1 - nu * lam - nu**2 * (lam + 1)
        Ur = rl / E * ((1 - nu**2) * F2 + (lam + 1) * c * F) / (lam**2 * (lam + 1))
        Up = (
            rl / E
            * ((1 - nu**2) * F3 + (2 * (1 + nu) * lam**2 + (lam + 1) * c) * F1)
            / (lam**2 * (1 - lam**2))
        )
    return Ur, Up


def _straight_edge_field(x, y, m: MaterialParams):
    # lam -> 1 limit: uniform stress sigma_yy = 1 parallel to the free edge x = 0
    if m.mode == "plane_stress":
        exx, eyy = -m.nu / m.E, 1.0 / m.E
    else:
        exx, eyy = -m.nu * (1 + m.nu) / m.E, (1 - m.nu**2) / m.E
    return exx * x, eyy * y


def notch_displacement(x, y, t: float, load: NotchLoad, m: MaterialParams) -> np.ndarray:
    """Cartesian boundary displacement (n, 2) at points ``(x, y)`` relative to the tip."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros((x.size, 2))
    if t == 0.0:
        return out
    if abs(1.0 - load.lam) < 1e-6:
        ux, uy = _straight_edge_field(x, y, m)
        out[:, 0], out[:, 1] = t * ux, t * uy
        return out
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    Ur, Up = _notch_polar(r, phi, load.lam, load.omega, m)
    c, s = np.cos(phi), np.sin(phi)
    out[:, 0] = t * (Ur * c - Up * s)
    out[:, 1] = t * (Ur * s + Up * c)
    return out


@dataclass(frozen=True)
class SurfingLoad:
    """Mode-I crack-tip field translated along x at velocity ``V``.

    ``x_start`` is the position of the field's tip at ``t = 0``.
    """

    psi: float = 1.0
    V: float = 1.0
    x_start: float = 0.0

    def tip(self, t: float) -> float:
        return self.x_start + self.V * t


def surfing_displacement(x, y, t: float, load: SurfingLoad, m: MaterialParams) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    K = math.sqrt(m.E_prime * m.Gc)
    xr = x - load.tip(t)
    r = np.hypot(xr, y)
    phi = np.arctan2(y, xr)
    amp = load.psi * K * (1 + m.nu) / m.E * (m.kappa - np.cos(phi)) * np.sqrt(r / (2 * math.pi))
    return np.column_stack([amp * np.cos(phi / 2), amp * np.sin(phi / 2)])
