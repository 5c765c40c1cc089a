"""Material parameters, degradation functions and planar elasticity.

Tensors are stored in Mandel notation ``[xx, yy, zz, sqrt(2) xy]`` so that
double contractions become plain dot products and fourth-order tensors are
symmetric 4x4 matrices. In-plane quantities drop the ``zz`` slot:
``[xx, yy, sqrt(2) xy]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, replace
from typing import Literal

import numpy as np

PlanarMode = Literal["plane_strain", "plane_stress"]

#: normalisation constant of the linear local term w(alpha) = alpha
C_W = 2.0 / 3.0
SQRT2 = math.sqrt(2.0)

# Mandel index helpers
ONE_3D = np.array([1.0, 1.0, 1.0, 0.0])
IN_PLANE = np.array([0, 1, 3])


@dataclass(frozen=True)
class MaterialParams:
    """Non-dimensional material constants.

    ``sigma0 = inf`` switches plasticity off (purely elastic-brittle body).
    """

    E: float = 1.0
    nu: float = 0.2
    Gc: float = 1.0
    ell: float = 0.25
    sigma0: float = math.inf
    eta: float = 1e-6
    mode: PlanarMode = "plane_strain"

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"E must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (-1, 0.5), got {self.nu}")
        if not self.Gc > 0:
            raise ValueError(f"Gc must be positive, got {self.Gc}")
        if not self.ell > 0:
            raise ValueError(f"ell must be positive, got {self.ell}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if not 0.0 < self.eta < 1e-2:
            raise ValueError(f"eta must be a small positive number, got {self.eta}")
        if self.mode not in ("plane_strain", "plane_stress"):
            raise ValueError(f"unknown planar mode {self.mode!r}")

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        """3D Lame constant (plane stress reduces it only through condensation)."""
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def bulk(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def plastic(self) -> bool:
        return math.isfinite(self.sigma0)

    @property
    def E_prime(self) -> float:
        if self.mode == "plane_stress":
            return self.E
        return self.E / (1.0 - self.nu**2)

    @property
    def kappa(self) -> float:
        """Kolosov constant."""
        if self.mode == "plane_stress":
            return (3.0 - self.nu) / (1.0 + self.nu)
        return 3.0 - 4.0 * self.nu

    def with_(self, **changes) -> "MaterialParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(self.sigma0):
            d["sigma0"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialParams":
        d = dict(d)
        if "sigma0" in d:
            d["sigma0"] = float(d["sigma0"])
        return cls(**d)


@dataclass(frozen=True)
class DerivedParams:
    E_prime: float
    sigma_c: float
    r_y: float
    Gc_num: float
    K_Ic: float


def nucleation_stress(Gc: float, E_prime: float, ell: float) -> float:
    """Critical stress of the homogeneous AT1 traction test."""
    return math.sqrt(3.0 * Gc * E_prime / (8.0 * ell))


def ell_for_sigma_c(m: MaterialParams, sigma_c: float) -> float:
    """Regularisation length giving the requested nucleation stress."""
    if not sigma_c > 0:
        raise ValueError("sigma_c must be positive")
    return 3.0 * m.Gc * m.E_prime / (8.0 * sigma_c**2)


def numerical_toughness(Gc: float, ell: float, delta: float) -> float:
    """Effective toughness of a crack band resolved on a mesh of size ``delta``."""
    return Gc * (1.0 + delta / (4.0 * C_W * ell))


def derive_params(m: MaterialParams, delta: float) -> DerivedParams:
    """Closed-form derived quantities for material ``m`` on mesh size ``delta``."""
    if not delta > 0:
        raise ValueError(f"mesh size must be positive, got {delta}")
    if delta > 4.0 * C_W * m.ell:
        warnings.warn(
            f"mesh size {delta:g} is coarse relative to ell={m.ell:g}; "
            "the numerical toughness correction exceeds 100%",
            stacklevel=2,
        )
    Ep = m.E_prime
    sc = nucleation_stress(m.Gc, Ep, m.ell)
    return DerivedParams(
        E_prime=Ep,
        sigma_c=sc,
        r_y=sc / m.sigma0,
        Gc_num=numerical_toughness(m.Gc, m.ell, delta),
        K_Ic=math.sqrt(Ep * m.Gc),
    )


def nondimensionalize(
    *,
    E: float,
    Gc: float,
    ell: float,
    sigma0: float,
    E0: float,
    L0: float,
    nu: float,
    mode: PlanarMode = "plane_strain",
    eta: float = 1e-6,
) -> MaterialParams:
    """Scale dimensional inputs by a reference modulus ``E0`` and length ``L0``.

    Stresses and moduli scale with ``E0``, toughness with ``E0 L0`` and
    lengths with ``L0``.
    """
    if E0 <= 0 or L0 <= 0:
        raise ValueError("reference scales must be positive")
    return MaterialParams(
        E=E / E0,
        nu=nu,
        Gc=Gc / (E0 * L0),
        ell=ell / L0,
        sigma0=sigma0 / E0,
        eta=eta,
        mode=mode,
    )


# ---------------------------------------------------------------------------
# degradation
# ---------------------------------------------------------------------------


def stiffness_degradation(alpha, eta: float):
    return eta + (1.0 - alpha) ** 2


def dissipation_degradation(alpha):
    return (1.0 - alpha) ** 2


def local_dissipation(alpha):
    return alpha


# ---------------------------------------------------------------------------
# elasticity
# ---------------------------------------------------------------------------


def elastic_tensor_3d(m: MaterialParams) -> np.ndarray:
    """Undegraded isotropic stiffness as a 4x4 Mandel matrix."""
    C = 2.0 * m.mu * np.eye(4)
    C[:3, :3] += m.lam
    return C


def elastic_tensor(m: MaterialParams) -> np.ndarray:
    """Planar stiffness (3x3 Mandel) mapping in-plane strain to in-plane stress.

    Plane strain keeps the in-plane block of the 3D tensor; plane stress
    condenses out the ``zz`` direction under ``sigma_zz = 0``.
    """
    C = elastic_tensor_3d(m)
    Cin = C[np.ix_(IN_PLANE, IN_PLANE)]
    if m.mode == "plane_strain":
        return Cin
    c = C[IN_PLANE, 2]
    return Cin - np.outer(c, c) / C[2, 2]


def tensor_to_mandel(t: np.ndarray) -> np.ndarray:
    """Symmetric 2x2 (or 3x3) tensor(s) to in-plane (or full) Mandel vectors."""
    t = np.asarray(t, dtype=float)
    if t.shape[-2:] == (2, 2):
        return np.stack([t[..., 0, 0], t[..., 1, 1], SQRT2 * t[..., 0, 1]], axis=-1)
    if t.shape[-2:] == (3, 3):
        return np.stack(
            [t[..., 0, 0], t[..., 1, 1], t[..., 2, 2], SQRT2 * t[..., 0, 1]], axis=-1
        )
    raise ValueError(f"unsupported tensor shape {t.shape}")


def mandel_to_tensor(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] == 3:
        out = np.zeros(v.shape[:-1] + (2, 2))
        out[..., 0, 0] = v[..., 0]
        out[..., 1, 1] = v[..., 1]
        out[..., 0, 1] = out[..., 1, 0] = v[..., 2] / SQRT2
        return out
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 0] = v[..., 0]
    out[..., 1, 1] = v[..., 1]
    out[..., 2, 2] = v[..., 2]
    out[..., 0, 1] = out[..., 1, 0] = v[..., 3] / SQRT2
    return out


def equivalent_stress(s: np.ndarray) -> np.ndarray:
    """von Mises stress of 3D Mandel stress vectors."""
    s = np.asarray(s, dtype=float)
    dev = s - (s[..., :3].sum(axis=-1, keepdims=True) / 3.0) * ONE_3D
    return np.sqrt(1.5 * np.einsum("...i,...i->...", dev, dev))


def equivalent_strain(e: np.ndarray) -> np.ndarray:
    """Equivalent measure sqrt(2/3 e_d:e_d) of 3D Mandel strain vectors."""
    e = np.asarray(e, dtype=float)
    dev = e - (e[..., :3].sum(axis=-1, keepdims=True) / 3.0) * ONE_3D
    return np.sqrt(2.0 / 3.0 * np.einsum("...i,...i->...", dev, dev))
