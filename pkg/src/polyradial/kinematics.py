"""Geometry of radial M-covering maps u(x) = r(R) e_R(M theta).

Point quantities that divide by R are only defined on nodes with R > 0;
values at the origin are obtained by extrapolation from the smallest nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .penalty import PenaltySpec, f_of_d, rho, rho_prime

__all__ = [
    "ProfileError",
    "RadialProfile",
    "EnergyBreakdown",
    "graded_mesh",
    "det_of",
    "det_at_origin",
    "extrapolate_to_origin",
    "z_of",
    "z_values",
    "radial_energy",
    "gradient_map_at",
    "cofactor",
    "cofactor_at",
    "null_lagrangian_check",
]


class ProfileError(ValueError):
    pass


@dataclass
class RadialProfile:
    """Nodal values of r and r' on a strictly increasing mesh ending at R = 1."""

    M: int
    mesh: np.ndarray
    r: np.ndarray
    rdot: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mesh = np.asarray(self.mesh, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.rdot = np.asarray(self.rdot, dtype=float)
        if int(self.M) != self.M or self.M < 1:
            raise ProfileError("M must be a positive integer")
        self.M = int(self.M)
        if self.mesh.ndim != 1 or self.mesh.size < 2:
            raise ProfileError("mesh must be a 1-d array with at least two nodes")
        if not (self.r.shape == self.mesh.shape == self.rdot.shape):
            raise ProfileError("mesh, r and rdot must have the same length")
        if np.any(np.diff(self.mesh) <= 0):
            raise ProfileError("mesh must be strictly increasing")
        if self.mesh[0] < 0:
            raise ProfileError("mesh must start at R >= 0")

    @classmethod
    def from_function(cls, M, mesh, r_fn, rdot_fn, **meta):
        mesh = np.asarray(mesh, dtype=float)
        return cls(M, mesh, r_fn(mesh), rdot_fn(mesh), dict(meta))

    def __len__(self):
        return self.mesh.size

    @property
    def positive(self) -> np.ndarray:
        """Mask of nodes with R > 0."""
        return self.mesh > 0

    def det(self) -> np.ndarray:
        """Jacobian determinant at every node; NaN at R = 0."""
        with np.errstate(divide="ignore", invalid="ignore"):
            d = self.M * self.r * self.rdot / self.mesh
        return np.where(self.positive, d, np.nan)

    def boundary_miss(self) -> float:
        return float(self.r[-1] - 1.0)


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    penalty: float
    total: float

    @classmethod
    def of(cls, dirichlet: float, penalty: float) -> "EnergyBreakdown":
        return cls(float(dirichlet), float(penalty), float(dirichlet) + float(penalty))

    def to_dict(self):
        return {"dirichlet": self.dirichlet, "penalty": self.penalty, "total": self.total}


def graded_mesh(n: int, eps0: float = 1e-8, ratio: float = 1.05, origin: bool = False) -> np.ndarray:
    """n cells on [eps0, 1]: geometric growth by ``ratio`` from eps0, uniform once
    the geometric cells would exceed the uniform width.  If n is too small for
    the requested ratio the grading is coarsened until it fits.  With ``origin``
    the node R = 0 is prepended (adding one cell)."""
    if n < 2:
        raise ProfileError("need at least two cells")
    if not 0 < eps0 < 1:
        raise ProfileError("eps0 must lie in (0, 1)")
    if ratio <= 1:
        raise ProfileError("grading ratio must exceed 1")
    geo = _geometric_part(n, eps0, ratio)
    while geo is None:
        # too few cells for this grading: coarsen the grading until it fits
        ratio = 1.0 + 1.5 * (ratio - 1.0)
        geo = _geometric_part(n, eps0, ratio)
    j = len(geo) - 1
    uniform = np.linspace(geo[-1], 1.0, n - j + 1)
    mesh = np.concatenate([geo[:-1], uniform])
    mesh[-1] = 1.0
    if origin:
        mesh = np.concatenate([[0.0], mesh])
    return mesh


def _geometric_part(n, eps0, ratio):
    geo = [eps0]
    for j in range(n):
        width = (1.0 - geo[-1]) / (n - j)
        if geo[-1] * (ratio - 1.0) >= width:
            return geo
        geo.append(geo[-1] * ratio)
    return None


def _check_positive(profile: RadialProfile, i: int):
    if profile.mesh[i] <= 0:
        raise ProfileError(f"node {i} sits at R = 0; use the origin extrapolation instead")


def det_of(profile: RadialProfile, i: int) -> float:
    _check_positive(profile, i)
    return profile.M * profile.r[i] * profile.rdot[i] / profile.mesh[i]


def extrapolate_to_origin(R, values) -> float:
    """Quadratic extrapolation to R = 0 through the three smallest samples."""
    R = np.asarray(R, dtype=float)[:3]
    v = np.asarray(values, dtype=float)[:3]
    if R.size < 3:
        raise ProfileError("need three interior nodes to extrapolate to the origin")
    # Lagrange weights at 0
    w0 = R[1] * R[2] / ((R[0] - R[1]) * (R[0] - R[2]))
    w1 = R[0] * R[2] / ((R[1] - R[0]) * (R[1] - R[2]))
    w2 = R[0] * R[1] / ((R[2] - R[0]) * (R[2] - R[1]))
    return float(w0 * v[0] + w1 * v[1] + w2 * v[2])


def det_at_origin(profile: RadialProfile) -> float:
    pos = profile.positive
    if np.count_nonzero(pos) < 3:
        raise ProfileError("need three interior nodes to extrapolate to the origin")
    return extrapolate_to_origin(profile.mesh[pos], profile.det()[pos])


def z_values(spec: PenaltySpec, profile: RadialProfile) -> np.ndarray:
    """z = |grad u|^2/2 + f(det grad u) at every node; NaN at R = 0."""
    R = profile.mesh
    d = profile.det()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = profile.r / R
    z = 0.5 * profile.rdot**2 + 0.5 * profile.M**2 * ratio**2 + f_of_d(spec, np.nan_to_num(d))
    return np.where(profile.positive, z, np.nan)


def z_of(spec: PenaltySpec, profile: RadialProfile, i: int) -> float:
    _check_positive(profile, i)
    R, r, rd = profile.mesh[i], profile.r[i], profile.rdot[i]
    d = profile.M * r * rd / R
    return 0.5 * rd**2 + 0.5 * profile.M**2 * r**2 / R**2 + f_of_d(spec, d)


def radial_energy(spec: PenaltySpec, profile: RadialProfile) -> EnergyBreakdown:
    """2*pi * int_0^1 [ (r'^2 + M^2 r^2/R^2)/2 + rho(M r r'/R) ] R dR by the trapezoid rule.

    The weighted integrand vanishes at R = 0 for finite-energy profiles, so a
    mesh starting at eps0 > 0 is closed with the cell [0, eps0].
    """
    if not (np.all(np.isfinite(profile.r)) and np.all(np.isfinite(profile.rdot))):
        raise ProfileError("profile contains non-finite values")
    R = profile.mesh
    pos = profile.positive
    dir_w = np.zeros_like(R)
    pen_w = np.zeros_like(R)
    Rp = R[pos]
    rp = profile.r[pos]
    rdp = profile.rdot[pos]
    dir_w[pos] = 0.5 * (rdp**2 * Rp + profile.M**2 * rp**2 / Rp)
    pen_w[pos] = rho(spec, profile.M * rp * rdp / Rp) * Rp
    if R[0] > 0:
        R = np.concatenate([[0.0], R])
        dir_w = np.concatenate([[0.0], dir_w])
        pen_w = np.concatenate([[0.0], pen_w])
    dirichlet = 2 * math.pi * np.trapezoid(dir_w, R)
    penalty = 2 * math.pi * np.trapezoid(pen_w, R)
    if not (math.isfinite(dirichlet) and math.isfinite(penalty)):
        raise ProfileError("energy is not finite")
    return EnergyBreakdown.of(dirichlet, penalty)


def _frame(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c, s]), np.array([-s, c])


def gradient_map_at(profile: RadialProfile, i: int, theta: float) -> np.ndarray:
    """grad u = r' e_{MR} (x) e_R + (M r/R) e_{M theta} (x) e_theta."""
    _check_positive(profile, i)
    M = profile.M
    e_R, e_th = _frame(theta)
    e_MR, e_Mth = _frame(M * theta)
    R, r, rd = profile.mesh[i], profile.r[i], profile.rdot[i]
    return rd * np.outer(e_MR, e_R) + (M * r / R) * np.outer(e_Mth, e_th)


def cofactor(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.array([[A[1, 1], -A[1, 0]], [-A[0, 1], A[0, 0]]])


def cofactor_at(profile: RadialProfile, i: int, theta: float) -> np.ndarray:
    return cofactor(gradient_map_at(profile, i, theta))


def null_lagrangian_check(M: int, N: int, profile: RadialProfile, spec: PenaltySpec,
                          n_theta: int = 64) -> float:
    """Weak-form pairing of the radial map with an N-covering test field, N != M.

    Uses the test function g(R) = sin(pi R)^2 and quadrature in theta; the
    result must vanish up to quadrature error.
    """
    if N == M:
        raise ValueError("the pairing is only orthogonal for N != M")
    pos = profile.positive
    R = profile.mesh[pos]
    r = profile.r[pos]
    rd = profile.rdot[pos]
    g = np.sin(np.pi * R) ** 2
    gd = np.pi * np.sin(2 * np.pi * R)
    rp = rho_prime(spec, profile.M * r * rd / R)
    radial = gd * rd + profile.M * r * gd / R * rp + profile.M * N * g * r / R**2 + rp * N * g * rd / R
    theta = np.arange(n_theta) * (2 * np.pi / n_theta)
    angular = np.sum(np.cos((profile.M - N) * theta)) * (2 * np.pi / n_theta)
    return float(np.trapezoid(radial * R, R) * angular)
