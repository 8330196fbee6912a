"""Closed-form right-hand side and diagnostics of the radial Euler-Lagrange ODE.

The equation is  M^2 r/R - r' - R r'' = M rho''(d) d' r  with d = M r r'/R.
The determinant derivative d' has an explicit expression in (R, r, r'),
which turns the equation into an explicit second-order system.

Derivatives of sampled data are taken with Fornberg weights on the
nonuniform mesh.  Three points give the usual nonuniform central stencil;
the default uses nine, because the three-point stencil cannot resolve the
layers where d enters and leaves the penalty transition to 1e-6.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import RadialProfile, z_values
from .penalty import PenaltySpec, rho_prime, rho_second

__all__ = [
    "OdeState",
    "DEFAULT_STENCIL",
    "c_M",
    "window_roots",
    "ddot_closed_form",
    "ddot_values",
    "rddot_explicit",
    "rddot_values",
    "s_quantity",
    "t_quantity",
    "zdot_closed_form",
    "zdot_values",
    "q_function",
    "stencil_weights",
    "derivative",
    "strong_residual",
    "subsolution_quantity",
    "subsolution_values",
]

DEFAULT_STENCIL = 9


@dataclass(frozen=True)
class OdeState:
    R: float
    r: float
    rdot: float

    def __post_init__(self):
        for name in ("R", "r", "rdot"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.R <= 0:
            raise ValueError("R must be positive")

    def det(self, M: int) -> float:
        return M * self.r * self.rdot / self.R

    def ratio(self) -> float:
        """R r'/r, the quantity whose limit at 0 is D_M."""
        return self.R * self.rdot / self.r


def c_M(M: int) -> float:
    if M < 2:
        raise ValueError("c_M is only defined for M >= 2")
    return M / (2.0 * (M - 1))


def window_roots(M: int) -> tuple[float, float]:
    """Roots of x^2 - 2 M^2 x + M^2, bounding the ratio R r'/r where z' >= 0."""
    s = M * math.sqrt(M * M - 1.0)
    return M * M - s, M * M + s


def ddot_values(spec: PenaltySpec, M, R, r, rdot):
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    rdot = np.asarray(rdot, dtype=float)
    p2 = rho_second(spec, M * r * rdot / R)
    num = M * ((R * rdot - r) ** 2 + (M * M - 1.0) * r * r)
    return num / (R**3 + M * M * p2 * r * r * R)


def ddot_closed_form(spec: PenaltySpec, M: int, state: OdeState) -> float:
    """d' = M[(R r' - r)^2 + (M^2 - 1) r^2] / (R^3 + M^2 rho''(d) r^2 R); never negative."""
    return float(ddot_values(spec, M, state.R, state.r, state.rdot))


def rddot_values(spec: PenaltySpec, M, R, r, rdot):
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    rdot = np.asarray(rdot, dtype=float)
    p2 = rho_second(spec, M * r * rdot / R)
    ddot = ddot_values(spec, M, R, r, rdot)
    return (M * M * r / R - rdot - M * p2 * ddot * r) / R


def rddot_explicit(spec: PenaltySpec, M: int, state: OdeState) -> float:
    return float(rddot_values(spec, M, state.R, state.r, state.rdot))


def s_quantity(M, R, r, rdot):
    """(M r - R r')^2 + M^3 r^2 + M R^2 r'^2."""
    return (M * r - R * rdot) ** 2 + M**3 * r * r + M * R * R * rdot * rdot


def t_quantity(M, R, r, rdot):
    return (M**3 * r**4 - (2 * M + M * M) * R * r**3 * rdot
            + (2 + M) * R * R * r * r * rdot**2 - R**3 * r * rdot**3)


def zdot_values(M, R, r, rdot):
    """Closed-form z' at solution points and a mask of degenerate (r = 0) nodes.

    Written as -(M^2 r^2/R^3) + 2 M^2 r r'/R^2 - r'^2/R, which is the ratio
    form multiplied out; degenerate nodes get 0.
    """
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    rdot = np.asarray(rdot, dtype=float)
    degenerate = r == 0.0
    zd = -(M * M * r * r) / R**3 + 2.0 * M * M * r * rdot / R**2 - rdot * rdot / R
    return np.where(degenerate, 0.0, zd), degenerate


def zdot_closed_form(M: int, state: OdeState) -> tuple[float, bool]:
    """z' = -(r^2/R^3)[x^2 - 2 M^2 x + M^2], x = R r'/r.  Returns (value, degenerate)."""
    if state.r == 0.0:
        return 0.0, True
    # multiplied out: the ratio x overflows for tiny r
    R, r, rd = state.R, state.r, state.rdot
    return -(M * M * r * r) / R**3 + 2.0 * M * M * r * rd / R**2 - rd * rd / R, False


def q_function(spec: PenaltySpec, M: int, w, a, b):
    """q(w, a, b) = b w + M rho'(M w a/b) a; strictly increasing in w."""
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr <= 0):
        raise ValueError("b must be positive")
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    out = b_arr * w + M * np.asarray(rho_prime(spec, M * w * a / b_arr)) * a
    return float(out) if out.ndim == 0 else out


def stencil_weights(x, width: int = DEFAULT_STENCIL, order: int = 1):
    """Fornberg weights for the ``order``-th derivative at every node of ``x``.

    Each node uses ``width`` consecutive nodes, centred where possible and
    shifted inward at the ends.  Returns (start, weights) with weights of
    shape (n, width), so that the derivative at node i is
    weights[i] @ y[start[i]:start[i] + width].
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if width < order + 1 or width > n:
        raise ValueError(f"stencil width {width} is incompatible with {n} nodes")
    start = np.clip(np.arange(n) - width // 2, 0, n - width)
    X = x[start[:, None] + np.arange(width)[None, :]] - x[:, None]
    # vectorised Fornberg recursion, expansion point 0 after the shift
    c = np.zeros((n, width, order + 1))
    c[:, 0, 0] = 1.0
    c1 = np.ones(n)
    c4 = X[:, 0].copy()
    for i in range(1, width):
        mn = min(i, order)
        c2 = np.ones(n)
        c5 = c4
        c4 = X[:, i]
        for j in range(i):
            c3 = X[:, i] - X[:, j]
            c2 = c2 * c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[:, i, k] = c1 * (k * c[:, i - 1, k - 1] - c5 * c[:, i - 1, k]) / c2
                c[:, i, 0] = -c1 * c5 * c[:, i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[:, j, k] = (c4 * c[:, j, k] - k * c[:, j, k - 1]) / c3
            c[:, j, 0] = c4 * c[:, j, 0] / c3
        c1 = c2
    return start, c[:, :, order]


def derivative(x, y, width: int = DEFAULT_STENCIL, order: int = 1):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    start, w = stencil_weights(x, width, order)
    Y = y[start[:, None] + np.arange(width)[None, :]]
    return np.einsum("ij,ij->i", w, Y)


def strong_residual(spec: PenaltySpec, M: int, profile: RadialProfile,
                    width: int = DEFAULT_STENCIL) -> np.ndarray:
    """|M^2 r/R - r' - R r'' - M rho''(d) d' r| per node, r'' by differencing r'.

    d' is the closed form; NaN at R = 0.
    """
    R = profile.mesh
    rdd = derivative(R, profile.rdot, width)
    out = np.full(R.shape, np.nan)
    pos = profile.positive
    Rp, rp, rdp = R[pos], profile.r[pos], profile.rdot[pos]
    p2 = rho_second(spec, M * rp * rdp / Rp)
    ddot = ddot_values(spec, M, Rp, rp, rdp)
    out[pos] = np.abs(M * M * rp / Rp - rdp - Rp * rdd[pos] - M * p2 * ddot * rp)
    return out


def subsolution_values(spec: PenaltySpec, M: int, profile: RadialProfile,
                       width: int = DEFAULT_STENCIL):
    """Discrete z'/R + z'' + c_M rho''(d) z' at every node with R > 0.

    Returns (value, squared_variant, scale) where the variant carries z'^2 in
    place of z' and ``scale`` is the sum of the magnitudes of the terms.
    z' and z'' are differences of the sampled z; NaN where undefined.
    """
    cm = c_M(M)
    pos = profile.positive
    R = profile.mesh[pos]
    z = z_values(spec, profile)[pos]
    zd = derivative(R, z, width, 1)
    zdd = derivative(R, z, width, 2)
    p2 = rho_second(spec, profile.det()[pos])
    lap = zd / R + zdd
    full = np.full(profile.mesh.shape, np.nan)
    value, variant, scale = full.copy(), full.copy(), full.copy()
    value[pos] = lap + cm * p2 * zd
    variant[pos] = lap + cm * p2 * zd * zd
    scale[pos] = np.abs(zd) / R + np.abs(zdd) + cm * p2 * np.abs(zd)
    return value, variant, scale


def subsolution_quantity(spec: PenaltySpec, M: int, profile: RadialProfile, i: int,
                         width: int = DEFAULT_STENCIL) -> float:
    if M < 2:
        raise ValueError("the subsolution quantity needs M >= 2")
    if profile.mesh[i] <= 0:
        raise ValueError("node must have R > 0")
    return float(subsolution_values(spec, M, profile, width)[0][i])
